"""Shared exception types."""


class ParameterError(ValueError):
    """Invalid model or algorithm parameter."""


class GuardError(RuntimeError):
    """A resource guard (combinatorial or memory cap) was exceeded."""


class TreeSizeError(GuardError):
    """Sampled tree would exceed the node-count cap."""


class InvalidSymbolError(ValueError):
    """Observed symbol has zero likelihood under both labels."""


class InfeasibleExponentError(RuntimeError):
    """Chernoff objective is -infinity over the whole search interval."""


class UnsupportedRegimeError(ValueError):
    """Trend coefficients outside the regime the threshold theory covers."""


class NumericError(RuntimeError):
    """Non-finite intermediate in an iterative computation."""
