"""Kernel backend selection.

The compiled Cython kernels are used when available; ``SBMSIDE_BACKEND``
(``compiled`` | ``python``) forces a choice.  Both backends expose
``bp_rounds`` and ``pop_level_sum`` with identical contracts.
"""

import os

from . import _kernels_py

_choice = os.environ.get("SBMSIDE_BACKEND", "").lower()

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _kernels_py

BACKEND = _impl.BACKEND
bp_rounds = _impl.bp_rounds
pop_level_sum = _impl.pop_level_sum


def available_backends():
    names = ["python"]
    try:
        from . import _kernels_c  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
