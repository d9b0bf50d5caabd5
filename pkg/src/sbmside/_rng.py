"""Counter-based random number streams.

All sampling in this package goes through Philox streams keyed by
``(seed, domain)``.  Philox is counter-based, so a stream is a pure function
of its key: trials can run in parallel in any order and still produce
byte-identical results.  Per-trial streams are derived as ``seed + trial``
(documented stream-splitting convention), with a second key word separating
usage domains (graph wiring, community draw, side info, ...).

Kernel-internal uniform picks use splitmix64 on a flat element index so the
compiled and pure-python backends consume identical integer streams.
"""

import numpy as np

MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)

# usage-domain key words (second Philox key word)
DOM_COMMUNITY = 0x636F6D6D
DOM_EDGES = 0x65646765
DOM_SIDE = 0x73696465
DOM_TREE = 0x74726565
DOM_POP = 0x706F706C

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def stream(seed, domain, *extra):
    """Philox generator fully determined by (seed, domain, *extra)."""
    key = int(seed) & 0xFFFFFFFFFFFFFFFF
    sub = int(domain) & 0xFFFFFFFFFFFFFFFF
    for word in extra:
        # fold extra path components into the second key word
        sub = (sub * 0x9E3779B97F4A7C15 + int(word)) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=[key, sub]))


def splitmix64(x):
    """Vectorized splitmix64 finalizer; x is a uint64 ndarray (consumed)."""
    x = (x + _SM_GAMMA) & MASK64
    x ^= x >> np.uint64(30)
    x = (x * _SM_M1) & MASK64
    x ^= x >> np.uint64(27)
    x = (x * _SM_M2) & MASK64
    x ^= x >> np.uint64(31)
    return x


def bounded_picks(seed, start, count, bound):
    """Deterministic uniform ints in [0, bound) for flat indices
    start..start+count, identical to the compiled kernel's stream."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    mixed = splitmix64(np.uint64(seed) ^ (idx * _SM_GAMMA & MASK64))
    return (((mixed >> np.uint64(32)) * np.uint64(bound)) >> np.uint64(32)).astype(
        np.int64
    )
