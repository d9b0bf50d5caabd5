"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module ``_kernels_c``; used as a fallback when
the extension is unavailable (or when forced via SBMSIDE_BACKEND=python).
Integer pick streams are bit-identical to the compiled backend; float results
agree to the last few ulps (numpy reduces pairwise, the C loops are strictly
sequential, and transcendental functions may differ by an ulp).  Each backend
is individually deterministic.
"""

import numpy as np

from ._rng import bounded_picks

BACKEND = "python"

_PICK_CHUNK = 1 << 24  # flat picks per gather batch; >= max single-sample count


def bp_rounds(indptr, rev, base, ratio_m1, nu, rounds):
    """Run synchronous message rounds plus the final belief pass.

    Messages live in CSR edge slots: slot e of node i holds the message
    i -> indices[e].  ``rev[e]`` is the slot of the reverse edge.  Returns
    (messages_after_rounds, beliefs).
    """
    n = len(indptr) - 1
    n_edges = len(rev)
    owner = np.repeat(np.arange(n), np.diff(indptr))
    msg = np.zeros(n_edges)
    for _ in range(rounds):
        g = _msg_fn(msg[rev], ratio_m1, nu)
        s = np.bincount(owner, weights=g, minlength=n)
        msg = base[owner] + s[owner] - g
    g = _msg_fn(msg[rev], ratio_m1, nu)
    beliefs = base + np.bincount(owner, weights=g, minlength=n)
    return msg, beliefs


def _msg_fn(x, ratio_m1, nu):
    # log1p(r / (1 + e^{nu-x})); exp saturates cleanly at +-inf inputs
    with np.errstate(over="ignore"):
        return np.log1p(ratio_m1 / (1.0 + np.exp(nu - x)))


def pop_level_sum(pool, counts, seed, out):
    """Accumulate, for each sample i, the sum of counts[i] uniform picks from
    ``pool`` into out[i].  Picks use splitmix64 on the flat child index."""
    n = len(counts)
    bound = len(pool)
    offsets = np.empty(n + 1, dtype=np.int64)
    offsets[0] = 0
    np.cumsum(counts, out=offsets[1:])
    if n and counts.max() > _PICK_CHUNK:
        raise ValueError("single sample exceeds pick chunk")
    lo = 0
    while lo < n:
        # whole samples only, so per-sample summation order matches the C loop
        hi = int(np.searchsorted(offsets, offsets[lo] + _PICK_CHUNK, "right")) - 1
        hi = max(hi, lo + 1)
        start = int(offsets[lo])
        vals = pool[bounded_picks(seed, start, int(offsets[hi]) - start, bound)]
        bounds = (offsets[lo:hi] - start).astype(np.intp)
        seg = np.zeros(hi - lo)
        inside = bounds < len(vals)  # trailing zero-count samples start at end
        if inside.any():
            seg[inside] = np.add.reduceat(vals, bounds[inside])
        seg[counts[lo:hi] == 0] = 0.0
        out[lo:hi] += seg
        lo = hi
    return out
