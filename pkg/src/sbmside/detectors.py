"""Detection algorithms on concrete instances: belief propagation with side
information, maximum-likelihood scoring with an exhaustive oracle, and the
partition-and-vote clean-up stage that upgrades weak to exact recovery.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import edge_llr, mismatch, node_llrs
from .errors import GuardError, ParameterError

ML_GUARD = 10**6  # max subsets the brute-force oracle will enumerate


# ---------------------------------------------------------------------------
# belief propagation


@dataclass(frozen=True)
class BPConfig:
    """Belief propagation run configuration.

    The decision threshold nu = log((n-K)/K) is always derived from (n, K),
    never supplied directly.  threshold_mode selects the MAP-style estimate
    {i : R_i >= nu} instead of the fixed-size top-K rule.
    """

    iterations: int
    k: int
    use_side: bool = True
    threshold_mode: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("need at least one iteration")
        if self.k < 1:
            raise ParameterError("k must be positive")

    def nu(self, n):
        if not self.k < n:
            raise ParameterError("k must be smaller than n")
        return math.log((n - self.k) / self.k)


@dataclass(frozen=True)
class BPState:
    """Per-directed-edge messages (CSR slot order) and per-node beliefs."""

    messages: np.ndarray
    beliefs: np.ndarray
    iteration: int

    def message_dict(self, graph):
        owner = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
        return {
            (int(u), int(v)): float(m)
            for u, v, m in zip(owner, graph.indices, self.messages)
        }


def bp_message_fn(x, p, q, nu):
    """Message nonlinearity log((p/q e^{x-nu} + 1)/(e^{x-nu} + 1)), evaluated
    in the stable log1p form; saturates to 0 and log(p/q) at -+infinity."""
    if p == q:
        return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
    if q <= 0:
        raise ParameterError("need q > 0 when p > q")
    with np.errstate(over="ignore"):
        result = np.log1p((p / q - 1.0) / (1.0 + np.exp(nu - np.asarray(x, dtype=float))))
    return float(result) if np.ndim(x) == 0 else result


def _reverse_slots(n, indptr, indices):
    owner = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    keys = owner * n + indices
    return np.searchsorted(keys, indices.astype(np.int64) * n + owner)


def _bp_beliefs(n, p, q, indptr, indices, h, k, iterations):
    """Messages start at zero; iterations-1 synchronous rounds, then the
    belief pass.  Returns (messages, beliefs, nu)."""
    if p > q and q <= 0:
        raise ParameterError("need q > 0 when p > q")
    nu = math.log((n - k) / k)
    ratio_m1 = 0.0 if p == q else p / q - 1.0
    base = h - k * (p - q)
    rev = _reverse_slots(n, indptr, indices)
    msg, beliefs = kernels.bp_rounds(
        np.asarray(indptr, dtype=np.int64),
        rev.astype(np.int64),
        np.ascontiguousarray(base, dtype=float),
        ratio_m1,
        nu,
        iterations - 1,
    )
    return msg, beliefs, nu


def topk(values, k):
    """Ids of the k largest values; ties broken toward the lower id."""
    values = np.asarray(values)
    if k > len(values):
        raise ParameterError("k exceeds the number of values")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:k])


def bp_run(graph, side_obs=None, channel=None, config=None):
    """Belief propagation on a graph instance.

    With use_side=False (or no channel) the node potentials h_i are zero.
    The estimate is the set of K largest beliefs (lower id wins ties), or the
    nu-threshold set in threshold_mode.
    """
    if config is None:
        raise ParameterError("config is required")
    if config.use_side and channel is not None and side_obs is not None:
        h = node_llrs(channel, side_obs)
    else:
        h = np.zeros(graph.n)
    msg, beliefs, nu = _bp_beliefs(
        graph.n,
        graph.p,
        graph.q,
        graph.indptr,
        graph.indices,
        h,
        config.k,
        config.iterations,
    )
    if config.threshold_mode:
        estimate = np.flatnonzero(beliefs >= nu)
    else:
        estimate = topk(beliefs, config.k)
    state = BPState(messages=msg, beliefs=beliefs, iteration=config.iterations)
    return mismatch(graph, estimate), state


# ---------------------------------------------------------------------------
# maximum likelihood


def _score_parts(graph, candidate, h):
    """(negative-inf count, positive-inf count, finite part) of the ML score
    e1(C,C) + e2(C); infinities come from degenerate p, q or one-sided
    zero-likelihood symbols."""
    cand = sorted(int(i) for i in candidate)
    size = len(cand)
    member = np.zeros(graph.n, dtype=bool)
    member[cand] = True
    edges_in = 0
    for u in cand:
        edges_in += int(member[graph.neighbors(u)].sum())
    edges_in //= 2
    absent = size * (size - 1) // 2 - edges_in
    llr_present = edge_llr(graph.p, graph.q, True)
    llr_absent = edge_llr(graph.p, graph.q, False)
    neg = pos = 0
    finite = 0.0
    for count, value in ((edges_in, llr_present), (absent, llr_absent)):
        if count == 0:
            continue
        if value == math.inf:
            pos += count
        elif value == -math.inf:
            neg += count
        else:
            finite += count * value
    if h is not None:
        for i in cand:
            if h[i] == math.inf:
                pos += 1
            elif h[i] == -math.inf:
                neg += 1
            else:
                finite += h[i]
    return neg, pos, finite


def ml_score(graph, side_obs, channel, candidate):
    """Joint LLR of "candidate is the community": pairwise edge LLRs within
    the candidate plus its node LLRs.  Exact +-inf sentinels propagate; a
    candidate carrying both sentinels scores NaN."""
    h = None
    if channel is not None and side_obs is not None:
        h = node_llrs(channel, side_obs)
    neg, pos, finite = _score_parts(graph, candidate, h)
    if neg and pos:
        return math.nan
    if neg:
        return -math.inf
    if pos:
        return math.inf
    return finite


def ml_bruteforce(graph, side_obs=None, channel=None, k=None):
    """Exhaustive maximum-likelihood detection over all K-subsets.

    Ranking uses (fewest -inf terms, most +inf terms, finite score); ties
    resolve to the lexicographically smallest subset.  Guarded by ML_GUARD.
    """
    if k is None:
        k = graph.k
    if math.comb(graph.n, k) > ML_GUARD:
        raise GuardError(f"C({graph.n},{k}) exceeds the enumeration guard")
    h = None
    if channel is not None and side_obs is not None:
        h = node_llrs(channel, side_obs)
    best = None
    best_key = None
    for cand in itertools.combinations(range(graph.n), k):
        neg, pos, finite = _score_parts(graph, cand, h)
        key = (-neg, pos, finite)
        if best_key is None or key > best_key:
            best, best_key = cand, key
    return mismatch(graph, best)


# ---------------------------------------------------------------------------
# voting clean-up


@dataclass(frozen=True)
class VotingConfig:
    """Partition-and-vote stage: nodes split into 1/delta withheld blocks; the
    weak estimator runs on each complement and every withheld node is re-scored
    against the resulting community estimate."""

    delta: float
    weak_estimator: str = "bp"
    iterations: int = 10
    use_side: bool = True

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ParameterError("delta must be in (0, 1)")
        if self.weak_estimator not in ("bp", "ml"):
            raise ParameterError("weak_estimator must be 'bp' or 'ml'")


def _induced_csr(graph, keep):
    """CSR of the subgraph induced on the sorted id array ``keep``."""
    keep_mask = np.zeros(graph.n, dtype=bool)
    keep_mask[keep] = True
    owner = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
    sel = keep_mask[owner] & keep_mask[graph.indices]
    src = np.searchsorted(keep, owner[sel])
    dst = np.searchsorted(keep, graph.indices[sel])
    indptr = np.zeros(len(keep) + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst.astype(np.int32)


def voting_cleanup(graph, side_obs, channel, k, config, return_scores=False):
    """Exact-recovery stage: for each withheld block, estimate the community
    on the complement, then re-admit the K nodes with the largest vote scores
    r_i = sum_{j in estimate} L_G(i,j) + sum_m L_S(i,m)."""
    n = graph.n
    n_blocks = round(1.0 / config.delta)
    block_size = n * config.delta
    if abs(n_blocks - 1.0 / config.delta) > 1e-9 or abs(
        block_size - round(block_size)
    ) > 1e-9:
        raise ParameterError("need n*delta and 1/delta integral")
    block_size = round(block_size)
    k_sub = math.ceil(k * (1 - config.delta))
    h = np.zeros(n)
    if config.use_side and channel is not None and side_obs is not None:
        h = node_llrs(channel, side_obs)
    llr_present = edge_llr(graph.p, graph.q, True)
    llr_absent = edge_llr(graph.p, graph.q, False)
    scores = np.empty(n)
    for b in range(n_blocks):
        block = np.arange(b * block_size, (b + 1) * block_size)
        keep = np.concatenate(
            [np.arange(0, b * block_size), np.arange((b + 1) * block_size, n)]
        )
        sub_indptr, sub_indices = _induced_csr(graph, keep)
        if config.weak_estimator == "bp":
            _, beliefs, _ = _bp_beliefs(
                len(keep),
                graph.p,
                graph.q,
                sub_indptr,
                sub_indices,
                h[keep],
                k_sub,
                config.iterations,
            )
            chat = keep[topk(beliefs, k_sub)]
        else:
            if math.comb(len(keep), k_sub) > ML_GUARD:
                raise GuardError("ML weak estimator exceeds the enumeration guard")
            sub = _SubView(len(keep), graph.p, graph.q, sub_indptr, sub_indices)
            best = None
            best_key = None
            for cand in itertools.combinations(range(len(keep)), k_sub):
                key_parts = _score_parts(sub, cand, h[keep])
                key = (-key_parts[0], key_parts[1], key_parts[2])
                if best_key is None or key > best_key:
                    best, best_key = cand, key
            chat = keep[list(best)]
        chat_mask = np.zeros(n, dtype=bool)
        chat_mask[chat] = True
        for i in block:
            deg = int(chat_mask[graph.neighbors(i)].sum())
            # 0 * inf guards for degenerate p or q
            r = h[i]
            if deg:
                r += deg * llr_present
            if len(chat) - deg:
                r += (len(chat) - deg) * llr_absent
            scores[i] = r
    estimate = topk(scores, k)
    result = mismatch(graph, estimate)
    if return_scores:
        return result, scores
    return result


class _SubView:
    """Minimal graph interface (n, p, q, neighbors) over an induced CSR."""

    def __init__(self, n, p, q, indptr, indices):
        self.n = n
        self.p = p
        self.q = q
        self.indptr = indptr
        self.indices = indices

    def neighbors(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]
