"""Data model: planted-community graphs, side-information channels,
log-likelihood ratios, divergences, and detection scoring.

The graph ensemble has n nodes and a hidden community of size K; a pair is
wired with probability p when both endpoints are planted and q otherwise.
Each node additionally carries M conditionally independent finite-alphabet
features whose per-symbol likelihoods depend on the node's membership.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import DOM_COMMUNITY, DOM_EDGES, DOM_SIDE, stream
from .errors import InvalidSymbolError, ParameterError

SIZE_MODES = ("deterministic", "binomial")


# ---------------------------------------------------------------------------
# side-information channels


@dataclass(frozen=True)
class SideChannel:
    """M conditionally independent finite-alphabet features.

    ``alpha_plus[m][l]`` is P(y_m = symbol l | node planted) and
    ``alpha_minus[m][l]`` the same probability for an unplanted node.
    """

    alpha_plus: tuple
    alpha_minus: tuple

    def __post_init__(self):
        if len(self.alpha_plus) != len(self.alpha_minus):
            raise ParameterError("feature count mismatch")
        for ap, am in zip(self.alpha_plus, self.alpha_minus):
            for vec in (ap, am):
                if np.any(vec < 0):
                    raise ParameterError("negative likelihood")
                if abs(float(vec.sum()) - 1.0) > 1e-12:
                    raise ParameterError("likelihood row does not sum to 1")
            if len(ap) != len(am):
                raise ParameterError("alphabet size mismatch")

    @property
    def m(self):
        return len(self.alpha_plus)

    @property
    def alphabet_sizes(self):
        return tuple(len(a) for a in self.alpha_plus)

    def llr_table(self, feature):
        """Per-symbol LLR h = log(alpha_plus/alpha_minus); +-inf where one
        side has zero likelihood, NaN where both do (symbol cannot occur)."""
        ap = self.alpha_plus[feature]
        am = self.alpha_minus[feature]
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.log(ap) - np.log(am)
        h[(ap == 0) & (am > 0)] = -np.inf
        h[(ap > 0) & (am == 0)] = np.inf
        h[(ap == 0) & (am == 0)] = np.nan
        return h

    def is_uninformative(self):
        return all(
            np.array_equal(ap, am)
            for ap, am in zip(self.alpha_plus, self.alpha_minus)
        )

    def sample(self, labels, rng):
        """Symbol matrix (len(labels), M) drawn feature-wise by label."""
        labels = np.asarray(labels)
        out = np.empty((len(labels), self.m), dtype=np.int16)
        planted = labels == 1
        for feat in range(self.m):
            u = rng.random(len(labels))
            cdf_p = np.cumsum(self.alpha_plus[feat])
            cdf_m = np.cumsum(self.alpha_minus[feat])
            sym = np.where(
                planted,
                np.searchsorted(cdf_p, u, side="right"),
                np.searchsorted(cdf_m, u, side="right"),
            )
            # guard against u landing on the closed top end of the cdf
            out[:, feat] = np.minimum(sym, len(cdf_p) - 1)
        return out


def _as_prob_vector(values):
    vec = np.asarray(values, dtype=float)
    vec.setflags(write=False)
    return vec


def noisy_label_channel(alpha):
    """Binary feature equal to the true label flipped with probability alpha."""
    if not 0 < alpha < 0.5:
        raise ParameterError("alpha must be in (0, 0.5)")
    return SideChannel(
        alpha_plus=(_as_prob_vector([1 - alpha, alpha]),),
        alpha_minus=(_as_prob_vector([alpha, 1 - alpha]),),
    )


def partial_reveal_channel(eps):
    """Ternary feature: reveal-1, reveal-0, erased (probability eps)."""
    if not 0 < eps < 1:
        raise ParameterError("eps must be in (0, 1)")
    return SideChannel(
        alpha_plus=(_as_prob_vector([1 - eps, 0.0, eps]),),
        alpha_minus=(_as_prob_vector([0.0, 1 - eps, eps]),),
    )


def custom_channel(alpha_plus, alpha_minus):
    plus = tuple(_as_prob_vector(row) for row in alpha_plus)
    minus = tuple(_as_prob_vector(row) for row in alpha_minus)
    return SideChannel(alpha_plus=plus, alpha_minus=minus)


def replicated_channel(base, m):
    """m independent copies of a (single- or multi-) feature channel."""
    if m < 1:
        raise ParameterError("m must be >= 1")
    return SideChannel(
        alpha_plus=base.alpha_plus * m, alpha_minus=base.alpha_minus * m
    )


def make_channel(kind, **params):
    """Channel factory; kind in {noisy_label, partial_reveal, custom, replicated}."""
    kinds = {
        "noisy_label": noisy_label_channel,
        "partial_reveal": partial_reveal_channel,
        "custom": custom_channel,
        "replicated": replicated_channel,
    }
    if kind not in kinds:
        raise ParameterError(f"unknown channel kind {kind!r}")
    return kinds[kind](**params)


def lambda_side(channel):
    """Expected planted-side likelihood ratio: product over features of
    sum alpha_plus^2/alpha_minus (= 1 + chi-squared divergence >= 1)."""
    result = 1.0
    for ap, am in zip(channel.alpha_plus, channel.alpha_minus):
        pos = ap > 0
        if np.any(pos & (am == 0)):
            return math.inf
        result *= float(np.sum(ap[pos] ** 2 / am[pos]))
    return result


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class GraphInstance:
    """Planted-community graph in CSR adjacency form.

    ``community`` is sorted; ``indices[indptr[i]:indptr[i+1]]`` lists the
    (sorted) neighbors of node i.  Instances are immutable after construction
    and safe to share across threads.
    """

    n: int
    k: int
    p: float
    q: float
    size_mode: str
    seed: int
    community: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    _member_mask: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[self.community] = True
        mask.setflags(write=False)
        object.__setattr__(self, "_member_mask", mask)
        for arr in (self.community, self.indptr, self.indices):
            arr.setflags(write=False)

    @property
    def realized_size(self):
        return len(self.community)

    @property
    def num_edges(self):
        return len(self.indices) // 2

    @property
    def member_mask(self):
        return self._member_mask

    def neighbors(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degrees(self):
        return np.diff(self.indptr)

    def community_set(self):
        return set(int(i) for i in self.community)


def _check_graph_params(n, k, p, q):
    # p = 1 and k = n are admitted as degenerate cases (complete planted graph)
    if not (0 <= q <= p <= 1):
        raise ParameterError("need 0 <= q <= p <= 1")
    if not 0 < k <= n:
        raise ParameterError("need 0 < k <= n")


def _decode_pairs(e, n):
    """Map lexicographic pair ids over {(i,j): i<j<n} back to (i, j)."""
    e = np.asarray(e, dtype=np.int64)
    # invert e = i*n - i*(i+1)/2 + (j - i - 1) by the quadratic formula,
    # then fix float rounding
    i = np.floor((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8.0 * e)) / 2).astype(
        np.int64
    )
    first = i * n - i * (i + 1) // 2
    too_far = first > e
    i[too_far] -= 1
    first = i * n - i * (i + 1) // 2
    nxt = first + (n - 1 - i)
    overshoot = e >= nxt
    i[overshoot] += 1
    first = i * n - i * (i + 1) // 2
    j = e - first + i + 1
    return i, j


def _sample_pair_ids(rng, n_pairs, prob):
    """Uniform random subset of pair ids with Binomial(n_pairs, prob) size."""
    if prob <= 0 or n_pairs == 0:
        return np.empty(0, dtype=np.int64)
    if prob >= 1:
        return np.arange(n_pairs, dtype=np.int64)
    m = rng.binomial(n_pairs, prob)
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if 3 * m >= n_pairs:
        # dense: per-pair Bernoulli is cheaper than rejection
        return np.flatnonzero(rng.random(n_pairs) < prob).astype(np.int64)
    chosen = np.unique(rng.integers(0, n_pairs, size=int(m * 1.05) + 16))
    while len(chosen) < m:
        extra = rng.integers(0, n_pairs, size=m)
        chosen = np.unique(np.concatenate([chosen, extra]))
    return rng.permutation(chosen)[:m]


def generate_graph(n, k, p, q, size_mode="deterministic", seed=0):
    """Draw a graph instance; reproducible from (seed, parameters).

    The community is a uniform size-K subset (deterministic mode) or an
    i.i.d. Bernoulli(K/n) membership draw (binomial mode).  Sparse wiring
    samples edge counts and positions directly instead of testing every
    pair, so generation is O(edges) at n = 1e4.
    """
    _check_graph_params(n, k, p, q)
    if size_mode not in SIZE_MODES:
        raise ParameterError(f"size_mode must be one of {SIZE_MODES}")
    rng_comm = stream(seed, DOM_COMMUNITY)
    if size_mode == "deterministic":
        community = np.sort(rng_comm.choice(n, size=k, replace=False))
    else:
        community = np.flatnonzero(rng_comm.random(n) < k / n)
    community = community.astype(np.int64)

    rng_edges = stream(seed, DOM_EDGES)
    # union of Bernoulli(q) on all pairs and Bernoulli((p-q)/(1-q)) on
    # community pairs reproduces intra probability p, extra probability q
    all_ids = _sample_pair_ids(rng_edges, n * (n - 1) // 2, q)
    kk = len(community)
    boost = 0.0 if p == q else (p - q) / (1.0 - q)
    comm_ids = _sample_pair_ids(rng_edges, kk * (kk - 1) // 2, boost)
    if len(comm_ids):
        ci, cj = _decode_pairs(comm_ids, kk)
        u, v = community[ci], community[cj]
        # global pair id of (u, v) with u < v
        comm_global = u * n - u * (u + 1) // 2 + (v - u - 1)
        all_ids = np.union1d(all_ids, comm_global)
    ui, vj = _decode_pairs(np.sort(all_ids), n)

    # symmetric CSR
    src = np.concatenate([ui, vj])
    dst = np.concatenate([vj, ui])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return GraphInstance(
        n=n,
        k=k,
        p=float(p),
        q=float(q),
        size_mode=size_mode,
        seed=int(seed),
        community=community,
        indptr=indptr,
        indices=dst.astype(np.int32),
    )


# ---------------------------------------------------------------------------
# side observations


@dataclass(frozen=True)
class SideObservations:
    """Per-node symbol indices, one column per channel feature."""

    symbols: np.ndarray

    def __post_init__(self):
        self.symbols.setflags(write=False)

    @property
    def rows(self):
        return self.symbols.shape[0]

    @property
    def cols(self):
        return self.symbols.shape[1]


def sample_side_info(channel, graph, seed=0):
    """Draw y_{i,m} from alpha_plus rows for planted nodes, alpha_minus
    otherwise, independently across nodes and features."""
    rng = stream(seed, DOM_SIDE)
    labels = graph.member_mask.astype(np.int8)
    return SideObservations(symbols=channel.sample(labels, rng))


# ---------------------------------------------------------------------------
# log-likelihood ratios and divergences


def edge_llr(p, q, present):
    """LLR of one edge observation: log(p/q) if present, else the absent-edge
    ratio.  Zero probabilities yield exact +-inf sentinels.  Antisymmetric
    under swapping p and q."""
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ParameterError("edge probabilities must lie in [0, 1]")
    if p == q:
        return 0.0
    if present:
        if q == 0:
            return math.inf
        return -math.inf if p == 0 else math.log(p / q)
    if p == 1:
        return -math.inf
    return math.inf if q == 1 else math.log((1 - p) / (1 - q))


def node_llr(channel, observation_row):
    """Total side LLR of one node: sum over features of the symbol LLR.

    One-sided zero-likelihood symbols force an exact +-inf sentinel;
    combinations impossible under both labels raise InvalidSymbolError.
    """
    row = np.asarray(observation_row)
    total = 0.0
    pos = neg = 0
    for feat in range(channel.m):
        sym = int(row[feat])
        ap = channel.alpha_plus[feat][sym]
        am = channel.alpha_minus[feat][sym]
        if ap == 0 and am == 0:
            raise InvalidSymbolError(f"symbol {sym} of feature {feat} cannot occur")
        if am == 0:
            pos += 1
        elif ap == 0:
            neg += 1
        else:
            total += math.log(ap / am)
    if pos and neg:
        raise InvalidSymbolError("observation impossible under both labels")
    if pos:
        return math.inf
    if neg:
        return -math.inf
    return total


def node_llrs(channel, observations):
    """Vectorized node_llr over all rows of a SideObservations."""
    sym = observations.symbols
    total = np.zeros(sym.shape[0])
    pos = np.zeros(sym.shape[0], dtype=bool)
    neg = np.zeros(sym.shape[0], dtype=bool)
    for feat in range(channel.m):
        table = channel.llr_table(feat)
        vals = table[sym[:, feat]]
        if np.any(np.isnan(vals)):
            raise InvalidSymbolError("observed symbol has zero likelihood twice")
        pos |= vals == np.inf
        neg |= vals == -np.inf
        total = total + np.where(np.isfinite(vals), vals, 0.0)
    if np.any(pos & neg):
        raise InvalidSymbolError("observation impossible under both labels")
    total[pos] = np.inf
    total[neg] = -np.inf
    return total


def lambda_snr(n, k, p, q):
    """Signal-to-noise ratio K^2 (p-q)^2 / ((n-K) q)."""
    if q <= 0 or k >= n:
        raise ParameterError("need q > 0 and k < n")
    return k * k * (p - q) ** 2 / ((n - k) * q)


def _bernoulli_kl(a, b):
    """D(Bern(a) || Bern(b)) with the 0 log 0 = 0 convention."""
    total = 0.0
    for x, y in ((a, b), (1 - a, 1 - b)):
        if x == 0:
            continue
        if y == 0:
            return math.inf
        total += x * math.log(x / y)
    return total


def _discrete_kl(w, v):
    total = 0.0
    for x, y in zip(w, v):
        if x == 0:
            continue
        if y == 0:
            return math.inf
        total += x * math.log(x / y)
    return float(total)


@dataclass(frozen=True)
class DivergenceReport:
    d_pq: float
    d_qp: float
    d_vu: tuple
    d_uv: tuple

    @property
    def d_vu_total(self):
        return sum(self.d_vu)

    @property
    def d_uv_total(self):
        return sum(self.d_uv)


def divergences(p, q, channel=None):
    """KL divergences of the edge distributions (both directions) and of each
    side feature; positive-alpha_plus / zero-alpha_minus symbols give inf."""
    d_vu = ()
    d_uv = ()
    if channel is not None:
        d_vu = tuple(
            _discrete_kl(ap, am)
            for ap, am in zip(channel.alpha_plus, channel.alpha_minus)
        )
        d_uv = tuple(
            _discrete_kl(am, ap)
            for ap, am in zip(channel.alpha_plus, channel.alpha_minus)
        )
    return DivergenceReport(
        d_pq=_bernoulli_kl(p, q), d_qp=_bernoulli_kl(q, p), d_vu=d_vu, d_uv=d_uv
    )


# ---------------------------------------------------------------------------
# detection scoring


@dataclass(frozen=True)
class DetectionResult:
    """Estimated community with its misclassification score."""

    estimate: frozenset
    zeta: float
    sym_diff: int


def mismatch(graph, estimate):
    """Symmetric difference against the planted community; zeta normalizes by
    2K so a size-K estimate scores in [0, 1]."""
    est = frozenset(int(i) for i in estimate)
    if est and (min(est) < 0 or max(est) >= graph.n):
        raise ParameterError("estimate contains out-of-range node ids")
    truth = graph.community_set()
    sym = len(est.symmetric_difference(truth))
    return DetectionResult(estimate=est, zeta=sym / (2 * graph.k), sym_diff=sym)


# ---------------------------------------------------------------------------
# serialization


def save_graph(graph, path):
    """Edge-list text format: header `n k p q size_mode seed`, one `u v` line
    per edge, then a `community:` line listing planted ids."""
    with open(path, "w") as fh:
        fh.write(
            f"{graph.n} {graph.k} {graph.p!r} {graph.q!r} "
            f"{graph.size_mode} {graph.seed}\n"
        )
        for u in range(graph.n):
            for v in graph.neighbors(u):
                if u < v:
                    fh.write(f"{u} {v}\n")
        fh.write("community: " + " ".join(str(i) for i in graph.community) + "\n")


def load_graph(path):
    with open(path) as fh:
        header = fh.readline().split()
        n, k = int(header[0]), int(header[1])
        p, q = float(header[2]), float(header[3])
        size_mode, seed = header[4], int(header[5])
        src, dst = [], []
        community = np.empty(0, dtype=np.int64)
        for line in fh:
            if line.startswith("community:"):
                ids = line.split(":", 1)[1].split()
                community = np.array([int(i) for i in ids], dtype=np.int64)
                break
            u, v = line.split()
            src.append(int(u))
            dst.append(int(v))
    u = np.array(src + dst, dtype=np.int64)
    v = np.array(dst + src, dtype=np.int64)
    order = np.lexsort((v, u))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, u + 1, 1)
    np.cumsum(indptr, out=indptr)
    return GraphInstance(
        n=n,
        k=k,
        p=p,
        q=q,
        size_mode=size_mode,
        seed=seed,
        community=np.sort(community),
        indptr=indptr,
        indices=v[order].astype(np.int32),
    )


def save_side(observations, path):
    np.savetxt(path, observations.symbols, fmt="%d", delimiter=",")


def load_side(path):
    data = np.loadtxt(path, delimiter=",", dtype=np.int16, ndmin=2)
    return SideObservations(symbols=data)
