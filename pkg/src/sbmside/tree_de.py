"""Poisson-tree inference oracle and density evolution.

The labeled Galton-Watson tree mirrors a node's local neighborhood: a planted
node has Poi(Kp) planted children, an unplanted one Poi(Kq), and every node
has Poi((n-K)q) unplanted children.  The exact belief recursion on that tree
is evaluated three ways: explicit sampled trees (small branching), a
level-population Monte Carlo that samples the recursion distributionally
(large branching), and the deterministic Gaussian density evolution v_t.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, expit

from . import kernels
from ._rng import DOM_POP, DOM_TREE, stream
from .core import SideObservations, node_llrs
from .errors import NumericError, ParameterError, TreeSizeError

NODE_CAP = 10_000_000
ATOM_CAP = 4096


def _q_func(x):
    """Standard normal tail probability."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _msg_vec(x, p, q, nu):
    if p == q:
        return np.zeros_like(np.asarray(x, dtype=float))
    with np.errstate(over="ignore"):
        return np.log1p((p / q - 1.0) / (1.0 + np.exp(nu - np.asarray(x, dtype=float))))


def side_atoms(channel, label):
    """(weights, llr) of the full side vector conditioned on the label,
    enumerated over the product alphabet (zero-weight outcomes dropped)."""
    weights = np.array([1.0])
    llrs = np.array([0.0])
    for ap, am in zip(channel.alpha_plus, channel.alpha_minus):
        w_sym = ap if label == 1 else am
        with np.errstate(divide="ignore", invalid="ignore"):
            h_sym = np.log(ap) - np.log(am)
        h_sym = np.where((ap > 0) & (am == 0), np.inf, h_sym)
        h_sym = np.where((ap == 0) & (am > 0), -np.inf, h_sym)
        keep = w_sym > 0
        if len(weights) * int(keep.sum()) > ATOM_CAP:
            raise ParameterError("side alphabet too large to enumerate")
        weights = np.outer(weights, w_sym[keep]).ravel()
        llrs = (llrs[:, None] + h_sym[keep][None, :]).ravel()
    return weights, llrs


# ---------------------------------------------------------------------------
# explicit trees


@dataclass(frozen=True)
class TreeInstance:
    """Forest of independently drawn trees in per-level array form.

    Level 0 holds the roots.  ``parents[l]`` maps level-l nodes (l >= 1) to
    their parent's index in level l-1.
    """

    n: int
    k: int
    p: float
    q: float
    depth: int
    n_trees: int
    labels: tuple
    symbols: tuple
    parents: tuple

    @property
    def n_nodes(self):
        return sum(len(lv) for lv in self.labels)


def sample_tree(n, k, p, q, channel, depth, seed, n_trees=1, root_label=None):
    """Sample the labeled tree(s) with side information.

    Root labels are Bernoulli(K/n) unless ``root_label`` forces a class.
    Raises TreeSizeError once the forest exceeds NODE_CAP nodes.
    """
    if depth < 0:
        raise ParameterError("depth must be >= 0")
    rng = stream(seed, DOM_TREE, 0 if root_label is None else root_label + 1)
    if root_label is None:
        labels = [(rng.random(n_trees) < k / n).astype(np.uint8)]
    else:
        labels = [np.full(n_trees, root_label, dtype=np.uint8)]
    symbols = [channel.sample(labels[0], rng)] if channel is not None else [None]
    parents = []
    total = n_trees
    for _ in range(depth):
        cur = labels[-1]
        lam_one = np.where(cur == 1, k * p, k * q)
        n_one = rng.poisson(lam_one)
        n_zero = rng.poisson((n - k) * q, size=len(cur))
        counts = n_one + n_zero
        total += int(counts.sum())
        if total > NODE_CAP:
            raise TreeSizeError(f"forest exceeds {NODE_CAP} nodes")
        parent = np.repeat(np.arange(len(cur), dtype=np.int64), counts)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        child_pos = np.arange(len(parent), dtype=np.int64) - offsets[parent]
        child_labels = (child_pos < n_one[parent]).astype(np.uint8)
        labels.append(child_labels)
        parents.append(parent)
        symbols.append(
            channel.sample(child_labels, rng) if channel is not None else None
        )
    return TreeInstance(
        n=n,
        k=k,
        p=float(p),
        q=float(q),
        depth=depth,
        n_trees=n_trees,
        labels=tuple(labels),
        symbols=tuple(symbols),
        parents=tuple(parents),
    )


def tree_llr(tree, channel, p=None, q=None, nu=None):
    """Root LLR Gamma by leaf-to-root dynamic programming.

    Nodes at the bottom level carry Gamma = h (empty recursion); every
    shallower level applies -K(p-q) + h + sum of M(child Gamma).  Returns a
    float for a single tree, an array for a forest.
    """
    p = tree.p if p is None else p
    q = tree.q if q is None else q
    nu = math.log((tree.n - tree.k) / tree.k) if nu is None else nu
    offset = tree.k * (p - q)

    def level_h(level):
        if channel is None or tree.symbols[level] is None:
            return np.zeros(len(tree.labels[level]))
        return node_llrs(channel, SideObservations(tree.symbols[level].copy()))

    gamma = level_h(tree.depth)
    for level in range(tree.depth - 1, -1, -1):
        acc = np.bincount(
            tree.parents[level],
            weights=_msg_vec(gamma, p, q, nu),
            minlength=len(tree.labels[level]),
        )
        gamma = level_h(level) - offset + acc
    if tree.n_trees == 1:
        return float(gamma[0])
    return gamma


# ---------------------------------------------------------------------------
# level-population Monte Carlo


@dataclass(frozen=True)
class PopulationTrace:
    """Per-level statistics of the sampled belief recursion.

    ``b_hat[t]`` estimates b_t = E[e^W / (1 + e^{W-nu})] with W the planted
    depth-t subtree LLR; z_mean/z_var track the side-free part Z per class.
    Root Gamma samples are stored when requested.
    """

    nu: float
    lam: float
    depth: int
    pools: int
    b_hat: np.ndarray
    b_se: np.ndarray
    z_mean: dict
    z_var: dict
    root_gamma: dict = field(default=None)


def _pop_seed(seed, level, cls, tag):
    base = (int(seed) * 0x9E3779B97F4A7C15 + level * 0x1000193 + cls * 0x10001 + tag)
    return base & 0xFFFFFFFFFFFFFFFF


def _fresh_u(channel, label, size, rng):
    sym = channel.sample(np.full(size, label, dtype=np.int8), rng)
    return node_llrs(channel, SideObservations(sym))


def _z_batch(size, lam_one, lam_zero, pool1, pool0, offset, counts_rng, seed1, seed0):
    z = np.full(size, -offset)
    c1 = counts_rng.poisson(lam_one, size).astype(np.int64)
    kernels.pop_level_sum(pool1, c1, seed1, z)
    c0 = counts_rng.poisson(lam_zero, size).astype(np.int64)
    kernels.pop_level_sum(pool0, c0, seed0, z)
    return z


def population_run(
    n, k, p, q, channel, depth, seed, pools=30000, root_samples=0
):
    """Sample the belief recursion level by level.

    Level-1 values are exact (Poisson thinning over the side atoms); deeper
    levels bootstrap child values from the previous level's pool, which is
    the standard density-evolution sampling scheme.  Pools are built for
    levels 1..depth-1; the final level is sampled with ``root_samples``
    draws per class (kept as root Gamma samples) when requested, otherwise
    with the pool size.
    """
    if depth < 1:
        raise ParameterError("population sampling needs depth >= 1")
    nu = math.log((n - k) / k)
    lam = k * k * (p - q) ** 2 / ((n - k) * q) if q > 0 else math.nan
    offset = k * (p - q)
    lam_zero = (n - k) * q
    lam_one = {1: k * p, 0: k * q}
    atoms = {c: side_atoms(channel, c) for c in (0, 1)}
    m_atoms = {c: _msg_vec(atoms[c][1], p, q, nu) for c in (0, 1)}

    b0 = float(
        np.sum(atoms[1][0] * np.where(np.isneginf(atoms[1][1]), 0.0,
                                      math.exp(nu) * expit(atoms[1][1] - nu)))
    )
    b_hat = [b0]
    b_se = [0.0]
    z_mean = {0: [], 1: []}
    z_var = {0: [], 1: []}

    def record_b(w1):
        vals = math.exp(nu) * expit(w1 - nu)
        b_hat.append(float(vals.mean()))
        b_se.append(float(vals.std(ddof=1) / math.sqrt(len(vals))))

    def level_one(cls, size, rng):
        # exact: children split into independent Poissons per side atom
        z = np.full(size, -float(offset))
        for c_child in (0, 1):
            rate = (lam_one[cls] if c_child == 1 else lam_zero) * atoms[c_child][0]
            for r, m_val in zip(rate, m_atoms[c_child]):
                z += m_val * rng.poisson(r, size)
        return z

    def draw_level(level, cls, size, pool, rng):
        if level == 1:
            return level_one(cls, size, rng)
        return _z_batch(
            size,
            lam_one[cls],
            lam_zero,
            pool[1],
            pool[0],
            offset,
            rng,
            _pop_seed(seed, level, cls, 1),
            _pop_seed(seed, level, cls, 0),
        )

    pool = None
    root_gamma = {} if root_samples > 0 else None
    for level in range(1, depth + 1):
        final = level == depth
        size = root_samples if (final and root_samples > 0) else pools
        new_pool = {}
        for cls in (0, 1):
            rng = stream(seed, DOM_POP, level, cls)
            z = draw_level(level, cls, size, pool, rng)
            z_mean[cls].append(float(z.mean()))
            z_var[cls].append(float(z.var(ddof=1)))
            w = z + _fresh_u(channel, cls, size, rng)
            if cls == 1:
                record_b(w)
            if final and root_samples > 0:
                root_gamma[cls] = w
            if not final:
                new_pool[cls] = np.ascontiguousarray(_msg_vec(w, p, q, nu))
        pool = new_pool
    return PopulationTrace(
        nu=nu,
        lam=lam,
        depth=depth,
        pools=pools,
        b_hat=np.array(b_hat),
        b_se=np.array(b_se),
        z_mean={c: np.array(v) for c, v in z_mean.items()},
        z_var={c: np.array(v) for c, v in z_var.items()},
        root_gamma=root_gamma,
    )


def measure_b_sequence(n, k, p, q, channel, t_max, seed, pools=20000):
    """Monte Carlo estimates of b_0..b_{t_max} ("measurement mode")."""
    if t_max == 0:
        trace = population_run(n, k, p, q, channel, 1, seed, pools=pools)
        return trace.b_hat[:1], trace.b_se[:1]
    trace = population_run(n, k, p, q, channel, t_max, seed, pools=pools)
    return trace.b_hat, trace.b_se


# ---------------------------------------------------------------------------
# tree MAP error


@dataclass(frozen=True)
class TreeErrorReport:
    pe: float
    pe0: float
    pe1: float
    stderr: float
    stderr0: float
    stderr1: float
    trials: int
    mode: str


def _binom_se(p_hat, trials):
    return math.sqrt(max(p_hat * (1 - p_hat), 1.0 / trials) / trials)


def tree_map_error(n, k, p, q, channel, depth, trials, seed, mode="auto"):
    """Monte Carlo error of the MAP rule 1{Gamma >= nu} at the tree root.

    Sampling is stratified per class; pe = (K/n) P(miss) + (1-K/n) P(false
    alarm).  mode 'explicit' materializes trees (subject to NODE_CAP),
    'population' samples the recursion level-wise, 'auto' picks by the
    expected node count.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    nu = math.log((n - k) / k)
    if mode == "auto":
        branch = (n - k) * q + max(k * p, k * q)
        est = 2.0 * trials
        layer = 2.0 * trials
        for _ in range(depth):
            layer *= max(branch, 1e-9)
            est += layer
            if est > NODE_CAP:
                break
        mode = "explicit" if est <= NODE_CAP else "population"
    if depth == 0 or mode == "explicit":
        gammas = {}
        for cls in (0, 1):
            forest = sample_tree(
                n, k, p, q, channel, depth, seed, n_trees=trials,
                root_label=cls,
            )
            gam = tree_llr(forest, channel, p, q, nu)
            gammas[cls] = np.atleast_1d(gam)
    else:
        trace = population_run(
            n, k, p, q, channel, depth, seed, root_samples=trials
        )
        gammas = trace.root_gamma
    pe1 = float(np.mean(gammas[1] < nu))
    pe0 = float(np.mean(gammas[0] >= nu))
    se0, se1 = _binom_se(pe0, trials), _binom_se(pe1, trials)
    w1 = k / n
    return TreeErrorReport(
        pe=w1 * pe1 + (1 - w1) * pe0,
        pe0=pe0,
        pe1=pe1,
        stderr=math.hypot(w1 * se1, (1 - w1) * se0),
        stderr0=se0,
        stderr1=se1,
        trials=trials,
        mode=mode,
    )


# ---------------------------------------------------------------------------
# density evolution


@dataclass(frozen=True)
class DeTrace:
    """Sequence v_0..v_T of the Gaussian density-evolution recursion."""

    lam: float
    nu: float
    channel: object
    v: np.ndarray
    quad_nodes: int

    def predicted_pair(self, n_over_k, t=-1):
        """(weighted type-I term, type-II term) of the predicted
        misclassification ratio at iteration t."""
        return _predict_components(self, n_over_k, t)


def de_run(lam, nu, channel, t_max, quad_nodes=61):
    """Iterate v_{t+1} = lam E_{Z,U1}[ 1/(e^{-nu} + e^{-(v_t/2 + sqrt(v_t) Z)
    - U1}) ] with fixed-node Gauss-Hermite quadrature for Z and the exact
    finite sum for U1; v_1 = lam b_0 is used in closed form."""
    if lam < 0:
        raise ParameterError("lam must be >= 0")
    if quad_nodes < 21:
        raise ParameterError("need at least 21 quadrature nodes")
    if t_max < 0:
        raise ParameterError("t_max must be >= 0")
    weights, llrs = side_atoms(channel, 1)
    enu = math.exp(nu)
    sig0 = np.where(np.isneginf(llrs), 0.0, enu * expit(llrs - nu))
    v = np.zeros(t_max + 1)
    if t_max >= 1:
        v[1] = lam * float(np.sum(weights * sig0))
    nodes, wq = np.polynomial.hermite.hermgauss(quad_nodes)
    z = math.sqrt(2.0) * nodes
    wq = wq / math.sqrt(math.pi)
    for t in range(1, t_max):
        vt = v[t]
        if vt == 0:
            v[t + 1] = v[1]
            continue
        arg = vt / 2.0 + math.sqrt(vt) * z[None, :] + llrs[:, None] - nu
        vals = enu * expit(np.where(np.isnan(arg), -np.inf, arg))
        expect = float(np.sum(weights[:, None] * vals * wq[None, :]))
        nxt = lam * expect
        if not math.isfinite(nxt):
            raise NumericError(f"non-finite v at t={t + 1}")
        v[t + 1] = nxt
    return DeTrace(lam=lam, nu=nu, channel=channel, v=v, quad_nodes=quad_nodes)


def _predict_components(trace, n_over_k, t):
    nu = trace.nu
    vt = float(trace.v[t])
    w0, u0 = side_atoms(trace.channel, 0)
    w1, u1 = side_atoms(trace.channel, 1)
    if vt == 0:
        # zero-variance convention: threshold test on the side LLR alone
        term1 = (n_over_k - 1) * float(np.sum(w0 * (u0 >= nu)))
        term2 = float(np.sum(w1 * (u1 < nu)))
        return term1, term2
    root = math.sqrt(vt)
    q0 = np.where(np.isneginf(u0), 0.0, _q_func((nu + vt / 2.0 - u0) / root))
    q1 = np.where(np.isposinf(u1), 0.0, _q_func((-nu + vt / 2.0 + u1) / root))
    term1 = (n_over_k - 1) * float(np.sum(w0 * q0))
    term2 = float(np.sum(w1 * q1))
    return term1, term2


def de_predict_error(trace, n_over_k, t=-1):
    """Predicted E|estimate symdiff truth| / K for the MAP rule at iteration
    t: (n/K - 1) E_{U0} Q((nu + v/2 - U0)/sqrt(v)) + E_{U1} Q((-nu + v/2 +
    U1)/sqrt(v))."""
    term1, term2 = _predict_components(trace, n_over_k, t)
    return term1 + term2


# ---------------------------------------------------------------------------
# analytic bound report


def log_star(x):
    """Iterated-logarithm count: applications of log until the value is <= 1."""
    count = 0
    while x > 1.0:
        x = math.log(x)
        count += 1
        if count > 64:
            raise NumericError("log* did not terminate")
    return count


@dataclass(frozen=True)
class BoundReport:
    lam: float
    lambda_side: float
    lambda_prime: float
    b_factor: float
    c_factor: float
    b: np.ndarray
    log_star_nu: int
    verdict: str

    @property
    def lambda_lambda_e(self):
        return self.lam * self.lambda_side * math.e


def bound_report(lam, p, q, nu, channel, t_max):
    """Analytic bound quantities: Lambda, Lambda' = E[e^{3 U_0}],
    B = (p/q)^1.5, C = lam (2 + p/q), the iterated lower-bound recursion
    b_{t+1} = Lambda e^{lam b_t} (1 - (Lambda'/Lambda) e^{-nu/2}), log*(nu),
    and the subcritical/supercritical verdict on lam Lambda e."""
    w1, u1 = side_atoms(channel, 1)
    w0, u0 = side_atoms(channel, 0)
    big_lambda = float(np.sum(np.where(np.isposinf(u1), np.inf, w1 * np.exp(u1))))
    lambda_prime = float(np.sum(np.where(np.isposinf(u0), np.inf, w0 * np.exp(3 * u0))))
    enu = math.exp(nu)
    b = np.empty(t_max + 1)
    b[0] = float(np.sum(w1 * np.where(np.isneginf(u1), 0.0, enu * expit(u1 - nu))))
    shrink = 1.0 - (lambda_prime / big_lambda) * math.exp(-nu / 2.0)
    for t in range(t_max):
        with np.errstate(over="ignore"):
            b[t + 1] = big_lambda * math.exp(min(lam * b[t], 700.0)) * shrink
    lle = lam * big_lambda * math.e
    return BoundReport(
        lam=lam,
        lambda_side=big_lambda,
        lambda_prime=lambda_prime,
        b_factor=(p / q) ** 1.5,
        c_factor=lam * (2.0 + p / q),
        b=b,
        log_star_nu=log_star(nu),
        verdict="subcritical" if lle <= 1.0 else "supercritical",
    )
