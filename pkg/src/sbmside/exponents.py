"""Threshold quantities: Chernoff-type exponents of the edge/side LLRs,
weak- and exact-recovery feasibility checks, closed-form thresholds in the
K = rho n/log n scaling regime, and the six-region phase diagram.

All operations are pure functions of their arguments and safe for parallel
grid sweeps.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import divergences, lambda_side, noisy_label_channel
from .errors import InfeasibleExponentError, ParameterError, UnsupportedRegimeError

EULER_E = math.e


# ---------------------------------------------------------------------------
# moment generating functions of the LLRs


def _mgf_term(weight, num, den, t):
    """weight * (num/den)**t with measure-theoretic zero conventions."""
    if weight == 0:
        return 0.0
    if t == 0:
        return weight
    if den == 0:
        return math.inf if t > 0 else 0.0
    if num == 0:
        return 0.0 if t > 0 else math.inf
    return weight * math.exp(t * (math.log(num) - math.log(den)))


def graph_logmgf(p, q, t, under):
    """log E[e^{t L_G}] under the null (under='Q') or planted ('P') wiring."""
    if under == "Q":
        w1, w2 = q, 1 - q
    else:
        w1, w2 = p, 1 - p
    mgf = _mgf_term(w1, p, q, t) + _mgf_term(w2, 1 - p, 1 - q, t)
    if mgf == 0:
        return -math.inf
    return math.log(mgf)


def side_logmgf(channel, t, under):
    """log E[e^{t L_S}] of a node's full side vector, summed over features;
    under='U' weights by alpha_minus, under='V' by alpha_plus."""
    total = 0.0
    for ap, am in zip(channel.alpha_plus, channel.alpha_minus):
        mgf = 0.0
        for plus, minus in zip(ap, am):
            weight = minus if under == "U" else plus
            mgf += _mgf_term(weight, plus, minus, t)
        if mgf == 0:
            return -math.inf
        total += math.log(mgf) if mgf != math.inf else math.inf
    return total


@dataclass(frozen=True)
class ExponentQuery:
    """Point query for the Chernoff supremum.

    m1 multiplies the edge-LLR log-MGF, m2 the side log-MGF of one full
    channel observation (for i.i.d. features this matches the usual
    feature-count multiplicity).  side selects the QU (t in [0,1]) or PV
    (t in [-1,0]) form.
    """

    theta: float
    m1: float
    m2: float
    p: float
    q: float
    channel: object = None
    side: str = "QU"

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ParameterError("multiplicities must be nonnegative")
        if self.side not in ("QU", "PV"):
            raise ParameterError("side must be QU or PV")
        if self.m2 > 0 and self.channel is None:
            raise ParameterError("side multiplicity requires a channel")


@dataclass(frozen=True)
class ExponentResult:
    value: float
    t_star: float
    converged: bool
    iterations: int


def psi(query, t):
    """m1 * log-MGF(edge LLR) + m2 * log-MGF(side LLR) at tilt t; psi(0) = 0."""
    if t == 0:
        return 0.0
    under_g, under_s = ("Q", "U") if query.side == "QU" else ("P", "V")
    total = query.m1 * graph_logmgf(query.p, query.q, t, under_g)
    if query.m2 > 0:
        total += query.m2 * side_logmgf(query.channel, t, under_s)
    return total


def _maximize_concave(f, lo, hi, tol=1e-12, max_iter=200, coarse=33):
    """Golden-section maximum of a concave f on [lo, hi].

    A coarse scan brackets the maximum first, which also handles objectives
    that are flat or jump at an interval endpoint.
    """
    grid = np.linspace(lo, hi, coarse)
    vals = [f(t) for t in grid]
    best = int(np.argmax(vals))
    if not any(v > -math.inf for v in vals):
        raise InfeasibleExponentError("objective is -inf over the interval")
    if math.isinf(vals[best]):
        return grid[best], vals[best], True, 0
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, coarse - 1)]
    inv_phi = (math.sqrt(5) - 1) / 2
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    iters = 0
    while b - a > tol and iters < max_iter:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
        iters += 1
    t_star = (a + b) / 2
    value = f(t_star)
    # endpoints can win when the true sup sits on the boundary
    for t_end in (lo, hi):
        v_end = f(t_end)
        if v_end > value:
            t_star, value = t_end, v_end
    return t_star, value, b - a <= tol, iters


def chernoff_exponent(query):
    """sup over the side-specific tilt interval of t*theta - psi(t).

    The objective is concave (psi is a sum of log-MGFs, hence convex in t),
    so a bracketed golden-section search converges; tolerance 1e-12 on t.
    """
    lo, hi = (0.0, 1.0) if query.side == "QU" else (-1.0, 0.0)

    def objective(t):
        return t * query.theta - psi(query, t)

    t_star, value, converged, iters = _maximize_concave(objective, lo, hi)
    return ExponentResult(
        value=value, t_star=t_star, converged=converged, iterations=iters
    )


def lemma_interval(p, q, channel, m1, m2):
    """Theta interval on which the restricted and unrestricted suprema agree:
    [-m1 D(Q||P)-m2 D(U||V), m1 D(P||Q)+m2 D(V||U)]."""
    div = divergences(p, q, channel)
    side_uv = div.d_uv_total if channel is not None else 0.0
    side_vu = div.d_vu_total if channel is not None else 0.0
    return (-m1 * div.d_qp - m2 * side_uv, m1 * div.d_pq + m2 * side_vu)


# ---------------------------------------------------------------------------
# recovery feasibility


@dataclass(frozen=True)
class WeakRecoveryReport:
    feasible: bool
    lhs1: float
    lhs2: float
    margin: float
    threshold2: float


def weak_recovery_check(n, k, p, q, channel=None, margin=10.0):
    """Finite-n surrogate of the weak-recovery conditions.

    lhs1 = (K-1) D(P||Q) + sum_m D(V_m||U_m) must exceed ``margin`` (standing
    in for divergence to infinity) and lhs2 = (K-1) D(P||Q) + 2 sum_m
    D(V_m||U_m) must exceed 2 log(n/K).
    """
    div = divergences(p, q, channel)
    side = div.d_vu_total if channel is not None else 0.0
    lhs1 = (k - 1) * div.d_pq + side
    lhs2 = (k - 1) * div.d_pq + 2 * side
    threshold2 = 2 * math.log(n / k)
    return WeakRecoveryReport(
        feasible=bool(lhs1 > margin and lhs2 > threshold2),
        lhs1=lhs1,
        lhs2=lhs2,
        margin=margin,
        threshold2=threshold2,
    )


@dataclass(frozen=True)
class ExactRecoveryReport:
    feasible: bool
    exponent: float
    threshold: float
    t_star: float

    @property
    def ratio(self):
        return self.exponent / self.threshold


def exact_recovery_check(n, k, p, q, channel=None):
    """Exact-recovery condition: E_QU(log(n/K), K, M) > log n.

    The side term uses the full channel once per node (multiplicity 1), which
    equals the feature-count form for i.i.d. features.  Weak recovery must be
    checked separately; exact recovery presupposes it.
    """
    query = ExponentQuery(
        theta=math.log(n / k),
        m1=float(k),
        m2=0.0 if channel is None else 1.0,
        p=p,
        q=q,
        channel=channel,
        side="QU",
    )
    res = chernoff_exponent(query)
    threshold = math.log(n)
    return ExactRecoveryReport(
        feasible=bool(res.value > threshold),
        exponent=res.value,
        threshold=threshold,
        t_star=res.t_star,
    )


# ---------------------------------------------------------------------------
# scaling-regime closed forms


@dataclass(frozen=True)
class RegimeParams:
    """K = rho n/log n, p = a log^2 n / n, q = b log^2 n / n."""

    rho: float
    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ParameterError("rho must be in (0, 1)")
        if not self.a >= self.b > 0:
            raise ParameterError("need a >= b > 0")

    @property
    def t_ratio(self):
        return math.log(self.a / self.b)

    def beta_limit(self):
        return self.rho * (self.a - self.b - self.b * self.t_ratio)


def eta(which, rho, a, b, beta=None):
    """Closed-form exact-recovery threshold functions eta_1/eta_2/eta_3."""
    if a == b:
        raise ParameterError("a = b gives T = 0; thresholds undefined")
    if not (a > b > 0 and 0 < rho <= 1):
        raise ParameterError("need a > b > 0 and rho in (0, 1]")
    big_t = math.log(a / b)
    if which == 1:
        return rho * (b + (a - b) / big_t * math.log((a - b) / (EULER_E * b * big_t)))
    limit = rho * (a - b - b * big_t)
    if beta is None or not 0 < beta <= limit:
        raise ParameterError(f"beta must lie in (0, {limit}]")
    if which == 2:
        gap = rho * (a - b) - beta
        return (
            rho * b
            + gap / big_t * math.log(gap / (rho * EULER_E * b * big_t))
            + beta
        )
    if which == 3:
        gap = rho * (a - b) + beta
        return rho * b + gap / big_t * math.log(gap / (rho * EULER_E * b * big_t))
    raise ParameterError("which must be 1, 2 or 3")


#: trend component: "o" for o(log n), or a float c meaning c * log n
OTrend = "o"


@dataclass(frozen=True)
class OutcomeTrend:
    """Declared asymptotics of (f1, f2, f3) = (LLR, log alpha_plus,
    log alpha_minus) for one side-information outcome sequence."""

    f1: object = OTrend
    f2: object = OTrend
    f3: object = OTrend


@dataclass(frozen=True)
class RegimeThresholdResult:
    condition_value: float
    required: str
    case_id: int


def _is_o(component):
    return isinstance(component, str)


def regime_threshold(regime, trends):
    """Classify declared outcome trends into the six threshold cases and
    return the binding (minimum) condition value.

    Outcomes whose pattern matches none of the cases contribute nothing;
    a positive f1 coefficient outside (0, rho(a-b-bT)) is out of the
    supported regime and raises.
    """
    if isinstance(trends, OutcomeTrend):
        trends = (trends,)
    rho, a, b = regime.rho, regime.a, regime.b
    limit = regime.beta_limit()
    candidates = []
    for outcome in trends:
        f1, f2, f3 = outcome.f1, outcome.f2, outcome.f3
        if _is_o(f1):
            if _is_o(f2) and _is_o(f3):
                candidates.append((eta(1, rho, a, b), 1))
            elif (
                not _is_o(f2)
                and not _is_o(f3)
                and f2 < 0
                and abs(f2 - f3) <= 1e-12
            ):
                candidates.append((eta(1, rho, a, b) - f2, 2))
            continue
        beta1 = float(f1)
        if beta1 <= 0:
            continue  # dominated outcome; no binding condition in the paper
        if beta1 >= limit:
            raise UnsupportedRegimeError(
                f"f1 coefficient {beta1} outside (0, {limit}); no matching "
                "sufficient condition is available"
            )
        if _is_o(f2):
            candidates.append((eta(2, rho, a, b, beta1), 3))
        elif f2 < 0:
            candidates.append((eta(2, rho, a, b, beta1) - f2, 5))
        if _is_o(f3):
            candidates.append((eta(3, rho, a, b, beta1), 4))
        elif f3 < 0:
            candidates.append((eta(3, rho, a, b, beta1) - f3, 6))
    if not candidates:
        raise UnsupportedRegimeError("no declared outcome matches a known case")
    value, case_id = min(candidates)
    return RegimeThresholdResult(condition_value=value, required=">1", case_id=case_id)


# ---------------------------------------------------------------------------
# worked example and phase diagram


def psi_curve(alpha, c, a, b):
    """Exact-recovery threshold value for noisy labels at dimension
    M = log n: sup_t of the regime objective plus the label term."""
    if not 0 < alpha < 0.5:
        raise ParameterError("alpha must be in (0, 0.5)")
    if not a >= b > 0:
        raise ParameterError("need a >= b > 0")

    def objective(t):
        side = (1 - alpha) ** t * alpha ** (1 - t) + (1 - alpha) ** (1 - t) * alpha**t
        return t * c * (a - b) + b * c - b * c * (a / b) ** t - math.log(side)

    _, value, _, _ = _maximize_concave(objective, 0.0, 1.0)
    return value


def phase_region(b, c, alpha):
    """Region id 1..6 in the (b, c) phase plane of the fixed family
    p = 2q, q = b log^2 n / n, K = c n / log n with noisy-label quality alpha.

    A = exact recovery asymptotically possible, B1 = BP succeeds bare,
    B2 = BP succeeds with side information (lambda = c^2 b).
    """
    if b <= 0 or c <= 0:
        raise ParameterError("b and c must be positive")
    lam = c * c * b
    big_lambda = lambda_side(noisy_label_channel(alpha))
    cond_a = c * b * eta(1, 1.0, 2.0, 1.0) > 1.0
    cond_b1 = lam > 1.0 / EULER_E
    cond_b2 = lam > 1.0 / (big_lambda * EULER_E)
    if cond_b1:
        return 1 if cond_a else 3
    if cond_b2:
        return 2 if cond_a else 4
    return 5 if cond_a else 6
