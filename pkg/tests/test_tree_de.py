import math

import numpy as np
import pytest
from scipy.special import expit

from sbmside import (
    bound_report,
    custom_channel,
    de_predict_error,
    de_run,
    lambda_side,
    log_star,
    measure_b_sequence,
    noisy_label_channel,
    population_run,
    replicated_channel,
    sample_tree,
    tree_llr,
    tree_map_error,
)
from sbmside.errors import TreeSizeError

NU99 = math.log(99)
LAM_TABLE1 = 9 / 220  # K^2(p-q)^2/((n-K)q) at n=1e4, K=100, p=5e-3, q=5e-4
B0_NOISY01 = 7.4360986547085215  # sum alpha_plus e^h/(1+e^{h-nu}) at nu=log 99


def msg_oracle(x, p, q, nu):
    return math.log((p / q * math.exp(x - nu) + 1.0) / (math.exp(x - nu) + 1.0))


class TestSampleTree:
    def test_depth_zero(self):
        ch = noisy_label_channel(0.1)
        tree = sample_tree(1000, 100, 0.03, 0.01, ch, 0, seed=0)
        assert tree.n_nodes == 1
        assert tree.depth == 0

    def test_child_counts_match_poisson_moments(self):
        n, k, p, q = 1000, 100, 0.03, 0.01
        ch = noisy_label_channel(0.1)
        trials = 10**4
        for cls, lam_one in ((1, k * p), (0, k * q)):
            forest = sample_tree(n, k, p, q, ch, 1, seed=cls, n_trees=trials,
                                 root_label=cls)
            ones = np.bincount(forest.parents[0], minlength=trials,
                               weights=forest.labels[1].astype(float))
            zeros = np.bincount(forest.parents[0], minlength=trials,
                                weights=1.0 - forest.labels[1])
            for sample, lam in ((ones, lam_one), (zeros, (n - k) * q)):
                se = math.sqrt(lam / trials)
                assert abs(sample.mean() - lam) <= 4 * se

    def test_node_cap_enforced(self):
        ch = noisy_label_channel(0.1)
        with pytest.raises(TreeSizeError):
            sample_tree(10**6, 1000, 0.5, 0.1, ch, 3, seed=1)

    def test_reproducible(self):
        ch = noisy_label_channel(0.2)
        a = sample_tree(500, 50, 0.05, 0.01, ch, 2, seed=5, n_trees=10)
        b = sample_tree(500, 50, 0.05, 0.01, ch, 2, seed=5, n_trees=10)
        assert a.n_nodes == b.n_nodes
        for la, lb in zip(a.labels, b.labels):
            assert np.array_equal(la, lb)
        for sa, sb in zip(a.symbols, b.symbols):
            assert np.array_equal(sa, sb)


class TestTreeLLR:
    def test_depth_zero_is_root_llr(self):
        ch = noisy_label_channel(0.1)
        for seed in range(5):
            tree = sample_tree(1000, 100, 0.03, 0.01, ch, 0, seed=seed)
            expected = math.log(9) if tree.symbols[0][0, 0] == 0 else -math.log(9)
            assert tree_llr(tree, ch) == pytest.approx(expected, rel=1e-12)

    def test_no_signal_gives_zero(self):
        flat = custom_channel([[0.4, 0.6]], [[0.4, 0.6]])
        tree = sample_tree(1000, 100, 0.01, 0.01, flat, 3, seed=2)
        assert tree_llr(tree, flat) == pytest.approx(0.0, abs=1e-12)

    def test_matches_recursive_oracle(self):
        n, k, p, q = 600, 100, 0.04, 0.01
        nu = math.log((n - k) / k)
        ch = noisy_label_channel(0.15)
        tree = sample_tree(n, k, p, q, ch, 3, seed=3, n_trees=4)

        h_tables = [np.array([math.log(0.85 / 0.15), math.log(0.15 / 0.85)])]

        def h_of(level, idx):
            return h_tables[0][tree.symbols[level][idx, 0]]

        children = []
        for level in range(tree.depth):
            kids = [[] for _ in range(len(tree.labels[level]))]
            for child, parent in enumerate(tree.parents[level]):
                kids[parent].append(child)
            children.append(kids)

        def gamma(level, idx):
            if level == tree.depth:
                return h_of(level, idx)
            total = h_of(level, idx) - k * (p - q)
            for child in children[level][idx]:
                total += msg_oracle(gamma(level + 1, child), p, q, nu)
            return total

        got = tree_llr(tree, ch)
        for root in range(4):
            assert got[root] == pytest.approx(gamma(0, root), abs=1e-9)

    def test_tilting_identity(self):
        # E[g(Gamma) | label 0] = E[g(Gamma) e^{-Gamma} | label 1]
        n, k, p, q = 600, 100, 0.03, 0.01
        nu = math.log((n - k) / k)
        ch = noisy_label_channel(0.2)
        trials = 40000
        gam = {}
        for cls in (0, 1):
            forest = sample_tree(n, k, p, q, ch, 2, seed=4, n_trees=trials,
                                 root_label=cls)
            gam[cls] = tree_llr(forest, ch)
        for g_fn in (lambda x: (x >= nu).astype(float),
                     lambda x: np.exp(x / 2.0)):
            left = g_fn(gam[0])
            right = g_fn(gam[1]) * np.exp(-gam[1])
            se = math.hypot(left.std() / math.sqrt(trials),
                            right.std() / math.sqrt(trials))
            assert abs(left.mean() - right.mean()) <= 3 * se + 1e-12


class TestTreeMapError:
    def test_no_signal_declares_all_outside(self):
        flat = custom_channel([[0.4, 0.6]], [[0.4, 0.6]])
        rep = tree_map_error(1000, 100, 0.01, 0.01, flat, 2, 500, seed=5)
        assert rep.pe1 == 1.0 and rep.pe0 == 0.0
        assert rep.pe == pytest.approx(0.1)

    def test_near_perfect_side(self):
        ch = noisy_label_channel(1e-4)
        rep = tree_map_error(1000, 100, 0.03, 0.01, ch, 1, 2000, seed=6)
        assert rep.pe <= 1e-3

    def test_explicit_and_population_agree(self):
        n, k, p, q = 600, 100, 0.05, 0.01
        ch = noisy_label_channel(0.2)
        exp_rep = tree_map_error(n, k, p, q, ch, 2, 20000, seed=7,
                                 mode="explicit")
        pop_rep = tree_map_error(n, k, p, q, ch, 2, 20000, seed=8,
                                 mode="population")
        tol = 3 * math.hypot(exp_rep.stderr, pop_rep.stderr)
        assert abs(exp_rep.pe - pop_rep.pe) <= tol


class TestPopulationRun:
    def test_level_one_moments_exact(self):
        # closed-form compound-Poisson moments of Z at level 1
        kq = 500.0
        eps = math.sqrt(99.0 / kq)
        n_over_k = 100.0
        k = 10**4
        q = kq / k
        p = q * (1 + eps)
        n = int(k * n_over_k)
        ch = noisy_label_channel(0.1)
        nu = math.log(99.0)
        atoms = {
            1: ([0.9, 0.1], [math.log(9), -math.log(9)]),
            0: ([0.1, 0.9], [math.log(9), -math.log(9)]),
        }
        mean = {c: -k * (p - q) for c in (0, 1)}
        var = {c: 0.0 for c in (0, 1)}
        for cls, lam_one in ((1, k * p), (0, k * q)):
            for c_child, (weights, hs) in atoms.items():
                lam = lam_one if c_child == 1 else (n - k) * q
                for w, h in zip(weights, hs):
                    m_val = msg_oracle(h, p, q, nu)
                    mean[cls] += lam * w * m_val
                    var[cls] += lam * w * m_val**2
        trace = population_run(n, k, p, q, ch, 1, seed=9, pools=200,
                               root_samples=10**5)
        for cls in (0, 1):
            z_m = trace.z_mean[cls][-1]
            z_v = trace.z_var[cls][-1]
            se_m = math.sqrt(var[cls] / 10**5)
            assert abs(z_m - mean[cls]) <= 5 * se_m
            assert abs(z_v - var[cls]) <= 5 * var[cls] * math.sqrt(2.0 / 10**5)

    def test_b0_closed_form(self):
        ch = noisy_label_channel(0.1)
        trace = population_run(10**4, 100, 5e-3, 5e-4, ch, 1, seed=10,
                               pools=100)
        assert trace.b_hat[0] == pytest.approx(B0_NOISY01, rel=1e-12)

    def test_b_sequence_nondecreasing_supercritical(self):
        # lambda*Lambda*e = 22 >> 1: measured b_t should climb
        k, q = 1000, 0.05
        n = 100 * k
        p = q * (1 + math.sqrt(99.0 / (k * q)))
        ch = noisy_label_channel(0.1)
        b_hat, b_se = measure_b_sequence(n, k, p, q, ch, 4, seed=11, pools=4000)
        assert all(b_hat[t + 1] >= b_hat[t] - 3 * b_se[t + 1]
                   for t in range(len(b_hat) - 1))

    def test_a_t_dominates_b_t(self):
        # a_{t+1} = Lambda e^{lam b_t} >= b_{t+1}
        k, q = 100, 0.02
        n = 10 * k
        lam = 0.15
        p = q + math.sqrt(lam * (n - k) * q) / k
        ch = noisy_label_channel(0.3)
        big = lambda_side(ch)
        b_hat, b_se = measure_b_sequence(n, k, p, q, ch, 6, seed=12, pools=20000)
        lam_true = k * k * (p - q) ** 2 / ((n - k) * q)
        for t in range(len(b_hat) - 1):
            a_next = big * math.exp(lam_true * b_hat[t])
            assert b_hat[t + 1] <= a_next + 3 * b_se[t + 1]

    def test_subcritical_cap_smoke(self):
        ch = noisy_label_channel(0.3)
        big = lambda_side(ch)
        lam = 0.9 / (big * math.e)
        k, q = 100, 0.02
        n = 10 * k
        p = q + math.sqrt(lam * (n - k) * q) / k
        b_hat, b_se = measure_b_sequence(n, k, p, q, ch, 10, seed=13,
                                         pools=10000)
        cap = big * math.e
        assert all(b <= cap + 3 * se + 1e-9 for b, se in zip(b_hat, b_se))


class TestDensityEvolution:
    def test_v1_closed_form(self):
        ch = noisy_label_channel(0.1)
        trace = de_run(LAM_TABLE1, NU99, ch, 3)
        assert trace.v[0] == 0.0
        assert trace.v[1] == pytest.approx(0.3042040358744395, rel=1e-12)
        assert trace.v[1] == pytest.approx(LAM_TABLE1 * B0_NOISY01, rel=1e-12)

    def test_zero_lambda(self):
        trace = de_run(0.0, NU99, noisy_label_channel(0.1), 6)
        assert np.all(trace.v == 0.0)

    def test_quadrature_converged(self):
        # the integrand steepens as v grows, so convergence is polynomial
        # rather than spectral; 61 nodes are still well inside 1e-6 relative
        ch = noisy_label_channel(0.1)
        a = de_run(1.0, NU99, ch, 6, quad_nodes=61)
        b = de_run(1.0, NU99, ch, 6, quad_nodes=201)
        assert np.allclose(a.v, b.v, rtol=1e-6, atol=1e-9)
        small = de_run(0.05, NU99, ch, 6, quad_nodes=61)
        fine = de_run(0.05, NU99, ch, 6, quad_nodes=201)
        assert np.allclose(small.v, fine.v, rtol=0, atol=1e-10)

    def test_v_monotone(self):
        ch = noisy_label_channel(0.1)
        trace = de_run(1.0, NU99, ch, 8)
        assert np.all(np.diff(trace.v) >= -1e-12)

    def test_predict_at_zero_v(self):
        ch = noisy_label_channel(0.1)
        trace = de_run(0.0, NU99, ch, 2)
        # U0 never reaches nu and U1 always sits below it: predict 1
        assert de_predict_error(trace, 100.0, t=0) == pytest.approx(1.0)

    def test_predict_vanishes_at_large_v(self):
        ch = noisy_label_channel(0.1)
        trace = de_run(1.0, NU99, ch, 8)
        assert de_predict_error(trace, 100.0) <= 1e-4
        term1, term2 = trace.predicted_pair(100.0)
        assert term1 >= 0 and term2 >= 0

    def test_prediction_decreases_with_n_over_k(self):
        # two-symbol channel whose minus likelihood shrinks with n/K
        eta_c, beta_c, gamma_c = 0.5, 0.5, 0.5
        preds = []
        for kappa in (10**2, 10**3, 10**4):
            a_plus1 = eta_c * beta_c
            a_minus1 = eta_c * (1 - beta_c) / (kappa - 1) ** gamma_c
            ch = custom_channel([[a_plus1, 1 - a_plus1]],
                                [[a_minus1, 1 - a_minus1]])
            nu = math.log(kappa - 1)
            trace = de_run(1.0, nu, ch, 6)
            preds.append(de_predict_error(trace, float(kappa)))
        assert preds[0] > preds[1] > preds[2]


class TestBoundReport:
    def test_table_one_values(self):
        ch = noisy_label_channel(0.1)
        rep = bound_report(LAM_TABLE1, 5e-3, 5e-4, NU99, ch, 10)
        assert rep.lambda_side == pytest.approx(8.111111111111111, rel=1e-12)
        assert rep.lambda_lambda_e == pytest.approx(0.9019753339886829, rel=1e-10)
        assert rep.verdict == "subcritical"
        assert rep.b_factor == pytest.approx(10.0**1.5, rel=1e-12)
        assert rep.c_factor == pytest.approx(LAM_TABLE1 * 12.0, rel=1e-12)

    def test_table_two_values(self):
        lam2 = 15.6025 / 4.95
        rep = bound_report(lam2, 0.04, 5e-4, NU99, noisy_label_channel(0.001), 5)
        assert rep.lambda_lambda_e == pytest.approx(8550.96, abs=0.02)
        assert rep.verdict == "supercritical"

    def test_lambda_prime(self):
        # E[e^{3 U_0}] = sum alpha_minus (alpha_plus/alpha_minus)^3
        ch = noisy_label_channel(0.1)
        rep = bound_report(0.1, 5e-3, 5e-4, NU99, ch, 2)
        expected = 0.9**3 / 0.1**2 + 0.1**3 / 0.9**2
        assert rep.lambda_prime == pytest.approx(expected, rel=1e-12)

    def test_b0_and_recursion(self):
        ch = noisy_label_channel(0.1)
        rep = bound_report(LAM_TABLE1, 5e-3, 5e-4, NU99, ch, 3)
        assert rep.b[0] == pytest.approx(B0_NOISY01, rel=1e-12)
        shrink = 1 - rep.lambda_prime / rep.lambda_side * math.exp(-NU99 / 2)
        expected = rep.lambda_side * math.exp(LAM_TABLE1 * rep.b[0]) * shrink
        assert rep.b[1] == pytest.approx(expected, rel=1e-12)

    def test_log_star(self):
        assert log_star(1.0) == 0
        assert log_star(16.0) == 3
        assert log_star(0.2) == 0
        assert log_star(math.e) == 1
