import math

import numpy as np
import pytest
from scipy import stats

from sbmside import (
    custom_channel,
    divergences,
    edge_llr,
    generate_graph,
    lambda_side,
    lambda_snr,
    load_graph,
    load_side,
    make_channel,
    mismatch,
    node_llr,
    node_llrs,
    noisy_label_channel,
    partial_reveal_channel,
    replicated_channel,
    sample_side_info,
    save_graph,
    save_side,
)
from sbmside.errors import InvalidSymbolError, ParameterError


class TestChannels:
    def test_noisy_label_rows(self):
        ch = noisy_label_channel(0.1)
        assert np.allclose(ch.alpha_plus[0], [0.9, 0.1])
        assert np.allclose(ch.alpha_minus[0], [0.1, 0.9])

    def test_partial_reveal_rows(self):
        ch = partial_reveal_channel(0.5)
        assert np.allclose(ch.alpha_plus[0], [0.5, 0.0, 0.5])
        assert np.allclose(ch.alpha_minus[0], [0.0, 0.5, 0.5])

    def test_replicated_copies(self):
        ch = replicated_channel(noisy_label_channel(0.3), 5)
        assert ch.m == 5
        for feat in range(5):
            assert np.allclose(ch.alpha_plus[feat], [0.7, 0.3])
            assert np.allclose(ch.alpha_minus[feat], [0.3, 0.7])

    def test_make_channel_dispatch(self):
        ch = make_channel("noisy_label", alpha=0.2)
        assert np.allclose(ch.alpha_plus[0], [0.8, 0.2])
        with pytest.raises(ParameterError):
            make_channel("bogus")

    def test_alpha_range_validated(self):
        for bad in (0.0, 0.5, 0.7, -0.1):
            with pytest.raises(ParameterError):
                noisy_label_channel(bad)

    def test_row_sum_validated(self):
        with pytest.raises(ParameterError):
            custom_channel([[0.5, 0.4]], [[0.5, 0.5]])

    def test_lambda_side_noisy(self):
        # direct arithmetic: 0.81/0.1 + 0.01/0.9
        expected = 0.81 / 0.1 + 0.01 / 0.9
        assert lambda_side(noisy_label_channel(0.1)) == pytest.approx(
            expected, rel=1e-12
        )
        assert expected == pytest.approx(8.11111, abs=1e-5)

    def test_lambda_side_uninformative_is_one(self):
        ch = custom_channel([[0.25, 0.75]], [[0.25, 0.75]])
        assert lambda_side(ch) == pytest.approx(1.0, abs=1e-15)

    def test_lambda_side_product_rule(self):
        base = lambda_side(noisy_label_channel(0.1))
        rep = lambda_side(replicated_channel(noisy_label_channel(0.1), 2))
        assert rep == pytest.approx(base**2, rel=1e-12)
        assert rep == pytest.approx(65.7901, abs=1e-3)

    def test_lambda_side_infinite_for_reveal(self):
        assert lambda_side(partial_reveal_channel(0.5)) == math.inf


class TestLLRs:
    def test_edge_llr_values(self):
        assert edge_llr(0.5, 0.25, True) == pytest.approx(math.log(2), rel=1e-12)
        assert edge_llr(0.3, 0.3, True) == 0.0
        assert edge_llr(0.3, 0.3, False) == 0.0
        expected = math.log(0.995 / 0.9995)
        assert edge_llr(5e-3, 5e-4, False) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(-0.0045124, abs=1e-7)

    def test_edge_llr_sentinels(self):
        assert edge_llr(0.5, 0.0, True) == math.inf
        assert edge_llr(1.0, 0.5, False) == -math.inf

    def test_edge_llr_antisymmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q, p = np.sort(rng.uniform(0.05, 0.95, size=2))
            for present in (True, False):
                assert edge_llr(p, q, present) == pytest.approx(
                    -edge_llr(q, p, present) if p != q else 0.0, abs=1e-12
                )

    def test_node_llr_values(self):
        ch = noisy_label_channel(0.1)
        assert node_llr(ch, [0]) == pytest.approx(math.log(9), rel=1e-12)
        assert node_llr(ch, [1]) == pytest.approx(-math.log(9), rel=1e-12)
        flat = custom_channel([[0.5, 0.5]], [[0.5, 0.5]])
        assert node_llr(flat, [0]) == 0.0
        assert node_llr(partial_reveal_channel(0.3), [0]) == math.inf

    def test_node_llr_antisymmetric_under_swap(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            row = rng.dirichlet(np.ones(3))
            row2 = rng.dirichlet(np.ones(3))
            ch = custom_channel([row], [row2])
            sw = custom_channel([row2], [row])
            for sym in range(3):
                assert node_llr(ch, [sym]) == pytest.approx(
                    -node_llr(sw, [sym]), rel=1e-12
                )

    def test_node_llr_invalid_symbol(self):
        ch = custom_channel([[1.0, 0.0]], [[1.0, 0.0]])
        with pytest.raises(InvalidSymbolError):
            node_llr(ch, [1])

    def test_node_llrs_matches_scalar(self):
        ch = replicated_channel(noisy_label_channel(0.2), 3)
        rng = np.random.default_rng(2)
        sym = rng.integers(0, 2, size=(40, 3)).astype(np.int16)
        from sbmside import SideObservations

        vec = node_llrs(ch, SideObservations(sym))
        for i in range(40):
            assert vec[i] == pytest.approx(node_llr(ch, sym[i]), rel=1e-12)

    def test_lambda_snr_paper_values(self):
        assert lambda_snr(10**4, 100, 5e-3, 5e-4) == pytest.approx(
            0.040909, abs=1e-6
        )
        assert lambda_snr(10**4, 100, 0.04, 5e-4) == pytest.approx(
            3.15202, abs=1e-5
        )
        assert lambda_snr(1000, 50, 0.02, 0.02) == 0.0

    def test_divergences_values(self):
        rep = divergences(0.5, 0.25)
        expected = 0.5 * math.log(2) + 0.5 * math.log(0.5 / 0.75)
        assert rep.d_pq == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.143841, abs=1e-6)

        flat = divergences(0.3, 0.3)
        assert flat.d_pq == 0.0 and flat.d_qp == 0.0

        rep = divergences(0.5, 0.25, noisy_label_channel(0.1))
        assert rep.d_vu_total == pytest.approx(0.8 * math.log(9), rel=1e-12)
        assert rep.d_vu_total == pytest.approx(1.75778, abs=1e-5)

    def test_divergence_infinite_on_reveal(self):
        rep = divergences(0.5, 0.25, partial_reveal_channel(0.5))
        assert rep.d_vu_total == math.inf


class TestGenerateGraph:
    def test_degenerate_complete(self):
        g = generate_graph(4, 4, 1.0, 0.0, seed=123)
        assert g.num_edges == 6
        assert sorted(g.community_set()) == [0, 1, 2, 3]
        for i in range(4):
            assert sorted(g.neighbors(i)) == [j for j in range(4) if j != i]

    def test_edge_count_matches_binomial_oracle(self):
        n, k, p, q = 10**4, 100, 5e-3, 5e-4
        g = generate_graph(n, k, p, q, seed=1)
        n_in = k * (k - 1) // 2
        n_out = n * (n - 1) // 2 - n_in
        mean = n_in * p + n_out * q
        var = n_in * p * (1 - p) + n_out * q * (1 - q)
        assert abs(g.num_edges - mean) <= 5 * math.sqrt(var)

    def test_p_equals_q_degrees_indistinguishable(self):
        planted, outside = [], []
        for seed in range(50):
            g = generate_graph(1000, 100, 0.01, 0.01, seed=seed)
            deg = g.degrees()
            planted.extend(deg[g.member_mask])
            outside.extend(deg[~g.member_mask])
        _, pvalue = stats.ks_2samp(planted, outside)
        assert pvalue > 0.01

    def test_binomial_mode_size(self):
        n, k, draws = 200, 50, 10**4
        sizes = [
            generate_graph(n, k, 0.0, 0.0, "binomial", seed).realized_size
            for seed in range(draws)
        ]
        se = math.sqrt(n * (k / n) * (1 - k / n) / draws)
        assert abs(np.mean(sizes) - k) <= 4 * se

    def test_deterministic_mode_exact_size(self):
        for seed in range(5):
            g = generate_graph(500, 37, 0.02, 0.01, seed=seed)
            assert g.realized_size == 37

    def test_bit_reproducible(self):
        a = generate_graph(2000, 80, 0.03, 0.005, seed=42)
        b = generate_graph(2000, 80, 0.03, 0.005, seed=42)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.indptr, b.indptr)
        assert np.array_equal(a.community, b.community)

    def test_adjacency_invariants(self):
        g = generate_graph(500, 50, 0.05, 0.01, seed=3)
        seen = set()
        for u in range(g.n):
            nbrs = g.neighbors(u)
            assert np.all(np.diff(nbrs) > 0)  # sorted, no duplicates
            assert u not in nbrs  # no self-loops
            for v in nbrs:
                seen.add((u, int(v)))
        assert all((v, u) in seen for u, v in seen)  # symmetric

    def test_parameter_errors(self):
        with pytest.raises(ParameterError):
            generate_graph(10, 11, 0.5, 0.1)
        with pytest.raises(ParameterError):
            generate_graph(10, 5, 0.1, 0.5)
        with pytest.raises(ParameterError):
            generate_graph(10, 5, 1.5, 0.1)
        with pytest.raises(ParameterError):
            generate_graph(10, 0, 0.5, 0.1)


class TestSideInfo:
    def test_flip_fraction_binomial_oracle(self):
        n, k, alpha = 10**4, 100, 0.1
        g = generate_graph(n, k, 5e-3, 5e-4, seed=1)
        ch = noisy_label_channel(alpha)
        obs = sample_side_info(ch, g, seed=7)
        labels = g.member_mask.astype(int)
        flips = int(np.sum(obs.symbols[:, 0] != (1 - labels)))
        # symbol 0 = "looks planted"; a flip reads the wrong symbol
        se = math.sqrt(n * alpha * (1 - alpha))
        assert abs(flips - n * alpha) <= 5 * se

    def test_reveal_never_contradicts(self):
        g = generate_graph(2000, 100, 0.01, 0.005, seed=2)
        obs = sample_side_info(partial_reveal_channel(0.4), g, seed=9)
        sym = obs.symbols[:, 0]
        member = g.member_mask
        assert not np.any((sym == 0) & ~member)  # reveal-1 only inside
        assert not np.any((sym == 1) & member)  # reveal-0 only outside

    def test_reproducible(self):
        g = generate_graph(300, 30, 0.05, 0.01, seed=4)
        ch = replicated_channel(noisy_label_channel(0.25), 3)
        a = sample_side_info(ch, g, seed=11)
        b = sample_side_info(ch, g, seed=11)
        assert np.array_equal(a.symbols, b.symbols)


class TestMismatch:
    def test_exact(self):
        g = generate_graph(100, 10, 0.5, 0.1, seed=0)
        res = mismatch(g, g.community_set())
        assert res.zeta == 0.0 and res.sym_diff == 0

    def test_disjoint(self):
        g = generate_graph(100, 10, 0.5, 0.1, seed=0)
        others = [i for i in range(100) if i not in g.community_set()][:10]
        res = mismatch(g, others)
        assert res.zeta == 1.0 and res.sym_diff == 20

    def test_partial_overlap(self):
        g = generate_graph(1000, 100, 0.05, 0.01, seed=5)
        comm = sorted(g.community_set())
        estimate = comm[:60] + [i for i in range(1000) if i not in g.community_set()][:40]
        res = mismatch(g, estimate)
        assert res.sym_diff == 80
        assert res.zeta == pytest.approx(0.4)


class TestSerialization:
    def test_graph_roundtrip(self, tmp_path):
        g = generate_graph(200, 20, 0.1, 0.02, seed=6)
        path = tmp_path / "g.txt"
        save_graph(g, path)
        h = load_graph(path)
        assert h.n == g.n and h.k == g.k and h.p == g.p and h.q == g.q
        assert np.array_equal(h.community, g.community)
        assert np.array_equal(h.indptr, g.indptr)
        assert np.array_equal(h.indices, g.indices)

    def test_side_roundtrip(self, tmp_path):
        g = generate_graph(50, 5, 0.3, 0.05, seed=8)
        ch = replicated_channel(noisy_label_channel(0.2), 2)
        obs = sample_side_info(ch, g, seed=8)
        path = tmp_path / "obs.csv"
        save_side(obs, path)
        back = load_side(path)
        assert np.array_equal(back.symbols, obs.symbols)
