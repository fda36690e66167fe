import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyvint import metrics as mt
from hyvint.errors import DataError
from hyvint.hypercore import IncidenceStructure

from _oracles import brute_betweenness, transport_w1

H = IncidenceStructure


def random_h(rng, n, m, p=0.4):
    return H.from_dense(rng.random((n, m)) < p)


def graph_as_h(n, pairs):
    return H(n, tuple(sorted(pairs)))


class TestMeanCov:
    def test_example(self):
        mu, cov = mt.empirical_mean_cov(H.from_dense([[1, 1], [0, 1]]))
        assert list(mu) == [1.0, 0.5]
        assert cov[1, 1] == 0.25

    def test_identical_columns(self):
        _, cov = mt.empirical_mean_cov(H(3, ((0, 2),) * 4))
        assert not cov.any()

    def test_psd(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            _, cov = mt.empirical_mean_cov(random_h(rng, 8, 12))
            assert np.linalg.eigvalsh(cov).min() >= -1e-10

    def test_empty(self):
        with pytest.raises(DataError):
            mt.empirical_mean_cov(H(2, ()))


class TestRmse:
    def test_self(self):
        h = random_h(np.random.default_rng(1), 6, 9)
        assert mt.rmse_pair(h, h) == (0.0, 0.0)

    def test_hand_example(self):
        ref = H(2, ((0, 1),))
        gen = H(2, ((0,),))
        assert mt.rmse_pair(ref, gen)[0] == pytest.approx(1 / np.sqrt(2), abs=1e-15)

    def test_column_order(self):
        h = random_h(np.random.default_rng(2), 6, 9)
        g = H(h.n, tuple(reversed(h.edges)))
        other = random_h(np.random.default_rng(3), 6, 5)
        assert mt.rmse_pair(h, other) == pytest.approx(mt.rmse_pair(g, other), abs=1e-15)

    def test_node_mismatch(self):
        with pytest.raises(DataError):
            mt.rmse_pair(H(2, ((0,),)), H(3, ((0,),)))


class TestW1:
    def test_examples(self):
        assert mt.w1_empirical([3, 1, 2], [2, 3, 1]) == 0.0
        assert mt.w1_empirical([0], [1]) == 1.0
        assert mt.w1_empirical([0, 2], [1, 1]) == 1.0

    def test_empty(self):
        with pytest.raises(DataError):
            mt.w1_empirical([], [1.0])

    def test_transport_lp(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            xs = rng.integers(-5, 6, rng.integers(1, 7)) * rng.random()
            ys = rng.normal(size=rng.integers(1, 7))
            assert mt.w1_empirical(xs, ys) == pytest.approx(transport_w1(xs, ys), abs=1e-9)


small_sets = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(small_sets, small_sets, small_sets)
def test_w1_is_metric(a, b, c):
    ab, ba = mt.w1_empirical(a, b), mt.w1_empirical(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab >= 0
    assert ab <= mt.w1_empirical(a, c) + mt.w1_empirical(c, b) + 1e-9


class TestStructural:
    def test_self_zero(self, backend):
        h = random_h(np.random.default_rng(5), 10, 8)
        assert mt.structural_losses(h, h, backend) == (0.0,) * 6

    def test_path_p3(self, backend):
        h = graph_as_h(3, [(0, 1), (1, 2)])
        close, harm, btw = mt.centralities(h, backend)
        np.testing.assert_allclose(close, [2 / 3, 1.0, 2 / 3], atol=1e-15)
        np.testing.assert_allclose(harm, [1.5, 2.0, 1.5], atol=1e-15)
        np.testing.assert_allclose(btw, [0.0, 1.0, 0.0], atol=0)

    def test_k2_spectrum(self, backend):
        k2 = H(2, ((0, 1),))
        np.testing.assert_allclose(mt.laplacian_spectrum(k2, backend), [0.0, 2.0], atol=1e-14)
        assert mt.structural_losses(k2, H(2, ((0, 1), (0, 1))), backend)[2] == pytest.approx(0.0, abs=1e-14)

    def test_against_networkx(self, backend):
        rng = np.random.default_rng(6)
        for _ in range(10):
            h = random_h(rng, 12, 6, 0.2)
            G = nx.Graph()
            G.add_nodes_from(range(12))
            for e in h.edges:
                G.add_edges_from(itertools.combinations(e, 2))
            close, harm, btw = mt.centralities(h, backend)
            cc = nx.closeness_centrality(G, wf_improved=True)
            hc = nx.harmonic_centrality(G)
            bc = nx.betweenness_centrality(G, normalized=False)
            np.testing.assert_allclose(close, [cc[v] for v in range(12)], atol=1e-12)
            np.testing.assert_allclose(harm, [hc[v] for v in range(12)], atol=1e-12)
            np.testing.assert_allclose(btw, [bc[v] for v in range(12)], atol=1e-12)

    def test_betweenness_enumeration(self, backend):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(2, 8))
            pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < 0.45]
            adj = [set() for _ in range(n)]
            for a, b in pairs:
                adj[a].add(b)
                adj[b].add(a)
            _, _, btw = mt.centralities(graph_as_h(n, pairs), backend)
            exact = np.array([float(x) for x in brute_betweenness(adj)])
            # float accumulation vs exact rationals: a few ulp at most
            assert np.all(np.abs(btw - exact) <= 4 * np.spacing(np.maximum(exact, 1.0)))

    def test_spectrum_bounds(self, backend):
        rng = np.random.default_rng(8)
        for _ in range(10):
            ev = mt.laplacian_spectrum(random_h(rng, 15, 10, 0.2), backend)
            assert ev.min() >= -1e-8 and ev.max() <= 2 + 1e-8

    def test_isolated_node_rows_zero(self):
        L = mt.normalized_laplacian(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]]))
        assert not L[2].any()

    def test_empty_generation(self, backend):
        ref = random_h(np.random.default_rng(9), 5, 4, 0.6)
        losses = mt.structural_losses(ref, H(5, ()), backend)
        assert all(np.isfinite(losses))


class TestNovelty:
    def test_counts(self):
        uhr, nhr, _, _ = mt.novelty_diversity(H(4, ((1, 2),)), H(4, ((1, 2), (1, 2), (2, 3))))
        assert uhr == pytest.approx(2 / 3) and nhr == 0.5

    def test_pjd(self):
        assert mt.novelty_diversity(H(4, ()), H(4, ((0, 1), (2, 3))))[2] == 1.0
        assert mt.novelty_diversity(H(4, ()), H(4, ((1, 2), (2, 3))))[2] == pytest.approx(2 / 3)

    def test_two_empty_edges(self):
        assert mt.novelty_diversity(H(3, ()), H(3, ((), ())))[2] == 0.0

    def test_flags(self):
        uhr, nhr, pjd, flags = mt.novelty_diversity(H(3, ()), H(3, ()))
        assert (uhr, nhr, pjd) == (0.0, 0.0, 0.0)
        assert set(flags) == {"nhr_undefined", "pjd_undefined"}

    def test_subsampled_close_to_exact(self):
        rng = np.random.default_rng(10)
        gen = random_h(rng, 10, 300, 0.3)
        exact = mt.novelty_diversity(gen, gen)[2]
        approx, flags = mt.novelty_diversity(gen, gen, exact_limit=100, n_pairs=20000)[2:]
        assert "pjd_subsampled" in flags
        assert abs(approx - exact) < 0.01

    def test_extremes(self):
        gen = H(4, ((0,), (1,), (2, 3)))
        uhr, nhr, _, _ = mt.novelty_diversity(H(4, ((0, 1),)), gen)
        assert uhr == 1.0 and nhr == 1.0


def test_report_ranges_and_serialisation():
    rng = np.random.default_rng(11)
    ref, gen = random_h(rng, 8, 10), random_h(rng, 8, 7)
    rep = mt.evaluate(ref, gen, seed=1)
    vals = rep.values()
    assert all(v >= 0 for v in vals.values())
    assert 0 <= rep.uhr <= 1 and 0 <= rep.nhr <= 1 and 0 <= rep.pjd <= 1
    text = rep.to_text()
    assert text.splitlines()[0].startswith("rmse_mean=")
    row = rep.csv_row("d", "m", 2, 8, 10, 1)
    assert len(row) == len(mt.CSV_COLUMNS)


def test_evaluate_empty_generation_flagged():
    rep = mt.evaluate(H(3, ((0, 1),)), H(3, ()))
    assert "empty_generation" in rep.flags and np.isnan(rep.rmse_mean)
