import itertools

import numpy as np
import pytest

from stablemaps.bijection import tree_to_map
from stablemaps.labels import enumerate_labellings, label_tree
from stablemaps.metrics import (ProfileMeasure, bfs, dl_bound_check, fit_slope, label_distance,
                                pointed_bias, profile_functional, radius_delta_profile,
                                rescaled_processes, scaling_sweep, summarise_sweep, sweep_cell)
from stablemaps.trees import ConditioningSpec, enumerate_trees, sample_conditioned
from stablemaps.weights import normalizer


def dl_brute(labels, i, j):
    lo, hi = min(i, j), max(i, j)
    inside = min(labels[lo:hi + 1])
    outside = min(list(labels[: lo + 1]) + list(labels[hi:]))
    return labels[i] + labels[j] - 2 * max(inside, outside)


class TestBFS:
    def test_path_map(self, path_map_tree):
        m = tree_to_map(path_map_tree)
        d = bfs(m, m.star)
        a, b = m.tree_class[1], m.tree_class[2]
        assert (d[m.star], d[a], d[b]) == (0, 1, 2)

    def test_symmetry(self, ref_labelled):
        m = tree_to_map(ref_labelled)
        D = bfs(m, np.arange(m.n_vertices))
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)


class TestRadius:
    def test_path_map(self, path_map_tree):
        R, delta, rho = radius_delta_profile(tree_to_map(path_map_tree))
        assert R == 2 and delta == 2
        assert rho.counts.tolist() == [1, 1, 1]

    def test_edge_map(self, edge_map_tree):
        R, delta, rho = radius_delta_profile(tree_to_map(edge_map_tree))
        assert R == 1 and rho.counts.tolist() == [1, 1]

    def test_reversed_root_delta(self, path_map_tree):
        m = tree_to_map(path_map_tree).reversed_root()
        assert radius_delta_profile(m)[1] == 1

    def test_label_identities(self, mixed_law):
        rng = np.random.default_rng(1)
        for _ in range(20):
            lt = label_tree(sample_conditioned(mixed_law, ConditioningSpec("all", 500), rng), rng)
            m = tree_to_map(lt)
            R, delta, rho = radius_delta_profile(m)
            d = bfs(m, m.star)
            assert R == d.max() == lt.labels.max() - lt.labels.min() + 1
            assert delta == 1 - lt.labels.min()
            assert rho.total == m.n_vertices and rho.counts[0] == 1
            assert rho.radius == R


class TestProfileFunctional:
    def test_constant(self):
        assert profile_functional(ProfileMeasure(np.array([1, 3, 2])), lambda x: np.ones_like(x), 4.0) == 1.0

    def test_identity_on_path(self, path_map_tree):
        _, _, rho = radius_delta_profile(tree_to_map(path_map_tree))
        assert profile_functional(rho, lambda x: x, 1.0) == pytest.approx(1.0)

    def test_table(self):
        rho = ProfileMeasure(np.array([1, 1, 2]))
        assert profile_functional(rho, np.array([0.0, 4.0, 8.0]), 1.0) == pytest.approx(5.0)

    def test_monotone_bounds(self, ref_labelled):
        R, _, rho = radius_delta_profile(tree_to_map(ref_labelled))
        B = 3.0
        val = profile_functional(rho, np.sqrt, B)
        assert 0.0 <= val <= np.sqrt(R / np.sqrt(B))

    def test_bad_b(self):
        with pytest.raises(ValueError):
            profile_functional(ProfileMeasure(np.array([1])), np.sqrt, 0.0)


class TestLabelDistance:
    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        labels = np.cumsum(rng.integers(-1, 2, 60))
        for i, j in itertools.product(range(0, 60, 3), repeat=2):
            assert label_distance(labels, i, j) == dl_brute(labels.tolist(), i, j)

    def test_diagonal(self, ref_labelled):
        idx = np.arange(17)
        assert np.all(label_distance(ref_labelled.labels, idx, idx) == 0)


class TestBound:
    def test_exhaustive_pairs_small(self):
        for e in range(1, 5):
            for t in enumerate_trees(e):
                for lt in enumerate_labellings(t):
                    m = tree_to_map(lt)
                    pairs = list(itertools.product(range(t.n_vertices), repeat=2))
                    rep = dl_bound_check(lt, m, pairs)
                    assert rep.ok and rep.max_slack <= 2

    def test_random_pairs(self, mixed_law):
        rng = np.random.default_rng(4)
        lt = label_tree(sample_conditioned(mixed_law, ConditioningSpec("all", 2000), rng), rng)
        m = tree_to_map(lt)
        pairs = rng.integers(0, lt.tree.n_vertices, size=(300, 2))
        rep = dl_bound_check(lt, m, pairs)
        assert rep.violations == 0


def _depth_last(tree):
    d, v = 0, tree.n_vertices - 1
    while v:
        v = int(tree.parent[v])
        d += 1
    return d


class TestRescaled:
    def test_origin_and_scaling(self, mixed_law):
        rng = np.random.default_rng(6)
        lt = label_tree(sample_conditioned(mixed_law, ConditioningSpec("all", 300), rng), rng)
        B = float(normalizer(mixed_law)(lt.tree.n_edges))
        a = rescaled_processes(lt, B, 200)
        b = rescaled_processes(lt, 2 * B, 200)
        assert a.H[0] == a.L[0] == a.W[0] == 0
        assert np.allclose(b.W, a.W / 2)
        assert np.all(a.H >= 0)
        # t = 1 is the last vertex in lex order, a leaf of positive height
        assert a.H[-1] == pytest.approx(B / lt.tree.n_edges * _depth_last(lt.tree))

    def test_distances(self, ref_labelled):
        m = tree_to_map(ref_labelled)
        pairs = [(0, 16), (3, 9)]
        r = rescaled_processes(ref_labelled, 4.0, 10, m=m, pairs=pairs)
        D = bfs(m, np.arange(m.n_vertices))
        tc = m.tree_class
        assert r.d.tolist() == [D[tc[0], tc[16]] / 2, D[tc[3], tc[9]] / 2]


class TestPointedBias:
    def test_leaf_conditioning_is_zero(self, mixed_law):
        assert pointed_bias(mixed_law, ConditioningSpec("leaves", 50), 100) == 0.0

    def test_single_sample(self, mixed_law):
        assert pointed_bias(mixed_law, ConditioningSpec("all", 50), 1) == 0.0

    def test_counts_returned(self, mixed_law):
        stat, counts = pointed_bias(mixed_law, ConditioningSpec("all", 51), 100, seed=3,
                                    return_counts=True)
        assert stat > 0 and counts.size == 100
        manual = np.mean(np.abs((1 / counts) / np.mean(1 / counts) - 1))
        assert stat == pytest.approx(manual)


class TestSweep:
    def test_fit_slope_exact(self):
        ns = np.array([10, 20, 40, 80])
        s, c = fit_slope(ns, 3.0 * ns**0.3)
        assert s == pytest.approx(0.3) and np.exp(c) == pytest.approx(3.0)

    def test_cell_checks_map(self, binary_law):
        row = sweep_cell(binary_law, "internal", 101, 0, 5, build_map=True)
        assert row["zeta"] == 202 and row["lambda"] == 102
        assert set(row) >= {"seed", "n", "rep", "zeta", "R", "Delta", "lambda", "runtime"}

    def test_deterministic(self, binary_law):
        a = sweep_cell(binary_law, "internal", 51, 3, 9)
        b = sweep_cell(binary_law, "internal", 51, 3, 9)
        a.pop("runtime"), b.pop("runtime")
        assert a == b

    def test_small_sweep_flagged(self, binary_law):
        res = scaling_sweep(binary_law, "internal", [51, 101, 201], reps=10, seed=1, n_boot=200)
        assert res.flagged
        assert res.predicted == 0.25
        assert np.isfinite(res.slope) and res.slope_se > 0
        ns, means = res.means()
        assert ns.tolist() == [51, 101, 201] and np.all(np.diff(means) > 0)

    def test_summary_reproducible(self, binary_law):
        res = scaling_sweep(binary_law, "internal", [51, 101], reps=8, seed=2, n_boot=100)
        again = summarise_sweep(binary_law, res.rows, [51, 101], 2, reps=8, n_boot=100)
        assert (again.slope, again.slope_se) == (res.slope, res.slope_se)
