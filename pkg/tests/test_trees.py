import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chi2_contingency, chisquare

from conftest import REF_H, REF_K, REF_W
from stablemaps.trees import (ConditioningSpec, InvalidEncoding, LatticeInfeasible, LatticePath,
                              PlaneTree, SamplingError, cyclic_shift_to_excursion, enumerate_trees,
                              height_process, lattice_feasible, leaf_index_map, lukasiewicz,
                              sample_bgw, sample_conditioned, tree_from_lukasiewicz)
from stablemaps.weights import OffspringLaw

CATALAN = [1, 1, 2, 5, 14, 42, 132]

# mu(1) > 0 so leaf- and internal-conditioned families are infinite
LAZY = OffspringLaw(np.array([0.5, 0.2, 0.1, 0.2]))


def small_trees(max_vertices):
    for e in range(max_vertices):
        yield from enumerate_trees(e)


def tree_prob(law, tree):
    return math.prod(float(law.pmf(int(k))) for k in tree.k)


class TestEncodings:
    def test_single_vertex(self):
        t = PlaneTree([0])
        assert lukasiewicz(t).values.tolist() == [0, -1]
        assert height_process(t).values.tolist() == [0]
        assert tree_from_lukasiewicz([0, -1]) == t

    def test_cherry(self):
        t = PlaneTree([2, 0, 0])
        assert lukasiewicz(t).values.tolist() == [0, 1, 0, -1]
        assert tree_from_lukasiewicz([0, 1, 0, -1]).k.tolist() == [2, 0, 0]

    def test_path_height(self):
        assert height_process(PlaneTree([1, 1, 0])).values.tolist() == [0, 1, 2]

    def test_ref_tree(self, ref_tree):
        W = lukasiewicz(ref_tree)
        assert W.values.tolist() == REF_W
        assert W[1] == 3
        H = height_process(ref_tree)
        assert H.values.tolist() == REF_H
        assert max(H.values) == 4

    def test_reference_counts(self, ref_tree):
        assert ref_tree.n_vertices == 17
        assert ref_tree.n_edges == 16
        assert ref_tree.n_leaves == 11

    @pytest.mark.parametrize("bad", [[0, 1, -1], [0, -2], [0, 0], [0, 1, 3, -1], [1, 0, -1]])
    def test_invalid_paths(self, bad):
        with pytest.raises(InvalidEncoding):
            tree_from_lukasiewicz(bad)

    def test_invalid_children_counts(self):
        with pytest.raises(InvalidEncoding):
            PlaneTree([0, 0])
        with pytest.raises(InvalidEncoding):
            PlaneTree([1, 0, 0])

    def test_lattice_path_interpolation(self):
        step = LatticePath(np.array([0, 2, 1, 0, -1]), "lukasiewicz")
        lin = LatticePath(np.array([0, 2, 1]), "height")
        assert step.at(0.5) == 0 and step.at(1.0) == 2
        assert lin.at(0.5) == pytest.approx(1.0)


class TestExhaustive:
    @pytest.mark.parametrize("e", range(7))
    def test_catalan_counts(self, e):
        trees = list(enumerate_trees(e))
        assert len(trees) == CATALAN[e]
        assert len(set(trees)) == CATALAN[e]

    def test_all_excursions_of_length_five(self):
        # every path with 5 steps >= -1 that first hits -1 at the end
        found = set()
        for steps in itertools.product(range(-1, 5), repeat=5):
            w = np.concatenate([[0], np.cumsum(steps)])
            if w[-1] == -1 and np.all(w[:-1] >= 0):
                found.add(tree_from_lukasiewicz(w))
        assert found == set(enumerate_trees(4))

    def test_round_trip_small(self):
        for t in small_trees(7):
            assert tree_from_lukasiewicz(lukasiewicz(t)) == t

    def test_path_identities(self):
        """W(u k_u) = W(u), W(uj') = min over [uj, uj'] of W, and j' - j = W(uj) - W(uj')."""
        for t in small_trees(7):
            W = lukasiewicz(t).values
            for u in range(t.n_vertices):
                ch = t.children(u)
                if not ch:
                    continue
                assert W[ch[-1]] == W[u]
                for a, b in itertools.combinations_with_replacement(range(len(ch)), 2):
                    ja, jb = ch[a], ch[b]
                    assert W[jb] == W[ja: jb + 1].min()
                    assert b - a == W[ja] - W[jb]

    def test_navigation_tables(self, ref_tree):
        t = ref_tree
        assert t.children(0) == [1, 2, 3, 11]
        assert t.children(5) == [6, 7, 8, 9]
        assert t.parent[14] == 12
        assert t.subtree_size[3] == 8
        assert t.last_leaf[0] == 16
        assert t.last_leaf[3] == 10


class TestRandomRoundTrip:
    def test_thousand_random_trees(self, mixed_law):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            t = sample_bgw(mixed_law, rng, size_cap=5000)
            if t is None:
                continue
            assert tree_from_lukasiewicz(lukasiewicz(t)) == t
            h = height_process(t).values
            assert h[0] == 0 and np.all(h[t.parent[1:] if t.n_vertices > 1 else []] + 1 == h[1:])


class TestLeafIndex:
    def test_cherry(self):
        g, lam = leaf_index_map(PlaneTree([2, 0, 0]))
        assert g.tolist() == [1, 2]
        assert lam[-1] == 2

    def test_single(self):
        g, lam = leaf_index_map(PlaneTree([0]))
        assert g.tolist() == [0]
        assert lam[-1] == 1

    def test_defining_identity(self, ref_tree):
        g, lam = leaf_index_map(ref_tree)
        assert np.all(np.diff(g) > 0)
        assert np.all(np.diff(lam) >= 0)
        assert lam[-1] == ref_tree.n_leaves
        assert [lam[j] for j in g] == list(range(1, g.size + 1))


class TestBGW:
    def test_dirac_zero(self):
        law = OffspringLaw(np.array([1.0]))
        rng = np.random.default_rng(0)
        assert all(sample_bgw(law, rng).n_vertices == 1 for _ in range(50))

    def test_small_size_frequencies(self, binary_law):
        rng = np.random.default_rng(11)
        N = 100_000
        sizes = np.array([t.n_vertices if t is not None else -1
                          for t in (sample_bgw(binary_law, rng, size_cap=200) for _ in range(N))])
        for size, p in ((1, 0.5), (3, 0.125)):
            emp = np.mean(sizes == size)
            assert abs(emp - p) < 3 * math.sqrt(p * (1 - p) / N)

    def test_overflow_is_none(self, binary_law):
        rng = np.random.default_rng(2)
        outs = [sample_bgw(binary_law, rng, size_cap=3) for _ in range(200)]
        assert any(t is None for t in outs)
        assert all(t is None or t.n_vertices <= 3 for t in outs)


class TestConditioned:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ConditioningSpec("all", 1)
        with pytest.raises(ValueError):
            ConditioningSpec("roots", 5)

    def test_parity_infeasible(self, binary_law):
        assert not lattice_feasible(binary_law, "all", 2)
        with pytest.raises(LatticeInfeasible):
            sample_conditioned(binary_law, ConditioningSpec("all", 2), np.random.default_rng(0))

    def test_unique_three_vertex_tree(self, binary_law):
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert sample_conditioned(binary_law, ConditioningSpec("all", 3), rng).k.tolist() == [2, 0, 0]

    def test_cyclic_shift(self):
        out = cyclic_shift_to_excursion(np.array([0, 0, 2]))
        assert out.tolist() == [2, 0, 0]

    def test_five_vertex_law(self, binary_law):
        rng = np.random.default_rng(17)
        N = 100_000
        c = Counter(tuple(sample_conditioned(binary_law, ConditioningSpec("all", 5), rng).k.tolist())
                    for _ in range(N))
        assert set(c) == {(2, 2, 0, 0, 0), (2, 0, 2, 0, 0)}
        assert chisquare(list(c.values())).pvalue > 1e-3

    @pytest.mark.parametrize("which,n", [("leaves", 2), ("internal", 2), ("all", 4)])
    def test_matches_brute_force(self, which, n):
        """Conditioned law restricted to trees with at most 8 vertices versus enumeration."""
        cap = 8
        support = [t for t in small_trees(cap) if t.count(which) == n]
        probs = np.array([tree_prob(LAZY, t) for t in support])
        keep = probs > 0
        support = [t for t, k in zip(support, keep) if k]
        probs = probs[keep] / probs[keep].sum()
        rng = np.random.default_rng(23)
        c = Counter()
        spec = ConditioningSpec(which, n)
        while sum(c.values()) < 40_000:
            t = sample_conditioned(LAZY, spec, rng)
            assert t.count(which) == n
            if t.n_vertices <= cap:
                c[t] += 1
        obs = np.array([c[t] for t in support])
        assert sum(obs) == sum(c.values())
        exp = probs * obs.sum()
        assert chisquare(obs, exp).pvalue > 1e-3

    @pytest.mark.parametrize("which", ["all", "leaves", "internal"])
    def test_vervaat_and_rejection_agree(self, which):
        n = 3
        rng = np.random.default_rng(31)
        draws = 6000
        a = Counter(tuple(sample_conditioned(LAZY, ConditioningSpec(which, n), rng).k.tolist())
                    for _ in range(draws))
        b = Counter(tuple(sample_conditioned(LAZY, ConditioningSpec(which, n, method="rejection",
                                                                   size_cap=10**5), rng).k.tolist())
                    for _ in range(draws))
        # pool rare shapes, then a two-sample chi-square on the common ones
        keys = [k for k in set(a) | set(b) if a[k] + b[k] >= 40]
        rest_a = draws - sum(a[k] for k in keys)
        rest_b = draws - sum(b[k] for k in keys)
        table = np.array([[a[k] for k in keys] + [rest_a], [b[k] for k in keys] + [rest_b]])
        table = table[:, table.sum(axis=0) > 0]
        assert chi2_contingency(table).pvalue > 1e-3

    def test_counts_exact(self, mixed_law):
        rng = np.random.default_rng(5)
        for which in ("all", "leaves", "internal"):
            for n in ((3, 11, 101) if which == "all" else (2, 10, 101)):
                t = sample_conditioned(mixed_law, ConditioningSpec(which, n), rng)
                assert t.count(which) == n

    def test_exhaustion_reports_rate(self, binary_law):
        spec = ConditioningSpec("all", 501, method="rejection", max_attempts=3)
        with pytest.raises(SamplingError) as info:
            sample_conditioned(binary_law, spec, np.random.default_rng(0))
        assert info.value.attempts == 3
        assert info.value.acceptance_rate == 0.0

    def test_size_ratio_moderate_n(self, mixed_law):
        rng = np.random.default_rng(8)
        z = [sample_conditioned(mixed_law, ConditioningSpec("internal", 1000), rng).n_edges
             for _ in range(40)]
        assert np.mean(z) / 1000 == pytest.approx(1 / 0.4, rel=0.05)
