import math

import numpy as np
import pytest

from stablemaps.weights import (OffspringLaw, PowerTail, WeightSeq, WeightsError, classify, eval_dg,
                                eval_g, log_binom_faces, make_stable_offspring, normalizer,
                                offspring_law, weights_from_offspring)

QUAD = WeightSeq({2: 1 / 12})
HEX = WeightSeq({3: 2 / 135})


class TestEvalG:
    def test_quadrangulation_values(self):
        assert eval_g(QUAD, 2.0) == pytest.approx(2.0, abs=1e-15)
        assert eval_g(QUAD, 1.0) == pytest.approx(1.25, abs=1e-15)

    def test_zero_is_exactly_one(self):
        assert eval_g(QUAD, 0.0) == 1.0
        assert eval_g(HEX, 0.0) == 1.0

    def test_derivative_matches_finite_difference(self):
        h = 1e-6
        fd = (eval_g(HEX, 1.2 + h) - eval_g(HEX, 1.2 - h)) / (2 * h)
        assert eval_dg(HEX, 1.2) == pytest.approx(fd, rel=1e-7)

    def test_bound_reported_for_tails(self):
        mu = make_stable_offspring(1.5, 4)
        q = weights_from_offspring(mu)
        val, bound = eval_g(q, 0.9 / mu.pmf(0), with_bound=True)
        assert math.isfinite(val) and 0 <= bound < 1e-6

    def test_log_binomial_agrees_with_exact(self):
        for k in (1, 5, 30, 31, 60):
            assert float(log_binom_faces(k)) == pytest.approx(math.log(math.comb(2 * k - 1, k - 1)), rel=1e-12)


class TestWeightSeq:
    def test_negative_weight_rejected(self):
        with pytest.raises(WeightsError):
            WeightSeq({2: -0.1})

    def test_zero_index_rejected(self):
        with pytest.raises(WeightsError):
            WeightSeq({0: 0.1})

    def test_nontriviality_flag(self):
        assert not QUAD.is_nontrivial
        assert HEX.is_nontrivial
        assert WeightSeq({1: 0.01, 3: 0.001}).is_nontrivial


class TestClassify:
    def test_quadrangulation_critical(self):
        rep = classify(QUAD)
        assert rep.is_critical
        assert abs(rep.z - 2.0) < 1e-10
        assert rep.residual_g < 1e-10 and rep.residual_dg < 1e-10

    def test_hexangulation_critical(self):
        rep = classify(HEX)
        assert rep.is_critical
        assert abs(rep.z - 1.5) < 1e-10

    def test_subcritical_takes_smaller_root(self):
        rep = classify(WeightSeq({2: 1 / 24}))
        assert rep.classification == "subcritical-admissible"
        # 1 + q Z^2 * 3 = Z with q = 1/24: Z = 4 - 2 sqrt 2
        assert rep.z == pytest.approx(4 - 2 * math.sqrt(2), abs=1e-9)

    def test_supercritical_is_not_admissible(self):
        assert classify(WeightSeq({2: 1 / 6})).classification == "non-admissible"

    @pytest.mark.parametrize("kappa", [2, 3, 4, 5, 7])
    def test_angulation_family(self, kappa):
        q = (kappa - 1) ** (kappa - 1) / (math.comb(2 * kappa - 1, kappa - 1) * kappa**kappa)
        rep = classify(WeightSeq({kappa: q}))
        assert rep.is_critical
        assert rep.z == pytest.approx(kappa / (kappa - 1), abs=1e-9)

    def test_report_dict_keys(self):
        d = classify(QUAD).as_dict()
        assert set(d) == {"classification", "Z_q", "residual_g", "residual_dg"}


class TestOffspringLaw:
    def test_from_quadrangulation(self):
        mu = offspring_law(QUAD)
        assert mu.pmf(0) == pytest.approx(0.5) and mu.pmf(2) == pytest.approx(0.5)
        assert mu.mean == pytest.approx(1.0, abs=1e-12)
        assert mu.variance == pytest.approx(1.0, abs=1e-12)

    def test_from_hexangulation(self):
        mu = offspring_law(HEX)
        assert mu.pmf(0) == pytest.approx(2 / 3) and mu.pmf(3) == pytest.approx(1 / 3)
        assert abs(mu.mean - 1) < 1e-9

    def test_refuses_noncritical(self):
        with pytest.raises(WeightsError):
            offspring_law(WeightSeq({2: 1 / 24}))

    def test_mass_of_sets(self, mixed_law):
        assert mixed_law.mass_of("all") == pytest.approx(1.0)
        assert mixed_law.mass_of("leaves") == pytest.approx(0.6)
        assert mixed_law.mass_of("internal") == pytest.approx(0.4)

    def test_truncated_variance_limits(self, binary_law):
        assert binary_law.truncated_variance(10) == pytest.approx(binary_law.variance)
        assert binary_law.truncated_variance(1) == pytest.approx(0.0)

    def test_sampling_frequencies(self, mixed_law):
        x = mixed_law.sample(np.random.default_rng(1), 200_000)
        for k, p in enumerate(mixed_law.head):
            se = math.sqrt(p * (1 - p) / x.size)
            assert abs(np.mean(x == k) - p) < 4 * se + 1e-12


class TestInverse:
    def test_quadrangulation_weights(self, binary_law):
        q = weights_from_offspring(binary_law, 2.0)
        assert q.entries == pytest.approx({2: 1 / 12})

    def test_z_must_match_leaf_mass(self, binary_law):
        # only Z = 1/mu(0) makes the derived weights critical again
        with pytest.raises(WeightsError):
            weights_from_offspring(binary_law, 3.0)

    def test_mean_not_one_rejected(self):
        with pytest.raises(WeightsError):
            weights_from_offspring(OffspringLaw(np.array([0.4, 0.0, 0.6])), 2.0)

    def test_round_trip_finite(self, mixed_law):
        q = weights_from_offspring(mixed_law)
        back = offspring_law(q)
        assert np.max(np.abs(back.head[: mixed_law.head.size] - mixed_law.head)) < 1e-12

    def test_round_trip_heavy_tail(self):
        mu = make_stable_offspring(1.5, 3)
        back = offspring_law(weights_from_offspring(mu))
        ks = np.arange(0, 400)
        assert np.max(np.abs(back.pmf(ks) - mu.pmf(ks))) < 1e-12


class TestStable:
    @pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
    def test_mean_one(self, alpha):
        mu = make_stable_offspring(alpha, 2)
        assert abs(mu.mean - 1) < 1e-12
        assert mu.alpha == alpha
        assert math.isinf(mu.variance)

    def test_alpha_two_finite_variance(self):
        mu = make_stable_offspring(2.0, 3)
        assert math.isfinite(mu.variance)
        assert normalizer(mu).rule == "variance"

    def test_exact_tail_ratio(self):
        mu = make_stable_offspring(1.5, 2)
        for j in (10, 100, 1000):
            assert float(mu.sf(2 * j) / mu.sf(j)) == pytest.approx(2 ** -1.5, rel=1e-12)

    def test_empirical_tail_ratio(self):
        mu = make_stable_offspring(1.5, 2)
        x = mu.sample(np.random.default_rng(5), 2_000_000)
        a, b = np.count_nonzero(x >= 20), np.count_nonzero(x >= 40)
        ratio = b / a
        se = math.sqrt(ratio * (1 - ratio) / a)
        assert abs(ratio - 2 ** -1.5) < 4 * se

    def test_bad_alpha(self):
        with pytest.raises(WeightsError):
            make_stable_offspring(0.9)


class TestNormalizer:
    def test_closed_form(self, binary_law):
        B = normalizer(binary_law)
        assert B(200) == pytest.approx(10.0)
        assert B(4 * 123) == pytest.approx(2 * B(123))

    def test_zero(self, binary_law):
        assert normalizer(binary_law)(0) == 0.0

    def test_quantile_ratio(self):
        B = normalizer(make_stable_offspring(1.5, 2))
        assert B.rule == "tail-quantile"
        n = 10**9
        assert B(n) / B(2 * n) == pytest.approx(2 ** (-2 / 3), rel=1e-3)

    def test_monotone(self):
        B = normalizer(make_stable_offspring(1.5, 2))
        vals = B(np.arange(1, 5000))
        assert np.all(np.diff(vals) >= 0)

    def test_negative_rejected(self, binary_law):
        with pytest.raises(ValueError):
            normalizer(binary_law)(-1)
