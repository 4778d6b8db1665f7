import math

import numpy as np
import pytest

from cv.src.generators import true_functions
from cv.src.smoothing import fit_smoother, kernel_density, select_bandwidths
from cv.src.statistic import (
    decompose,
    estimate_c2,
    mu0_plugin,
    pair_sum,
    phi_terms,
    population_c2,
    population_distance,
    resolve_weights,
    standardized_statistic,
    t_statistic,
    trimmed_bounds,
    trimmed_mask,
    u_statistic,
)
from utils.errors import NumericalError, ZeroDenominator
from utils.models import (
    Bandwidths,
    Kernel,
    ModelSpec,
    Sample,
    SmootherFit,
    SmoothingConfig,
    StatisticInput,
    WeightFn,
)

EPA = Kernel()
NOWHERE = WeightFn(lower=10.0, upper=11.0, ramp=0.1)


def dense_t(x, y, m_hat, weights, c2, g, k):
    """T_n(c) from the full n x n kernel matrix; also returns the sum of absolute summands."""
    phi = (c2 * y ** 2 - (c2 + 1.0) * m_hat ** 2) * weights
    kg = k((x[:, None] - x[None, :]) / g) / g
    np.fill_diagonal(kg, 0.0)
    n = len(x)
    terms = kg * np.outer(phi, phi)
    return terms.sum() / (n * (n - 1)), np.abs(terms).sum() / (n * (n - 1))


def make_input(sample, m_hat, sigma2=None, residuals=None, g=0.2, w=None, w_star=None, k=EPA):
    n = sample.n
    sigma2 = np.ones(n) if sigma2 is None else sigma2
    residuals = sample.y - m_hat if residuals is None else residuals
    fit = SmootherFit(m_hat=m_hat, sigma2_hat=sigma2, residuals=residuals,
                      bandwidths=Bandwidths(0.2, 0.2, g))
    return StatisticInput(sample=sample, fit=fit, g=g, kernel=k,
                          w=w or WeightFn.covering(sample.x), w_star=w_star)


def fitted_input(sample, h=0.3, g=0.1, k=EPA):
    fit = fit_smoother(sample, Bandwidths(h, h, g), k)
    return StatisticInput(sample=sample, fit=fit, g=g, kernel=k, w=WeightFn.covering(sample.x))


def pipeline_input(sample):
    bw = select_bandwidths(sample, SmoothingConfig())
    fit = fit_smoother(sample, bw, EPA)
    return StatisticInput(sample=sample, fit=fit, g=bw.g, kernel=EPA, w=WeightFn.covering(sample.x))


class TestPairSum:

    def test_two_points_by_hand(self):
        x = np.array([0.0, 0.1])
        phi = phi_terms([1.0, 2.0], [1.2, 1.6], [1.0, 1.0], c2=1.0)

        value = u_statistic(x, phi, phi, g=1.0, k=EPA)

        assert value == pytest.approx(float(EPA(-0.1)) * phi[0] * phi[1] * 2.0 / 2.0, rel=1e-14)

    def test_symmetric_in_its_arguments(self):
        rng = np.random.default_rng(0)
        x, u, v = rng.uniform(size=(3, 40))

        assert pair_sum(x, u, v, 0.2, EPA) == pytest.approx(pair_sum(x, v, u, 0.2, EPA), rel=1e-13)

    def test_needs_two_observations(self):
        with pytest.raises(ValueError, match="two observations"):
            u_statistic([0.5], [1.0], [1.0], 0.1, EPA)

    def test_ties_in_x(self):
        x = np.array([0.0, 0.0, 0.0, 1.0])
        ones = np.ones(4)

        # three tied points give six ordered pairs at distance zero
        assert pair_sum(x, ones, ones, 0.5, EPA) == pytest.approx(6 * 0.75 / 0.5)


class TestTStatistic:

    def test_zero_weight_gives_zero(self, s6_100):
        inp = make_input(s6_100, m_hat=np.ones(100), w=NOWHERE)

        assert t_statistic(inp, 1.0) == 0.0

    def test_matches_dense_oracle_on_generated_sample(self, make_s6):
        s = make_s6(30, seed=8)
        inp = fitted_input(s, g=0.15)

        expected, scale = dense_t(s.x, s.y, inp.fit.m_hat, inp.statistic_weights(), 1.3, 0.15, EPA)

        assert t_statistic(inp, 1.3) == pytest.approx(expected, rel=1e-12, abs=1e-12 * scale)

    @pytest.mark.parametrize("family", ["epanechnikov", "gaussian-truncated"])
    def test_matches_dense_oracle_on_random_inputs(self, family):
        k = Kernel(family)
        for seed in range(25):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(5, 201))
            s = Sample(x=rng.uniform(size=n), y=rng.normal(1.0, 1.0, size=n))
            m_hat = rng.normal(1.0, 0.5, size=n)
            g = rng.uniform(0.01, 0.5)
            c2 = rng.uniform(0.2, 3.0)
            w = WeightFn(lower=-0.1, upper=1.1, ramp=0.3) if seed % 2 else None
            inp = make_input(s, m_hat, g=g, w=w, k=k)

            expected, scale = dense_t(s.x, s.y, m_hat, inp.statistic_weights(), c2, g, k)

            assert t_statistic(inp, c2) == pytest.approx(expected, rel=1e-12, abs=1e-12 * scale)

    def test_vanishing_summands(self, s6_100):
        c2 = 0.64
        m_hat = 1.0 + s6_100.x
        s = s6_100.with_response(math.sqrt((c2 + 1.0) / c2) * m_hat)
        inp = make_input(s, m_hat)

        assert t_statistic(inp, c2) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariance(self, s6_100):
        inp = fitted_input(s6_100)
        order = np.random.default_rng(1).permutation(s6_100.n)
        permuted = make_input(Sample(x=s6_100.x[order], y=s6_100.y[order]),
                              m_hat=inp.fit.m_hat[order], g=inp.g)

        assert t_statistic(permuted, 0.8) == pytest.approx(t_statistic(inp, 0.8), rel=1e-12)

    def test_c2_must_be_positive(self, s6_100):
        with pytest.raises(ValueError, match="positive"):
            t_statistic(fitted_input(s6_100), 0.0)


class TestTrimming:

    def test_bounds_for_hundred_points(self):
        x = np.random.default_rng(2).permutation(np.arange(100.0))

        assert trimmed_bounds(x) == (4.0, 94.0)
        assert trimmed_mask(x).sum() == 91

    def test_lower_index_is_clamped(self):
        x = np.arange(10.0)

        assert trimmed_bounds(x) == (0.0, 8.0)


class TestEstimateC2:

    def _input(self, m_factor, sign_flip=False):
        x = np.linspace(0.0, 1.0, 50)
        sigma2 = 1.0 + x
        sigma = np.sqrt(sigma2)
        residuals = sigma * (np.where(np.arange(50) % 2, -1.0, 1.0) if sign_flip else 1.0)
        m_hat = m_factor * sigma
        s = Sample(x=x, y=m_hat + residuals)
        return make_input(s, m_hat, sigma2=sigma2, residuals=residuals)

    def test_equal_sums_give_one(self):
        assert estimate_c2(self._input(1.0)).c2_hat == pytest.approx(1.0, rel=1e-12)

    def test_constant_factor(self):
        assert estimate_c2(self._input(2.0, sign_flip=True)).c2_hat == pytest.approx(4.0, rel=1e-12)

    def test_ratio_of_reported_sums(self):
        scale = estimate_c2(self._input(1.5))

        assert scale.c2_hat == scale.numerator / scale.denominator

    def test_rescaling_the_response(self, s6_100):
        inp = fitted_input(s6_100)
        lam = 3.7
        scaled = make_input(s6_100.with_response(lam * s6_100.y), m_hat=lam * inp.fit.m_hat,
                            sigma2=lam ** 2 * inp.fit.sigma2_hat, residuals=lam * inp.fit.residuals)

        assert estimate_c2(scaled).c2_hat == pytest.approx(estimate_c2(inp).c2_hat, rel=1e-12)

    def test_trimming_drops_the_tails(self, s6_100):
        inp = fitted_input(s6_100)
        fit, x = inp.fit, s6_100.x
        keep = trimmed_mask(x)

        expected = (np.sum((fit.m_hat ** 2 * fit.residuals ** 2)[keep])
                    / np.sum((fit.sigma2_hat ** 2)[keep]))

        assert estimate_c2(inp).c2_hat == pytest.approx(expected, rel=1e-12)

    def test_weighted_variant_uses_cubed_weight(self, s6_100):
        w_star = WeightFn(lower=0.2, upper=0.8, ramp=0.1)
        base = fitted_input(s6_100)
        inp = make_input(s6_100, base.fit.m_hat, sigma2=base.fit.sigma2_hat, w_star=w_star)
        weight = w_star(s6_100.x) ** 3 * trimmed_mask(s6_100.x)

        expected = (np.sum(inp.fit.m_hat ** 2 * inp.fit.residuals ** 2 * weight)
                    / np.sum(inp.fit.sigma2_hat ** 2 * weight))

        assert estimate_c2(inp).c2_hat == pytest.approx(expected, rel=1e-12)

    def test_weighted_variant_uses_the_weighted_variance(self, s6_100):
        w_star = WeightFn(lower=0.2, upper=0.8, ramp=0.1)
        base = fitted_input(s6_100)
        sigma2_star = 2.0 * base.fit.sigma2_hat
        fit = SmootherFit(m_hat=base.fit.m_hat, sigma2_hat=base.fit.sigma2_hat,
                          residuals=base.fit.residuals, bandwidths=base.fit.bandwidths,
                          sigma2_star=sigma2_star)
        weighted = StatisticInput(sample=s6_100, fit=fit, g=0.1, kernel=EPA,
                                  w=WeightFn.covering(s6_100.x), w_star=w_star)
        plain = StatisticInput(sample=s6_100, fit=fit, g=0.1, kernel=EPA,
                               w=WeightFn.covering(s6_100.x))
        without_star = make_input(s6_100, base.fit.m_hat, sigma2=base.fit.sigma2_hat,
                                  residuals=base.fit.residuals, w_star=w_star)

        assert estimate_c2(weighted).c2_hat == pytest.approx(
            estimate_c2(without_star).c2_hat / 4.0, rel=1e-12)
        assert estimate_c2(plain).c2_hat == pytest.approx(
            estimate_c2(fitted_input(s6_100)).c2_hat, rel=1e-12)

    def test_zero_weight_denominator(self, s6_100):
        with pytest.raises(ZeroDenominator):
            estimate_c2(make_input(s6_100, np.ones(100), w=NOWHERE))

    def test_zero_mean_numerator(self, s6_100):
        with pytest.raises(NumericalError, match="numerator"):
            estimate_c2(make_input(s6_100, np.zeros(100)))


class TestDecompose:

    def test_zero_weight(self, make_s6):
        s = make_s6(20, seed=4)
        truth = true_functions(ModelSpec("S6", 20, c=1.0))
        inp = make_input(s, np.ones(20), w=NOWHERE)

        parts = decompose(inp, 1.0, truth.m, truth.sigma)

        assert (parts.t1, parts.t2, parts.t3, parts.t4, parts.t5, parts.t6) == (0, 0, 0, 0, 0, 0)

    def test_oracle_fit_removes_estimation_terms(self, make_s6):
        s = make_s6(20, seed=5)
        truth = true_functions(ModelSpec("S6", 20, c=1.0))
        inp = make_input(s, m_hat=truth.m(s.x))

        parts = decompose(inp, 1.0, truth.m, truth.sigma)

        assert parts.t1 == 0.0
        assert parts.t2 == 0.0
        assert parts.t3 == 0.0
        assert parts.t4 != 0.0

    def test_recombination_reproduces_the_statistic(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(10, 51))
            c = rng.uniform(0.5, 1.5)
            spec = ModelSpec("S6", n, c=c)
            truth = true_functions(spec)
            x = rng.uniform(size=n)
            s = Sample(x=x, y=truth.m(x) + truth.sigma(x) * rng.standard_normal(n))
            g, c2 = rng.uniform(0.05, 0.5), rng.uniform(0.25, 2.25)
            inp = fitted_input(s, h=0.3, g=g)

            parts = decompose(inp, c2, truth.m, truth.sigma)
            a = c2 + 1.0
            magnitude = (a ** 2 * abs(parts.t1) + 4 * a * c2 * abs(parts.t2) + 2 * a * abs(parts.t3)
                         + abs(parts.t4) + 4 * c2 * abs(parts.t5) + 4 * c2 ** 2 * abs(parts.t6))

            assert parts.recombine(c2) == pytest.approx(
                t_statistic(inp, c2), rel=1e-10, abs=1e-12 * magnitude)


class TestMu0Plugin:

    def test_forced_inputs(self):
        x = np.linspace(0.0, 1.0, 20)
        s = Sample(x=x, y=1.0 + np.sin(7 * x))
        inp = make_input(s, m_hat=np.ones(20))

        value = mu0_plugin(inp, 0.5, m3=0.0, m4=3.0, density=1.0)

        assert value == pytest.approx(19.2, rel=1e-12)

    def test_agrees_with_direct_evaluation(self, make_s6):
        s = make_s6(200, seed=9)
        inp = pipeline_input(s)
        c2 = estimate_c2(inp).c2_hat

        eta = inp.fit.residuals / np.sqrt(inp.fit.sigma2_hat)
        eps = (eta - eta.mean()) / eta.std(ddof=1)
        m3, m4 = np.mean(eps ** 3), np.mean(eps ** 4)
        f_hat = kernel_density(s.x, s.x, EPA)
        factor = (-1.0 + 4.0 * c2 + 4.0 * math.sqrt(c2) * m3 + m4) ** 2
        expected = 2.0 * np.mean(factor * inp.fit.m_hat ** 8 * f_hat) * 0.6

        value = mu0_plugin(inp, c2)

        assert np.isfinite(value) and value > 0
        assert value == pytest.approx(expected, rel=1e-12)

    def test_needs_ten_observations(self, make_s6):
        s = make_s6(8, seed=1)

        with pytest.raises(ValueError, match="at least 10"):
            mu0_plugin(make_input(s, np.ones(8)), 1.0)

    def test_standardized_statistic(self, make_s6):
        s = make_s6(25, seed=2)
        inp = make_input(s, np.ones(25), g=0.04)

        assert standardized_statistic(inp, 0.5, 4.0) == pytest.approx(25 * 0.2 * 0.5 / 2.0)

    def test_standardized_statistic_needs_positive_variance(self, make_s6):
        s = make_s6(25, seed=2)

        with pytest.raises(NumericalError):
            standardized_statistic(make_input(s, np.ones(25)), 0.5, 0.0)


class TestPopulationTargets:

    def test_null_model_recovers_c_squared(self):
        truth = true_functions(ModelSpec("S6", 50, c=1.5))

        assert population_c2(truth.m, truth.sigma) == pytest.approx(2.25, rel=1e-10)
        assert population_distance(truth.m, truth.sigma, 2.25) == pytest.approx(0.0, abs=1e-12)

    def test_alternative_has_positive_distance(self):
        truth = true_functions(ModelSpec("S8", 50, c=1.0))
        c0 = population_c2(truth.m, truth.sigma)

        best = population_distance(truth.m, truth.sigma, c0)

        assert best > 0
        assert best < population_distance(truth.m, truth.sigma, 1.1 * c0)
        assert best < population_distance(truth.m, truth.sigma, 0.9 * c0)


class TestResolveWeights:

    def test_unweighted(self, s6_100):
        w, w_star = resolve_weights(s6_100, SmoothingConfig(), weighted=False)

        assert w_star is None
        assert np.all(w(s6_100.x) == 1.0)

    def test_weighted_default_sits_on_the_trimmed_range(self, s6_100):
        w, w_star = resolve_weights(s6_100, SmoothingConfig(), weighted=True)

        assert (w_star.lower, w_star.upper) == trimmed_bounds(s6_100.x)
        assert w.covers(w_star)

    def test_explicit_w_star(self, s6_100):
        chosen = WeightFn(0.3, 0.7, 0.05)

        _, w_star = resolve_weights(s6_100, SmoothingConfig(w_star=chosen), weighted=True)

        assert w_star is chosen


@pytest.mark.slow
class TestScaleConsistency:

    def test_c2_hat_near_one_at_n_200(self, make_s6):
        estimates = [estimate_c2(pipeline_input(make_s6(200, seed=1000 + r))).c2_hat
                     for r in range(200)]

        assert np.mean(np.abs(np.array(estimates) - 1.0) <= 0.3) >= 0.9

    def test_c2_hat_concentrates_as_n_grows(self, make_s6):
        def spread(n):
            values = [estimate_c2(pipeline_input(make_s6(n, seed=5000 + r))).c2_hat
                      for r in range(200)]
            q1, median, q3 = np.percentile(values, [25, 50, 75])
            return median, q3 - q1

        _, iqr_100 = spread(100)
        median_400, iqr_400 = spread(400)

        assert abs(median_400 - 1.0) <= 0.15
        assert iqr_400 < iqr_100
