import math

import numpy as np
import pytest

import oracles
from torusot.errors import ArgumentError, DivergenceError, NumericError
from torusot.limits import (
    R0_CIRCLE,
    LimitSample,
    interpolation_family_information,
    ks_distance,
    limit_law_moments,
    rate_fit,
    rate_function_circle,
    sample_limit_law,
)


class TestSampleLimitLaw:
    def test_mean_matches_series_d1(self):
        s = sample_limit_law(1, 0.0, 200_000, 1e-3, seed=0)
        sd = math.sqrt(limit_law_moments(1, 0.0)[1])
        se = sd / math.sqrt(len(s.values))
        assert abs(s.values.mean() - oracles.LIMIT_SERIES_D1) < 3 * se

    def test_mean_and_variance_match_series_at_1e6(self):
        # moments at n = 1e6 for five (d, r) combinations;
        # the truncation tolerance is loosened where shells are dense (the
        # tail-mean compensation keeps the mean exact regardless)
        from torusot.spectral import limit_series

        truth = {
            (1, 0.0): oracles.LIMIT_SERIES_D1,
            (1, 0.3): limit_series(1, 0.3).value,
            (2, 0.0): oracles.LIMIT_SERIES_D2,
            (3, 0.0): oracles.LIMIT_SERIES_D3,
            (4, 0.3): limit_series(4, 0.3).value,
        }
        n = 1_000_000
        for d, r, tol in [(1, 0.0, 1e-3), (1, 0.3, 1e-3), (2, 0.0, 1e-2), (3, 0.0, 3e-2), (4, 0.3, 1e-2)]:
            s = sample_limit_law(d, r, n, tol, seed=d * 10 + 1)
            _, var_th = limit_law_moments(d, r)
            se = math.sqrt(var_th / n)
            assert abs(s.values.mean() - truth[(d, r)]) < 3 * se + tol**2, (d, r)
            var_emp = s.values.var(ddof=1)
            se_var = var_th * math.sqrt(15.0 / n)
            assert abs(var_emp - var_th) < 3 * se_var + tol**2, (d, r)

    def test_variance_matches(self):
        s = sample_limit_law(1, 0.0, 200_000, 1e-3, seed=3)
        _, var_th = limit_law_moments(1, 0.0)
        var_emp = s.values.var(ddof=1)
        # SE of the sample variance ~ var * sqrt(2 (kurt-adjusted) / n); the
        # chi-square mix has excess kurtosis ~ 12 on the leading term
        se = var_th * math.sqrt(15.0 / len(s.values))
        assert abs(var_emp - var_th) < 3 * se

    def test_zero_noise_hook(self):
        s = sample_limit_law(1, 0.2, 50, 1e-3, seed=1, zero_noise=True)
        assert np.allclose(s.values, s.tail_mean)

    def test_values_dominate_tail_mean(self):
        s = sample_limit_law(2, 0.1, 1000, 1e-2, seed=2)
        assert s.tail_mean >= 0
        assert np.all(s.values >= s.tail_mean)

    def test_divergence_error(self):
        with pytest.raises(DivergenceError):
            sample_limit_law(4, 0.0, 10, 1e-3, seed=0)

    def test_explicit_shell_count(self):
        s = sample_limit_law(1, 0.5, 1000, 3, seed=4)
        # 3 shells on the circle = 6 modes
        assert s.truncation_count == 6
        assert s.tail_mean > 0

    def test_save_load_roundtrip(self, tmp_path):
        s = sample_limit_law(1, 0.1, 100, 1e-2, seed=5)
        path = tmp_path / "sample.bin"
        s.save(path)
        s2 = LimitSample.load(path)
        assert np.array_equal(s2.values, s.values)
        assert s2.r == s.r and s2.seed == s.seed and s2.tail_mean == s.tail_mean


class TestKSDistance:
    def test_identical(self):
        x = np.arange(10.0)
        assert ks_distance(x, x.copy()) == 0.0

    def test_disjoint_ordered(self):
        assert ks_distance([1.0, 2.0], [5.0, 6.0]) == 1.0

    def test_null_calibration(self):
        # two independent draws of the same law stay below 0.03 at n = 1e4
        a = sample_limit_law(1, 0.0, 10_000, 1e-3, seed=10).values
        b = sample_limit_law(1, 0.0, 10_000, 1e-3, seed=11).values
        assert oracles.ks_critical(10_000, 10_000, alpha=0.01) < 0.03
        assert ks_distance(a, b) < 0.03

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(6)
        a, b, c = rng.normal(size=300), rng.normal(size=400) + 0.3, rng.normal(size=500) - 0.2
        assert ks_distance(a, b) == ks_distance(b, a)
        assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            ks_distance([], [1.0])


class TestRateFit:
    def test_pure_power_exact(self):
        ts = [100.0, 200.0, 400.0, 800.0]
        fit = rate_fit([(t, t ** (-2.0 / 3.0)) for t in ts], model="power")
        assert fit.slope == pytest.approx(-2.0 / 3.0, abs=1e-12)
        assert fit.residual < 1e-14

    def test_t_log_t_discrimination(self):
        ts = [500.0, 1000.0, 2000.0, 4000.0]
        pts = [(t, math.log(t) / t) for t in ts]
        power = rate_fit(pts, model="power")
        power_log = rate_fit(pts, model="power_log")
        assert -1.0 < power.slope < -0.8
        assert power_log.residual < power.residual
        assert power_log.residual < 1e-14

    def test_constant_values(self):
        fit = rate_fit([(10.0, 2.0), (20.0, 2.0), (40.0, 2.0)], model="power")
        assert fit.slope == pytest.approx(0.0, abs=1e-14)

    def test_bad_inputs(self):
        with pytest.raises(ArgumentError):
            rate_fit([(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)])
        with pytest.raises(ArgumentError):
            rate_fit([(1.0, 1.0), (2.0, 1.0)])
        with pytest.raises(ArgumentError):
            rate_fit([(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)], model="cubic")

    def test_json(self):
        import json

        fit = rate_fit([(10.0, 1.0), (20.0, 0.5), (40.0, 0.25)], model="power")
        data = json.loads(fit.to_json())
        assert data["model"] == "power"


class TestRateFunctionCircle:
    def test_zero_target(self):
        res = rate_function_circle(0.0, grid_n=64)
        assert res.value == 0.0
        assert np.allclose(res.density, 1.0)

    def test_monotone_and_quadratic_smallr(self):
        grid_n = 64
        values = {}
        g_init = None
        for r in (0.1, 0.2, 0.4):
            res = rate_function_circle(r, grid_n=grid_n, g_init=g_init)
            g_init = np.sqrt(res.density)
            assert res.constraint_residual < 1e-3
            values[r] = res.value
        assert values[0.1] <= values[0.2] + 1e-4
        assert values[0.2] <= values[0.4] + 1e-4
        # linearization: I(r)/r approaches lambda_1^2 / 4 = 0.25 for small r
        ratio = values[0.1] / 0.1
        assert 0.15 < ratio < 0.45

    def test_interpolation_family_dominated(self):
        res = rate_function_circle(0.3, grid_n=64)
        fam = interpolation_family_information(res.density, np.linspace(0, 0.95, 12))
        assert np.all(fam <= res.value + 1e-9)

    def test_target_out_of_range(self):
        with pytest.raises(ArgumentError):
            rate_function_circle(R0_CIRCLE + 0.1)
        with pytest.raises(ArgumentError):
            rate_function_circle(-0.1)
