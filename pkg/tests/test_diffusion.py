import math

import numpy as np
import pytest
import scipy.stats

import oracles
from torusot.diffusion import (
    CosinePotential,
    DiscreteMeasure,
    bin_points,
    density_on_grid,
    empirical_measure_grid,
    iter_path_chunks,
    psi_functionals,
    simulate_path,
    smoothed_density_coeffs,
    sup_deviation,
    time_sampled_measure,
    uniform_measure,
)
from torusot.errors import ArgumentError
from torusot.geometry import TWO_PI, enumerate_modes, geodesic_distance, heat_kernel_profile
from torusot.transport import w2_circle_exact

MODES_D1 = enumerate_modes(1, 25)


class TestSimulatePath:
    def test_determinism(self):
        p1 = simulate_path(2, 1.0, 0.01, seed=42)
        p2 = simulate_path(2, 1.0, 0.01, seed=42)
        assert np.array_equal(p1.points, p2.points)
        p3 = simulate_path(2, 1.0, 0.01, seed=43)
        assert not np.array_equal(p1.points, p3.points)

    def test_chunked_stream_matches_full_path(self):
        # same increment stream; wrapping at chunk boundaries only moves
        # values by float association
        full = simulate_path(3, 2.0, 0.01, seed=7, init=np.zeros(3))
        parts = [p for _, p in iter_path_chunks(3, 2.0, 0.01, seed=7, chunk_steps=37, init=np.zeros(3))]
        assert np.allclose(np.vstack(parts), full.points, atol=1e-10)

    def test_break_times_do_not_change_stream(self):
        full = simulate_path(1, 1.0, 0.01, seed=9, init=np.zeros(1))
        parts = [
            p
            for _, p in iter_path_chunks(
                1, 1.0, 0.01, seed=9, chunk_steps=1000, init=np.zeros(1), break_times=[0.35, 0.7]
            )
        ]
        assert np.allclose(np.vstack(parts), full.points, atol=1e-10)

    def test_single_step(self):
        p = simulate_path(1, 0.5, 0.5, seed=0, init=np.zeros(1))
        assert len(p.times) == 2
        assert p.times[-1] == 0.5

    def test_brownian_variance(self):
        # unwrapped displacement over t = 1 has variance 2 per coordinate
        n_rep = 10_000
        disp = np.empty(n_rep)
        for i in range(n_rep):
            p = simulate_path(1, 1.0, 0.05, seed=1000 + i, init=np.zeros(1))
            unwrapped = np.unwrap(p.points[:, 0], period=TWO_PI)
            disp[i] = unwrapped[-1] - unwrapped[0]
        var = disp.var(ddof=1)
        se = 2.0 * math.sqrt(2.0 / n_rep)
        assert abs(var - 2.0) < 3 * se

    def test_occupation_uniformity_ergodic(self):
        # chi-square against the ergodic-CLT null: psi_k(t) ~ N(0, 2/lambda_k)
        # independently over modes, so sum lambda_k psi_k^2 / 2 ~ chi2(#modes)
        path = simulate_path(1, 50.0, 1e-3, seed=5, init="stationary")
        modes = enumerate_modes(1, 64)  # k <= 8, 16 modes
        spec = psi_functionals(path, modes)
        stat = float(np.sum(modes.lambdas * spec.psi**2 / 2.0))
        assert stat < scipy.stats.chi2.ppf(0.99, len(modes))

    def test_stationarity_preserved_marginal(self):
        # uniform start; the marginal at a fixed time stays uniform
        n_rep, t = 10_000, 0.3
        xs = np.empty(n_rep)
        for i in range(n_rep):
            p = simulate_path(1, t, t, seed=50_000 + i)
            xs[i] = p.points[-1, 0]
        counts, _ = np.histogram(xs, bins=64, range=(0, TWO_PI))
        stat, pval = scipy.stats.chisquare(counts)
        assert pval > 0.01

    def test_wrap_invariance(self):
        p = simulate_path(1, 5.0, 0.01, seed=3, init=np.zeros(1))
        unwrapped = np.unwrap(p.points[:, 0], period=TWO_PI)
        geo = geodesic_distance(p.points[1:], p.points[:-1])
        assert np.all(geo <= np.abs(np.diff(unwrapped)) + 1e-12)

    def test_potential_drift_and_stationary_law(self):
        # strong cosine well concentrates mass near theta = 0:
        # exp(1.5 cos) has mean cos value I_1(1.5)/I_0(1.5) ~ 0.596
        pot = CosinePotential(1.5)
        p = simulate_path(1, 500.0, 5e-3, seed=12, potential=pot)
        expected = scipy.special.iv(1, 1.5) / scipy.special.iv(0, 1.5)
        assert np.mean(np.cos(p.points[:, 0])) == pytest.approx(expected, abs=0.05)

    def test_bad_arguments(self):
        with pytest.raises(ArgumentError):
            simulate_path(1, 0.0, 0.1, seed=0)
        with pytest.raises(ArgumentError):
            simulate_path(1, 1.0, -0.1, seed=0)
        with pytest.raises(ArgumentError):
            simulate_path(2, 1.0, 0.1, seed=0, potential=CosinePotential(1.0))

    def test_csv_export(self, tmp_path):
        p = simulate_path(2, 0.1, 0.05, seed=1)
        out = tmp_path / "path.csv"
        p.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "s,x_1,x_2"
        assert len(lines) == len(p.times) + 1


class TestPsiFunctionals:
    def test_constant_path(self):
        t = 4.0
        times = np.linspace(0, t, 11)
        pts = np.full((11, 1), 1.1)
        from torusot.diffusion import SamplePath

        path = SamplePath(times=times, points=pts, seed=0, dt=0.4)
        spec = psi_functionals(path, MODES_D1)
        from torusot.geometry import modes_eval_matrix

        expected = math.sqrt(t) * modes_eval_matrix(MODES_D1, np.array([[1.1]]))[0]
        assert np.allclose(spec.psi, expected, atol=1e-12)

    def test_stationary_second_moment(self):
        # E |psi_1(t)|^2 = 2 (1 - (1 - e^{-t})/t) at lambda = 1, t = 10
        n_rep = 3000
        modes = enumerate_modes(1, 1)
        vals = np.empty((n_rep, 2))
        for i in range(n_rep):
            p = simulate_path(1, 10.0, 0.01, seed=90_000 + i)
            vals[i] = psi_functionals(p, modes).psi ** 2
        mean = vals.mean()
        se = vals.mean(axis=1).std(ddof=1) / math.sqrt(n_rep)
        assert abs(mean - oracles.PSI_SQ_LAM1_T10) < 3 * se

    def test_parity_reflection(self):
        p = simulate_path(1, 2.0, 0.01, seed=13, init=np.zeros(1))
        from torusot.diffusion import SamplePath

        reflected = SamplePath(
            times=p.times, points=np.mod(-p.points, TWO_PI), seed=p.seed, dt=p.dt
        )
        s1 = psi_functionals(p, MODES_D1).psi
        s2 = psi_functionals(reflected, MODES_D1).psi
        sin_mask = MODES_D1.parities == 1
        assert np.allclose(s2[~sin_mask], s1[~sin_mask], atol=1e-10)
        assert np.allclose(s2[sin_mask], -s1[sin_mask], atol=1e-10)

    def test_mode_list_concatenation(self):
        p = simulate_path(1, 1.0, 0.01, seed=17)
        m1, m2 = MODES_D1[:4], MODES_D1[4:]
        s_all = psi_functionals(p, MODES_D1).psi
        s_cat = np.concatenate([psi_functionals(p, m1).psi, psi_functionals(p, m2).psi])
        assert np.array_equal(s_all, s_cat)

    def test_empty_modes(self):
        p = simulate_path(1, 1.0, 0.1, seed=17)
        assert len(psi_functionals(p, MODES_D1[:0]).psi) == 0


class TestSmoothedDensityCoeffs:
    def test_limits_in_r(self):
        p = simulate_path(1, 2.0, 0.01, seed=19)
        spec = psi_functionals(p, MODES_D1)
        c0 = smoothed_density_coeffs(spec, 0.0)
        assert np.allclose(c0, spec.psi / math.sqrt(spec.t))
        c_inf = smoothed_density_coeffs(spec, 50.0)
        assert np.max(np.abs(c_inf)) < 1e-12

    def test_parseval_identity_every_run(self):
        # grid quadrature of (f_{t,r} - 1)^2 equals the coefficient energy,
        # run by run (not only in expectation)
        modes = enumerate_modes(1, 144)
        for seed in (23, 24, 25):
            p = simulate_path(1, 20.0, 1e-3, seed=seed)
            spec = psi_functionals(p, modes)
            coeffs = smoothed_density_coeffs(spec, 0.05)
            f = density_on_grid(coeffs, modes, 256)
            lhs = oracles.quadrature_uniform((f - 1.0) ** 2)
            rhs = float(np.sum(coeffs**2))
            assert lhs == pytest.approx(rhs, rel=0.02)

    def test_negative_r_rejected(self):
        p = simulate_path(1, 1.0, 0.1, seed=1)
        spec = psi_functionals(p, MODES_D1)
        with pytest.raises(ArgumentError):
            smoothed_density_coeffs(spec, -0.1)


class TestEmpiricalMeasureGrid:
    def test_constant_path_point_mass(self):
        from torusot.diffusion import SamplePath

        path = SamplePath(
            times=np.linspace(0, 1, 5), points=np.full((5, 1), 2.0), seed=0, dt=0.25
        )
        m = empirical_measure_grid(path, 64, r=0.0)
        assert np.max(m.weights) == pytest.approx(1.0)

    def test_smoothed_point_mass_matches_heat_profile(self):
        from torusot.diffusion import SamplePath

        n = 128
        x0 = TWO_PI * 10 / n
        path = SamplePath(
            times=np.linspace(0, 1, 5), points=np.full((5, 1), x0), seed=0, dt=0.25
        )
        m = empirical_measure_grid(path, n, r=0.2)
        theta = np.arange(n) * (TWO_PI / n)
        expected = heat_kernel_profile(theta - x0, 0.2)
        expected /= expected.sum()
        assert np.max(np.abs(m.weights - expected)) < 1e-12

    def test_mass_conservation_after_convolution(self):
        p = simulate_path(2, 2.0, 0.01, seed=2)
        m = empirical_measure_grid(p, 32, r=0.3)
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(m.weights >= 0)

    def test_grid_too_small(self):
        p = simulate_path(1, 1.0, 0.1, seed=2)
        with pytest.raises(ArgumentError):
            empirical_measure_grid(p, 3)


class TestTimeSampledMeasure:
    def test_single_sample_is_initial_delta(self):
        p = simulate_path(1, 1.0, 0.01, seed=31, init=np.array([1.0]))
        m = time_sampled_measure(p, 1, 64)
        idx = int(np.argmax(m.weights))
        assert m.weights[idx] == 1.0
        assert abs(idx * TWO_PI / 64 - 1.0) < TWO_PI / 64

    def test_full_resolution_close_to_occupation(self):
        p = simulate_path(1, 5.0, 1e-3, seed=37)
        n_steps = len(p.times) - 1
        m_full = time_sampled_measure(p, n_steps, 256)
        m_occ = empirical_measure_grid(p, 256, r=0.0)
        gap = w2_circle_exact(m_full, m_occ).value
        # quadrature-rule difference only: atoms move at most one node spacing
        # plus the single-step geodesic bound
        step_bound = float(np.max(geodesic_distance(p.points[1:], p.points[:-1])))
        assert gap <= step_bound + 2 * TWO_PI / 256

    def test_scaling_in_n(self):
        # E W2(mu_N, mu_t)^2 <= c t / N.  On the circle the measured decay is
        # steeper than the bound (about N^{-3/2}: the low-mode quadrature
        # error cancels coherently), so the test pins the bound plus a decay
        # at least as fast as 1/N.
        t = 50.0
        ns = [64, 128, 256, 512]
        means = []
        for n_samp in ns:
            vals = []
            for rep in range(12):
                p = simulate_path(1, t, 1e-2, seed=500 + rep)
                m_n = time_sampled_measure(p, n_samp, 512)
                m_t = empirical_measure_grid(p, 512, r=0.0)
                vals.append(w2_circle_exact(m_n, m_t).value ** 2)
            means.append(np.mean(vals))
        assert all(m <= 0.06 * t / n for m, n in zip(means, ns))
        slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
        assert slope < -0.8

    def test_oversampling_rejected(self):
        p = simulate_path(1, 1.0, 0.1, seed=4)
        with pytest.raises(ArgumentError):
            time_sampled_measure(p, 1000, 64)


class TestSupDeviation:
    def test_zero_coeffs(self):
        assert sup_deviation(np.zeros(len(MODES_D1)), MODES_D1) == 0.0

    def test_single_cosine_amplitude(self):
        coeffs = np.zeros(len(MODES_D1))
        coeffs[0] = 0.37  # cos mode at lambda = 1
        est = sup_deviation(coeffs, MODES_D1, probe_grid_n=256)
        assert est == pytest.approx(0.37 * math.sqrt(2), rel=1e-3)

    def test_moment_scaling_in_t(self):
        # median of the squared sup-norm estimate roughly halves from t to 2t
        modes = enumerate_modes(1, 100)
        med = {}
        for t in (25.0, 50.0):
            vals = []
            for rep in range(40):
                p = simulate_path(1, t, 2e-3, seed=900 + rep)
                spec = psi_functionals(p, modes)
                coeffs = smoothed_density_coeffs(spec, 0.05)
                vals.append(sup_deviation(coeffs, modes, probe_grid_n=128) ** 2)
            med[t] = float(np.median(vals))
        ratio = med[50.0] / med[25.0]
        assert 0.5 * 0.7 < ratio < 0.5 * 1.3


class TestDiscreteMeasureIO:
    def test_csv_and_binary_roundtrip(self, tmp_path):
        p = simulate_path(2, 1.0, 0.01, seed=5)
        m = empirical_measure_grid(p, 16, r=0.1)
        bpath = tmp_path / "m.bin"
        m.to_binary(bpath)
        m2 = DiscreteMeasure.from_binary(bpath)
        assert m2.grid_n == 16 and m2.d == 2
        assert np.array_equal(m2.weights, m.weights)
        cpath = tmp_path / "m.csv"
        m.to_csv(cpath)
        lines = cpath.read_text().splitlines()
        assert lines[0] == "cell_1,cell_2,weight"
        assert len(lines) == 16 * 16 + 1

    def test_invariants_enforced(self):
        with pytest.raises(ArgumentError):
            DiscreteMeasure(grid_n=4, d=1, weights=np.array([0.5, 0.5, 0.5, 0.5]))
        with pytest.raises(ArgumentError):
            DiscreteMeasure(grid_n=4, d=1, weights=np.array([1.5, -0.5, 0.0, 0.0]))

    def test_uniform_measure_sums_to_one(self):
        m = uniform_measure(3, 8)
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_bin_points_wraps():
    pts = np.array([[TWO_PI - 1e-9], [0.0]])
    hist = bin_points(pts, np.array([0.5, 0.5]), 8)
    assert hist[0] == pytest.approx(1.0)
