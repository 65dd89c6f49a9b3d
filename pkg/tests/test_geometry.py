import math

import numpy as np
import pytest

import oracles
from torusot.errors import ArgumentError, CapacityError
from torusot.geometry import (
    TWO_PI,
    circle_potential_eigensolve,
    enumerate_modes,
    eigenfunction_eval,
    geodesic_distance,
    heat_kernel,
    heat_kernel_profile,
    lattice_shell_counts,
    modes_eval_matrix,
    normalize_angles,
    weyl_bound_estimate,
)


class TestGeodesicDistance:
    def test_shortest_wrap(self):
        assert geodesic_distance([0.0], [3 * math.pi / 2]) == pytest.approx(math.pi / 2)

    def test_identity(self):
        assert geodesic_distance([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_t2_diagonal_vs_bruteforce(self):
        x, y = np.array([0.0, 0.0]), np.array([math.pi, math.pi])
        assert geodesic_distance(x, y) == pytest.approx(math.pi * math.sqrt(2), abs=1e-12)
        assert geodesic_distance(x, y) == pytest.approx(oracles.brute_force_geodesic(x, y), abs=1e-12)

    def test_matches_bruteforce_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = rng.integers(1, 6)
            x = rng.uniform(0, TWO_PI, d)
            y = rng.uniform(0, TWO_PI, d)
            assert geodesic_distance(x, y) == pytest.approx(
                oracles.brute_force_geodesic(x, y), abs=1e-10
            )

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, TWO_PI, (1000, 3))
        y = rng.uniform(0, TWO_PI, (1000, 3))
        z = rng.uniform(0, TWO_PI, (1000, 3))
        dxy = geodesic_distance(x, y)
        dyx = geodesic_distance(y, x)
        dyz = geodesic_distance(y, z)
        dxz = geodesic_distance(x, z)
        assert np.all(dxy >= 0)
        assert np.allclose(dxy, dyx, atol=1e-12)
        assert np.all(dxz <= dxy + dyz + 1e-12)
        assert np.all(geodesic_distance(x, x) == 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            geodesic_distance([0.0], [0.0, 0.0])

    def test_dimension_cap(self):
        with pytest.raises(ArgumentError):
            geodesic_distance(np.zeros(6), np.zeros(6))


class TestModeEnumeration:
    def test_d2_norm_one(self):
        modes = enumerate_modes(2, 1)
        assert len(modes) == 4
        assert set(m.parity for m in modes) == {"cos", "sin"}
        assert all(m.eigenvalue == 1.0 for m in modes)

    def test_d1_lambda_nine(self):
        modes = enumerate_modes(1, 9)
        assert len(modes) == 6
        assert list(modes.lambdas) == [1, 1, 4, 4, 9, 9]

    def test_d4_lambda_two_against_lattice_scan(self):
        modes = enumerate_modes(4, 2)
        assert len(modes) == oracles.brute_force_mode_count(4, 2) == 32
        assert int(np.sum(modes.lambdas == 1.0)) == 8
        assert int(np.sum(modes.lambdas == 2.0)) == 24

    def test_counts_match_scan_random(self):
        for d, lam in [(1, 30), (2, 12), (3, 9), (5, 4)]:
            assert len(enumerate_modes(d, lam)) == oracles.brute_force_mode_count(d, lam)

    def test_canonical_and_order(self):
        modes = enumerate_modes(2, 8)
        lam = modes.lambdas
        assert np.all(np.diff(lam) >= 0)
        # first nonzero canonical component positive
        for i in range(len(modes)):
            f = modes.freqs[i]
            nz = f[f != 0]
            assert nz[0] > 0
        # cos precedes sin at the same frequency
        for i in range(0, len(modes), 2):
            assert modes.parities[i] == 0 and modes.parities[i + 1] == 1
            assert np.array_equal(modes.freqs[i], modes.freqs[i + 1])

    def test_capacity_error(self):
        with pytest.raises(CapacityError) as err:
            enumerate_modes(5, 10000, max_modes=10000)
        assert err.value.count > 10000

    def test_mode_table_csv(self, tmp_path):
        modes = enumerate_modes(2, 2)
        out = tmp_path / "modes.csv"
        modes.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "index,freq_1,freq_2,parity,lambda"
        assert len(lines) == len(modes) + 1


class TestEigenfunctions:
    def test_cos_at_origin(self):
        modes = enumerate_modes(2, 1)
        cos10 = [m for m in modes if m.freq == (1, 0) and m.parity == "cos"][0]
        assert eigenfunction_eval(cos10, [0.0, 0.0]) == pytest.approx(math.sqrt(2))

    def test_sin_at_quarter(self):
        modes = enumerate_modes(1, 1)
        sin1 = [m for m in modes if m.parity == "sin"][0]
        assert eigenfunction_eval(sin1, [math.pi / 2]) == pytest.approx(math.sqrt(2))

    def test_phase_sum_zero(self):
        modes = enumerate_modes(2, 2)
        cos11 = [m for m in modes if m.freq == (1, 1) and m.parity == "cos"][0]
        assert eigenfunction_eval(cos11, [math.pi / 3, math.pi / 6]) == pytest.approx(0.0, abs=1e-12)

    def test_orthonormality_grid_quadrature(self):
        # first 50 modes on T^2, 128 points per axis
        modes = enumerate_modes(2, 8)[:50]
        n = 128
        theta = np.arange(n) * (TWO_PI / n)
        pts = np.stack(np.meshgrid(theta, theta, indexing="ij"), -1).reshape(-1, 2)
        vals = modes_eval_matrix(modes, pts)
        gram = vals.T @ vals / len(pts)
        off = gram - np.eye(len(modes))
        assert np.max(np.abs(np.diag(gram) - 1.0)) < 1e-8
        assert np.max(np.abs(off - np.diag(np.diag(off)))) < 1e-8

    def test_laplacian_eigenvalue(self):
        # -Delta phi = lambda phi via central differences
        modes = enumerate_modes(2, 5)
        mode = modes[7]
        h = 1e-5
        x = np.array([0.7, 1.3])
        lap = 0.0
        for ax in range(2):
            e = np.zeros(2)
            e[ax] = h
            lap += (
                eigenfunction_eval(mode, x + e) - 2 * eigenfunction_eval(mode, x) + eigenfunction_eval(mode, x - e)
            ) / h**2
        assert -lap == pytest.approx(mode.eigenvalue * eigenfunction_eval(mode, x), rel=1e-4)


class TestHeatKernel:
    def test_t1_origin_value(self):
        assert heat_kernel([0.0], [0.0], 1.0) == pytest.approx(oracles.HEAT_T1_AT_0, abs=1e-10)
        assert oracles.heat_series_direct(0.0, 1.0) == pytest.approx(oracles.HEAT_T1_AT_0, abs=1e-10)

    def test_long_time_stationarity(self):
        val = heat_kernel([1.1, 2.0], [0.3, 4.4], 20.0)
        assert abs(val - 1.0) < math.exp(-20.0) * 10

    def test_positive_and_symmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x, y = rng.uniform(0, TWO_PI, 2), rng.uniform(0, TWO_PI, 2)
            t = rng.uniform(0.05, 2.0)
            a, b = heat_kernel(x, y, t), heat_kernel(y, x, t)
            assert a > 0 and a == pytest.approx(b, rel=1e-12)

    def test_mass_one_quadrature(self):
        n = 512
        theta = np.arange(n) * (TWO_PI / n)
        for t in (0.01, 0.1, 1.0):
            vals = heat_kernel_profile(theta - 0.7, t)
            assert oracles.quadrature_uniform(vals) == pytest.approx(1.0, abs=1e-6)

    def test_poisson_summation_consistency_at_switch(self):
        deltas = np.linspace(-math.pi, math.pi, 101)
        fourier = heat_kernel_profile(deltas, 0.5, switch=0.4)
        wrapped = heat_kernel_profile(deltas, 0.5, switch=0.6)
        assert np.max(np.abs(fourier - wrapped)) < 1e-10

    def test_semigroup_on_t2_grid(self):
        # p_{s+t}(x, y) = int p_s(x, z) p_t(z, y) dmu(z) on a 64^2 grid
        n = 64
        theta = np.arange(n) * (TWO_PI / n)
        x = np.array([0.9, 2.2])
        y = np.array([4.0, 1.0])
        s, t = 0.3, 0.5
        zx, zy = np.meshgrid(theta, theta, indexing="ij")
        z = np.stack([zx.ravel(), zy.ravel()], axis=1)
        lhs = heat_kernel(x, y, s + t)
        rhs = np.mean(heat_kernel(x, z, s) * heat_kernel(z, y, t))
        assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_t_nonpositive_rejected(self):
        with pytest.raises(ArgumentError):
            heat_kernel([0.0], [0.0], 0.0)


class TestWeylBound:
    def test_circle_closed_form(self):
        # lambda_{2k} = k^2 against (2k)^2 gives exactly 4
        kappa = weyl_bound_estimate(enumerate_modes(1, 400))
        assert kappa == pytest.approx(4.0, abs=1e-12)

    def test_unsorted_reported(self):
        modes = enumerate_modes(2, 4)
        shuffled = modes[::-1]
        with pytest.raises(ArgumentError):
            weyl_bound_estimate(shuffled)

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            weyl_bound_estimate(enumerate_modes(2, 4)[:0])

    def test_d2_first_1000_modes(self):
        modes = enumerate_modes(2, 330)
        assert len(modes) >= 1000
        kappa = weyl_bound_estimate(modes[:1000])
        assert kappa < 10.0

    def test_stable_under_doubling(self):
        m1 = enumerate_modes(2, 200)
        m2 = enumerate_modes(2, 400)
        k1 = weyl_bound_estimate(m1)
        k2 = weyl_bound_estimate(m2)
        assert abs(k2 - k1) / k1 < 0.05


class TestCirclePotentialSolver:
    def test_flat_reduces_to_circle(self):
        n = 256
        spec = circle_potential_eigensolve(np.zeros(n), 4)
        lam = spec.eigenvalues
        assert abs(lam[0]) < 1e-9
        h = TWO_PI / n
        assert np.allclose(lam[1:5], [1, 1, 4, 4], atol=5 * h**2 * 4)

    def test_constant_gauge_invariance(self):
        n = 256
        s0 = circle_potential_eigensolve(np.zeros(n), 4)
        s1 = circle_potential_eigensolve(np.full(n, 2.5), 4)
        assert np.allclose(s0.eigenvalues, s1.eigenvalues, atol=1e-10)

    def test_cosine_against_refined_grid(self):
        theta512 = np.arange(512) * (TWO_PI / 512)
        theta2048 = np.arange(2048) * (TWO_PI / 2048)
        v = lambda th: 0.5 * np.cos(th)
        lam512 = circle_potential_eigensolve(v(theta512), 2).eigenvalues[1]
        lam2048 = circle_potential_eigensolve(v(theta2048), 2).eigenvalues[1]
        assert lam512 == pytest.approx(lam2048, abs=1e-4)

    def test_discrete_orthonormality(self):
        n = 256
        theta = np.arange(n) * (TWO_PI / n)
        spec = circle_potential_eigensolve(0.7 * np.cos(theta), 6)
        gram = (spec.phis * spec.mu[None, :]) @ spec.phis.T
        assert np.max(np.abs(gram - np.eye(len(gram)))) < 1e-8

    def test_grid_too_small(self):
        with pytest.raises(ArgumentError):
            circle_potential_eigensolve(np.zeros(16), 4)


class TestShellCounts:
    def test_matches_scan(self):
        for d in (1, 2, 3, 4, 5):
            counts = lattice_shell_counts(d, 16)
            total = int(np.sum(counts[1:]))
            assert total == oracles.brute_force_mode_count(d, 16)

    def test_normalization(self):
        counts = lattice_shell_counts(3, 9)
        assert counts[0] == 1
        assert counts[1] == 6
        assert counts[2] == 12
        assert counts[3] == 8


def test_normalize_angles_range():
    rng = np.random.default_rng(3)
    x = rng.normal(scale=30.0, size=1000)
    w = normalize_angles(x)
    assert np.all((w >= 0) & (w < TWO_PI))
