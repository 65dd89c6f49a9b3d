"""Simulation of the torus diffusion and construction of empirical measures.

The driftless process is exact Brownian motion with generator the full
Laplacian, so increments over a step dt are N(0, 2*dt) per coordinate and no
discretization bias is introduced; dt only controls the quadrature of path
functionals.  With a potential V on the circle the scheme is Euler-Maruyama
with drift V'(X) and the same noise scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .geometry import TWO_PI, ModeSet, check_point, heat_kernel_profile, modes_eval_matrix, normalize_angles


@dataclass(frozen=True)
class CosinePotential:
    """V(x) = amplitude * cos(x) on the circle."""

    amplitude: float

    def value(self, x):
        return self.amplitude * np.cos(x)

    def grad(self, x):
        return -self.amplitude * np.sin(x)


@dataclass
class SamplePath:
    """One trajectory on a uniform time grid (final step may be shorter)."""

    times: np.ndarray
    points: np.ndarray  # (n_times, d), angles in [0, 2*pi)
    seed: int
    dt: float

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def t_end(self):
        return float(self.times[-1])

    def trapezoid_weights(self):
        w = np.diff(self.times)
        out = np.zeros(len(self.times))
        out[:-1] += 0.5 * w
        out[1:] += 0.5 * w
        return out

    def to_csv(self, path):
        with open(path, "w") as fh:
            cols = ",".join(f"x_{a+1}" for a in range(self.d))
            fh.write(f"s,{cols}\n")
            for i in range(len(self.times)):
                xs = ",".join(f"{v:.17g}" for v in self.points[i])
                fh.write(f"{self.times[i]:.17g},{xs}\n")


def _rng_for(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def _initial_point(d, init, rng):
    if isinstance(init, str):
        if init == "stationary":
            return rng.uniform(0.0, TWO_PI, size=d)
        raise ArgumentError(f"unknown init '{init}'")
    x0 = normalize_angles(check_point(init, d=d))
    return x0.astype(float).copy()


def _time_grid(t_end, dt):
    n_full = int(math.floor(t_end / dt + 1e-12))
    times = np.arange(n_full + 1) * dt
    if times[-1] < t_end - 1e-12 * max(1.0, t_end):
        times = np.append(times, t_end)
    times[-1] = t_end
    return times


def simulate_path(d, t_end, dt, seed, potential=None, init="stationary"):
    """Simulate the diffusion and return the full path.

    potential is only supported for d = 1.  The stationary initialization is
    a uniform draw for V = 0 and a draw from exp(V)dx/Z otherwise.
    """
    if dt <= 0 or t_end < dt:
        raise ArgumentError("need t_end >= dt > 0")
    if potential is not None and d != 1:
        raise ArgumentError("potentials are supported on the circle only")
    rng = _rng_for(seed)
    times = _time_grid(t_end, dt)
    if potential is not None and init == "stationary":
        x0 = np.array([_stationary_draw_potential(potential, rng)])
    else:
        x0 = _initial_point(d, init, rng)
    points = np.empty((len(times), d))
    points[0] = x0
    steps = np.diff(times)
    noise = rng.standard_normal((len(steps), d))
    if potential is None:
        incr = noise * np.sqrt(2.0 * steps)[:, None]
        points[1:] = normalize_angles(x0[None, :] + np.cumsum(incr, axis=0))
    else:
        x = x0.copy()
        for k, h in enumerate(steps):
            x = x + potential.grad(x) * h + math.sqrt(2.0 * h) * noise[k]
            x = normalize_angles(x)
            points[k + 1] = x
    return SamplePath(times=times, points=points, seed=seed, dt=dt)


def _stationary_draw_potential(potential, rng, grid_n=4096):
    # inverse-CDF draw from exp(V) dx / Z on a fine grid
    x = np.arange(grid_n) * (TWO_PI / grid_n)
    w = np.exp(potential.value(x))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = rng.uniform()
    j = int(np.searchsorted(cdf, u))
    return x[j]


def iter_path_chunks(
    d, t_end, dt, seed, chunk_steps=200_000, potential=None, init="stationary", break_times=None
):
    """Stream a path as (times_chunk, points_chunk) pairs without storing it.

    The first chunk includes the initial point; chunks partition the node
    sequence, and concatenating them reproduces simulate_path for the same
    seed (same increment stream; positions agree up to the floating-point
    association of wrapping at chunk boundaries).  Chunk boundaries are
    additionally forced at each of ``break_times`` so callers can snapshot
    running statistics at exact horizons.
    """
    if dt <= 0 or t_end < dt:
        raise ArgumentError("need t_end >= dt > 0")
    rng = _rng_for(seed)
    times = _time_grid(t_end, dt)
    forced = set()
    if break_times is not None:
        for bt in break_times:
            forced.add(int(round(bt / dt)))
    if potential is not None and init == "stationary":
        x = np.array([_stationary_draw_potential(potential, rng)])
    else:
        x = _initial_point(d, init, rng)
    pos = 0
    first = True
    while pos < len(times) - 1 or first:
        hi = min(pos + chunk_steps, len(times) - 1)
        cut = [b for b in forced if pos < b < hi]
        if cut:
            hi = min(cut)
        steps = np.diff(times[pos : hi + 1])
        noise = rng.standard_normal((len(steps), d))
        if potential is None:
            incr = noise * np.sqrt(2.0 * steps)[:, None]
            pts = normalize_angles(x[None, :] + np.cumsum(incr, axis=0))
        else:
            pts = np.empty((len(steps), d))
            xx = x.copy()
            for k, h in enumerate(steps):
                xx = normalize_angles(xx + potential.grad(xx) * h + math.sqrt(2.0 * h) * noise[k])
                pts[k] = xx
        if first:
            yield times[pos : hi + 1], np.vstack([x[None, :], pts])
            first = False
        else:
            yield times[pos + 1 : hi + 1], pts
        if len(pts):
            x = pts[-1].copy()
        pos = hi


@dataclass
class DiscreteMeasure:
    """Nonnegative weights on the regular periodic grid with nodes 2*pi*k/n.

    Binning maps a point to its nearest node (round-to-nearest, wrapping).
    """

    grid_n: int
    d: int
    weights: np.ndarray  # d-dimensional array, shape (grid_n,)*d

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.grid_n,) * self.d:
            raise ArgumentError("weights shape does not match (grid_n,)*d")
        if np.any(self.weights < -1e-15):
            raise ArgumentError("weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-9:
            raise ArgumentError(f"weights must sum to 1, got {total}")

    @property
    def node_angles(self):
        return np.arange(self.grid_n) * (TWO_PI / self.grid_n)

    def to_csv(self, path):
        with open(path, "w") as fh:
            cols = ",".join(f"cell_{a+1}" for a in range(self.d))
            fh.write(f"{cols},weight\n")
            flat = self.weights.reshape(-1)
            for j, w in enumerate(flat):
                idx = np.unravel_index(j, self.weights.shape)
                fh.write(",".join(str(int(v)) for v in idx) + f",{w:.17g}\n")

    def to_binary(self, path):
        """Flat binary layout: int64 d, int64 grid_n, then float64 weights row-major."""
        with open(path, "wb") as fh:
            np.array([self.d, self.grid_n], dtype=np.int64).tofile(fh)
            self.weights.astype(np.float64).tofile(fh)

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            head = np.fromfile(fh, dtype=np.int64, count=2)
            d, n = int(head[0]), int(head[1])
            w = np.fromfile(fh, dtype=np.float64, count=n**d).reshape((n,) * d)
        return cls(grid_n=n, d=d, weights=w)


def uniform_measure(d, grid_n):
    w = np.full((grid_n,) * d, 1.0 / grid_n**d)
    return DiscreteMeasure(grid_n=grid_n, d=d, weights=w)


def bin_points(points, weights, grid_n):
    """Accumulate weighted points onto the grid by nearest-node assignment."""
    d = points.shape[1]
    idx = np.mod(np.rint(points / (TWO_PI / grid_n)).astype(np.int64), grid_n)
    flat = idx[:, 0]
    for a in range(1, d):
        flat = flat * grid_n + idx[:, a]
    hist = np.bincount(flat, weights=weights, minlength=grid_n**d)
    return hist.reshape((grid_n,) * d)


def smooth_measure_weights(weights, r):
    """Apply the heat semigroup at time r by separable circular convolution.

    The 1-D kernel is the sampled periodic heat-kernel profile, renormalized
    to unit mass so the convolution is an exact stochastic matrix on the grid
    (this matches smoothing a point mass into grid samples of p_r(x, .)).
    """
    if r == 0:
        return weights
    n = weights.shape[0]
    gaps = np.arange(n) * (TWO_PI / n)
    kernel = heat_kernel_profile(gaps, r)
    kernel = kernel / kernel.sum()
    k_hat = np.fft.rfft(kernel)
    out = weights
    for ax in range(weights.ndim):
        out = np.fft.irfft(np.fft.rfft(out, axis=ax) * _shape_for_axis(k_hat, out.ndim, ax), n=n, axis=ax)
    out = np.maximum(out, 0.0)
    return out / out.sum()


def _shape_for_axis(vec, ndim, ax):
    shape = [1] * ndim
    shape[ax] = len(vec)
    return vec.reshape(shape)


def empirical_measure_grid(path, grid_n, r=0.0):
    """Occupation measure of a path, binned, optionally heat-smoothed.

    At r = 0 each node carries its trapezoid weight into the containing cell;
    for r > 0 the binned weights are convolved per axis with the sampled 1-D
    heat kernel.
    """
    if grid_n < 4:
        raise ArgumentError("grid_n must be >= 4")
    w = path.trapezoid_weights()
    hist = bin_points(path.points, w / w.sum(), grid_n)
    hist = smooth_measure_weights(hist, r)
    return DiscreteMeasure(grid_n=grid_n, d=path.d, weights=hist / hist.sum())


def time_sampled_measure(path, n_samples, grid_n):
    """Equal weights 1/N at the positions nearest to t_i = (i-1) t / N, binned."""
    n_steps = len(path.times) - 1
    if n_samples < 1:
        raise ArgumentError("n_samples must be >= 1")
    if n_samples > n_steps + 1:
        raise ArgumentError(f"n_samples {n_samples} exceeds path resolution {n_steps + 1}")
    t = path.t_end
    targets = np.arange(n_samples) * (t / n_samples)
    idx = np.clip(np.rint(targets / path.dt).astype(np.int64), 0, len(path.times) - 1)
    pts = path.points[idx]
    hist = bin_points(pts, np.full(n_samples, 1.0 / n_samples), grid_n)
    return DiscreteMeasure(grid_n=grid_n, d=path.d, weights=hist)


@dataclass
class EmpiricalSpectrum:
    """Normalized path integrals of eigenfunctions along one trajectory."""

    psi: np.ndarray
    t: float
    modes: ModeSet

    def __post_init__(self):
        if len(self.psi) != len(self.modes):
            raise ArgumentError("psi length must equal the mode list length")


def psi_functionals(path, modes):
    """psi_i = (1/sqrt(t)) * integral of phi_i along the path (trapezoid rule)."""
    if len(path.times) == 0:
        raise ArgumentError("empty path")
    if len(modes) == 0:
        return EmpiricalSpectrum(psi=np.zeros(0), t=path.t_end, modes=modes)
    w = path.trapezoid_weights()
    vals = modes_eval_matrix(modes, path.points)
    psi = (w @ vals) / math.sqrt(path.t_end)
    return EmpiricalSpectrum(psi=psi, t=path.t_end, modes=modes)


def smoothed_density_coeffs(spectrum, r):
    """Fourier coefficients of f_{t,r} - 1 on the spectrum's mode list.

    Coefficient i equals exp(-lambda_i r) * psi_i(t) / sqrt(t), so that
    f_{t,r}(y) - 1 = sum_i coeff_i * phi_i(y).
    """
    if r < 0:
        raise ArgumentError("r must be >= 0")
    return np.exp(-spectrum.modes.lambdas * r) * spectrum.psi / math.sqrt(spectrum.t)


def density_on_grid(coeffs, modes, grid_n):
    """Evaluate 1 + sum_i coeff_i phi_i on the regular grid (shape (grid_n,)*d)."""
    grids = np.meshgrid(*([np.arange(grid_n) * (TWO_PI / grid_n)] * modes.d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = modes_eval_matrix(modes, pts)
    f = 1.0 + vals @ np.asarray(coeffs)
    return f.reshape((grid_n,) * modes.d)


def sup_deviation(coeffs, modes, probe_grid_n=256):
    """Max of |f_{t,r} - 1| over the probe grid (a lower bound of the sup norm)."""
    if len(modes) == 0 or np.all(np.asarray(coeffs) == 0):
        return 0.0
    f = density_on_grid(coeffs, modes, probe_grid_n)
    return float(np.max(np.abs(f - 1.0)))
