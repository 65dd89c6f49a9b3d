"""Geometry and spectral data for flat tori T^d = [0, 2*pi)^d and for the
circle carrying a smooth potential.

Conventions used throughout the package:

* points are arrays of angles, wrapped into [0, 2*pi);
* the generator is the full Laplacian (plus drift when a potential is
  present), so the heat semigroup acts as exp(-lambda*t) on an eigenfunction
  with eigenvalue lambda = |m|^2;
* real eigenfunctions are sqrt(2)*cos<m,x> and sqrt(2)*sin<m,x> for a
  canonical integer frequency vector m (first nonzero component positive),
  which makes them orthonormal in L^2 of the normalized volume measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ArgumentError, CapacityError, NumericError

TWO_PI = 2.0 * math.pi

# Switch point between the two heat-kernel representations (per axis).
HEAT_KERNEL_SWITCH = 0.5
# Number of image terms in the wrapped-Gaussian form.
HEAT_KERNEL_IMAGES = 5

MAX_DIMENSION = 5


def normalize_angles(x):
    """Wrap angles into [0, 2*pi)."""
    return np.mod(np.asarray(x, dtype=float), TWO_PI)


def check_point(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    dim = x.shape[-1]
    if not 1 <= dim <= MAX_DIMENSION:
        raise ArgumentError(f"torus dimension must be in 1..{MAX_DIMENSION}, got {dim}")
    if d is not None and dim != d:
        raise ArgumentError(f"dimension mismatch: expected {d}, got {dim}")
    return x


def geodesic_distance(x, y):
    """Geodesic distance on T^d, acting on the last axis and broadcasting.

    The squared distance is the sum over coordinates of the wrapped 1-D
    distance min(|dx|, 2*pi - |dx|) squared.
    """
    x = check_point(x)
    y = check_point(y, d=x.shape[-1])
    diff = np.abs(normalize_angles(x) - normalize_angles(y))
    wrapped = np.minimum(diff, TWO_PI - diff)
    return np.sqrt(np.sum(wrapped**2, axis=-1))


@dataclass(frozen=True)
class SpectralMode:
    """One real eigenfunction of minus the generator on T^d."""

    freq: tuple
    parity: str  # "cos" | "sin"
    eigenvalue: float
    index: int  # 1-based rank in the global ordering


class ModeSet(Sequence):
    """Ordered collection of spectral modes with vectorized field access.

    Modes are sorted by (eigenvalue, lexicographic canonical frequency),
    cos listed before sin, and indexed from 1 in that order.
    """

    def __init__(self, freqs, parities, lambdas):
        self.freqs = np.asarray(freqs, dtype=np.int64)
        self.parities = np.asarray(parities, dtype=np.int8)  # 0 = cos, 1 = sin
        self.lambdas = np.asarray(lambdas, dtype=float)
        if not (len(self.freqs) == len(self.parities) == len(self.lambdas)):
            raise ArgumentError("mode arrays must have equal length")

    @property
    def d(self):
        return self.freqs.shape[1]

    def __len__(self):
        return len(self.lambdas)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return ModeSet(self.freqs[i], self.parities[i], self.lambdas[i])
        idx = int(i)
        if idx < 0:
            idx += len(self)
        return SpectralMode(
            freq=tuple(int(v) for v in self.freqs[idx]),
            parity="cos" if self.parities[idx] == 0 else "sin",
            eigenvalue=float(self.lambdas[idx]),
            index=idx + 1,
        )

    def concat(self, other):
        if other.d != self.d:
            raise ArgumentError("dimension mismatch in mode concatenation")
        return ModeSet(
            np.concatenate([self.freqs, other.freqs]),
            np.concatenate([self.parities, other.parities]),
            np.concatenate([self.lambdas, other.lambdas]),
        )

    def to_csv(self, path):
        """Write the mode table as CSV (index, freq..., parity, lambda)."""
        with open(path, "w") as fh:
            cols = ",".join(f"freq_{a+1}" for a in range(self.d))
            fh.write(f"index,{cols},parity,lambda\n")
            for i in range(len(self)):
                f = ",".join(str(int(v)) for v in self.freqs[i])
                par = "cos" if self.parities[i] == 0 else "sin"
                fh.write(f"{i+1},{f},{par},{self.lambdas[i]:.17g}\n")


def unit_ball_volume(d):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def lattice_point_estimate(d, lambda_max):
    """Approximate number of lattice points with 0 < |m|^2 <= lambda_max."""
    return unit_ball_volume(d) * lambda_max ** (d / 2.0)


def enumerate_modes(d, lambda_max, max_modes=4_000_000):
    """All real eigenfunctions with 0 < lambda <= lambda_max, globally ordered.

    Each canonical frequency vector (first nonzero component positive)
    contributes a cos mode and a sin mode, so the number of modes equals the
    number of nonzero lattice vectors with |m|^2 <= lambda_max.
    """
    if not 1 <= d <= MAX_DIMENSION:
        raise ArgumentError(f"d must be in 1..{MAX_DIMENSION}")
    if lambda_max < 1:
        raise ArgumentError("lambda_max must be >= 1")
    est = lattice_point_estimate(d, lambda_max)
    if est > max_modes:
        raise CapacityError(
            f"enumerate_modes(d={d}, lambda_max={lambda_max}) would produce about "
            f"{int(est)} modes, exceeding the budget of {max_modes}",
            count=int(est),
        )
    m_max = int(math.isqrt(int(lambda_max)))
    axes = [np.arange(-m_max, m_max + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    lam = np.sum(grid.astype(np.int64) ** 2, axis=1)
    keep = (lam > 0) & (lam <= lambda_max)
    grid, lam = grid[keep], lam[keep]
    # canonical representative: first nonzero component positive
    first_nz = np.argmax(grid != 0, axis=1)
    sign = grid[np.arange(len(grid)), first_nz]
    grid, lam = grid[sign > 0], lam[sign > 0]
    # sort by (lambda, lexicographic frequency); lexsort keys: last is primary
    keys = tuple(grid[:, a] for a in reversed(range(d))) + (lam,)
    order = np.lexsort(keys)
    grid, lam = grid[order], lam[order]
    # interleave cos (parity 0) before sin (parity 1) per canonical vector
    freqs = np.repeat(grid, 2, axis=0)
    lambdas = np.repeat(lam.astype(float), 2)
    parities = np.tile(np.array([0, 1], dtype=np.int8), len(grid))
    return ModeSet(freqs, parities, lambdas)


def eigenfunction_eval(mode, x):
    """Evaluate one eigenfunction at a point (or batch of points)."""
    x = check_point(x, d=len(mode.freq))
    phase = x @ np.asarray(mode.freq, dtype=float)
    if mode.parity == "cos":
        return math.sqrt(2.0) * np.cos(phase)
    return math.sqrt(2.0) * np.sin(phase)


def modes_eval_matrix(modes, points):
    """Values of every mode at every point: shape (n_points, n_modes)."""
    points = check_point(points, d=modes.d)
    pts = points.reshape(-1, modes.d)
    phases = pts @ modes.freqs.T.astype(float)
    out = np.empty_like(phases)
    cos = modes.parities == 0
    out[:, cos] = np.cos(phases[:, cos])
    out[:, ~cos] = np.sin(phases[:, ~cos])
    out *= math.sqrt(2.0)
    return out


def heat_kernel_profile(delta, t, switch=HEAT_KERNEL_SWITCH, images=HEAT_KERNEL_IMAGES):
    """1-D periodic heat-kernel density (w.r.t. normalized length) at angle gaps.

    Uses the Fourier series for t >= switch and the wrapped-Gaussian (Poisson
    summation) form below it; both converge to ~1e-14 in the regimes used.
    """
    if t <= 0:
        raise ArgumentError("heat kernel requires t > 0")
    delta = np.asarray(delta, dtype=float)
    delta = np.mod(delta + math.pi, TWO_PI) - math.pi
    if t >= switch:
        k_max = int(math.ceil(math.sqrt(40.0 / t)))
        k = np.arange(1, k_max + 1)
        terms = np.exp(-(k**2) * t)[:, None] * np.cos(np.multiply.outer(k, delta.ravel()))
        out = 1.0 + 2.0 * terms.sum(axis=0)
    else:
        j = np.arange(-images, images + 1)
        shifted = delta.ravel()[None, :] + TWO_PI * j[:, None]
        out = math.sqrt(math.pi / t) * np.exp(-(shifted**2) / (4.0 * t)).sum(axis=0)
    return out.reshape(delta.shape)


def heat_kernel(x, y, t):
    """Heat-kernel density p_t(x, y) w.r.t. the uniform probability measure.

    Factorizes over axes as a product of 1-D periodic kernels.
    """
    x = check_point(x)
    y = check_point(y, d=x.shape[-1])
    gaps = normalize_angles(x) - normalize_angles(y)
    profile = heat_kernel_profile(gaps, t)
    return np.prod(profile, axis=-1)


def weyl_bound_estimate(modes):
    """Two-sided Weyl constant: max over i of max(lambda_i/i^(2/d), i^(2/d)/lambda_i).

    Requires the modes to be in the global (sorted) order; a violated ordering
    is reported as a precondition failure.
    """
    if len(modes) == 0:
        raise ArgumentError("weyl_bound_estimate requires a nonempty mode list")
    lam = modes.lambdas
    if np.any(np.diff(lam) < 0):
        raise ArgumentError("modes are not sorted by eigenvalue (precondition violated)")
    i = np.arange(1, len(lam) + 1, dtype=float)
    growth = i ** (2.0 / modes.d)
    return float(np.max(np.maximum(lam / growth, growth / lam)))


@dataclass
class CirclePotentialSpectrum:
    """Discrete spectrum of -(f'' + V' f') on the circle, V sampled on a grid.

    Entry 0 of ``eigenvalues``/``phis`` is the constant mode (eigenvalue ~ 0);
    entries 1..n_modes are the nontrivial modes.  ``phis[i]`` holds grid
    samples normalized so that sum(phi_i^2 * mu) = 1 for the normalized grid
    measure ``mu`` proportional to exp(V).
    """

    potential: np.ndarray
    eigenvalues: np.ndarray
    phis: np.ndarray
    mu: np.ndarray

    @property
    def grid_n(self):
        return len(self.potential)


def circle_potential_eigensolve(v_samples, n_modes, residual_tol=1e-8):
    """Eigen-decomposition of the weighted Laplacian on S^1 with potential V.

    The second-order finite-difference operator

        (L f)_i = [w_{i+1/2}(f_{i+1}-f_i) - w_{i-1/2}(f_i-f_{i-1})] / (h^2 w_i)

    with w = exp(V) and w_{i+1/2} = exp((V_i+V_{i+1})/2) is self-adjoint in
    the weighted inner product sum(f g w).  Conjugating by sqrt(w) gives a
    symmetric matrix (tridiagonal plus periodic corner) solved densely.
    """
    v = np.asarray(v_samples, dtype=float)
    n = len(v)
    if n < 8 * n_modes:
        raise ArgumentError(f"grid size {n} < 8*n_modes = {8*n_modes}")
    h = TWO_PI / n
    w = np.exp(v)
    w_half = np.exp(0.5 * (v + np.roll(v, -1)))  # between node i and i+1
    sqrt_w = np.sqrt(w)

    # symmetric matrix B = D^{1/2} (-L) D^{-1/2}, D = diag(w)
    B = np.zeros((n, n))
    idx = np.arange(n)
    nxt = (idx + 1) % n
    diag = (w_half + np.roll(w_half, 1)) / w
    B[idx, idx] = diag / h**2
    off = -w_half / (sqrt_w * sqrt_w[nxt])
    B[idx, nxt] += off / h**2
    B[nxt, idx] += off / h**2

    lam, g = scipy.linalg.eigh(B)
    lam = lam[: n_modes + 1]
    g = g[:, : n_modes + 1]
    resid = float(np.max(np.abs(B @ g - g * lam[None, :])))
    if resid > residual_tol * max(1.0, float(np.max(np.abs(lam)))):
        raise NumericError("eigensolver residual too large", residual=resid)

    mu = w / w.sum()
    phis = (g / sqrt_w[:, None]).T
    # unit L^2(mu) norm, sign fixed so the first nonzero sample is positive
    for i in range(phis.shape[0]):
        norm = math.sqrt(float(np.sum(phis[i] ** 2 * mu)))
        phis[i] /= norm
        first = np.flatnonzero(np.abs(phis[i]) > 1e-12)
        if len(first) and phis[i][first[0]] < 0:
            phis[i] = -phis[i]
    lam = np.where(np.abs(lam) < 1e-9, np.maximum(lam, 0.0), lam)
    return CirclePotentialSpectrum(potential=v, eigenvalues=lam, phis=phis, mu=mu)


@lru_cache(maxsize=32)
def _shell_counts_cached(d, lam_max):
    import scipy.signal

    r1 = np.zeros(lam_max + 1)
    r1[0] = 1.0
    for m in range(1, math.isqrt(lam_max) + 1):
        r1[m * m] += 2.0
    out = r1
    for _ in range(d - 1):
        out = scipy.signal.fftconvolve(out, r1)[: lam_max + 1]
    return np.round(out).astype(np.int64)


def lattice_shell_counts(d, lam_max):
    """Number of lattice vectors m in Z^d with |m|^2 = k, for k = 0..lam_max.

    Equals the eigenvalue multiplicities of the torus Laplacian (counting
    real eigenfunctions, the cos/sin pair giving the same count as the
    two lattice vectors +-m).
    """
    return _shell_counts_cached(int(d), int(lam_max))
