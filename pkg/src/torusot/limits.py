"""Limiting laws, Kolmogorov-Smirnov discrepancies, rate fits, and the
large-deviation rate function on the circle.

The limiting variable is sum_k 2 xi_k^2 / (lambda_k^2 e^(2 lambda_k r)) with
i.i.d. standard Gaussians xi_k over the spectrum counted with multiplicity;
draws group the Gaussians by lattice shell (chi-square per shell) and add
the deterministic mean of the truncated tail.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .diffusion import DiscreteMeasure, uniform_measure
from .errors import ArgumentError, DivergenceError, NumericError
from .geometry import TWO_PI, lattice_shell_counts
from .spectral import _compensated_descending_sum, _series_tail_bound
from .transport import w2_circle_exact

R0_CIRCLE = math.pi**2 / 3.0  # sup_x mu(rho(x,.)^2) on T^1


@dataclass
class LimitSample:
    """I.i.d. draws of the limiting variable Xi_r, tail-mean compensated."""

    values: np.ndarray
    r: float
    truncation_count: int
    tail_mean: float
    seed: int

    def save(self, path):
        """Flat float64 vector plus a JSON sidecar with the metadata."""
        self.values.astype(np.float64).tofile(path)
        with open(str(path) + ".json", "w") as fh:
            json.dump(
                {
                    "r": self.r,
                    "K": self.truncation_count,
                    "tail_mean": self.tail_mean,
                    "seed": self.seed,
                },
                fh,
                sort_keys=True,
            )

    @classmethod
    def load(cls, path):
        values = np.fromfile(path, dtype=np.float64)
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        return cls(
            values=values,
            r=meta["r"],
            truncation_count=meta["K"],
            tail_mean=meta["tail_mean"],
            seed=meta["seed"],
        )


def _limit_law_shells(d, r, tol):
    """Choose the shell cutoff so the truncated tail variance is < tol^2.

    Returns (lambdas, counts, tail_mean) with the shells to simulate and the
    analytic mean of the remainder.
    """
    # variance of the tail: sum over modes of 8 / (lambda^4 e^{4 r lambda})
    lam_cap = 64
    while True:
        tail_var = 8.0 * _series_tail_bound(d, 2.0 * r, lam_cap, power=4)
        if tail_var < tol**2 or lam_cap >= 4_000_000:
            break
        lam_cap *= 2
    if tail_var >= tol**2:
        raise ArgumentError(f"cannot reach tail variance {tol**2} within the shell cap")
    counts = lattice_shell_counts(d, lam_cap)
    lam = np.arange(1, lam_cap + 1, dtype=float)
    cnt = counts[1:]
    nz = cnt > 0
    lam, cnt = lam[nz], cnt[nz]
    # deterministic tail mean beyond the cap
    if r > 0:
        tail_terms_extent = int(min(max(2 * lam_cap, math.ceil(22.0 / r)), 8_000_000))
        if tail_terms_extent > lam_cap:
            counts_hi = lattice_shell_counts(d, tail_terms_extent) if d > 1 else None
            if d == 1:
                ks = np.arange(1, math.isqrt(tail_terms_extent) + 1, dtype=float)
                lam_hi, cnt_hi = ks**2, np.full(len(ks), 2.0)
            else:
                lam_hi = np.arange(1, tail_terms_extent + 1, dtype=float)
                cnt_hi = counts_hi[1:]
            sel = lam_hi > lam_cap
            tail_mean = 2.0 * _compensated_descending_sum(
                cnt_hi[sel] / lam_hi[sel] ** 2 * np.exp(-2.0 * r * lam_hi[sel])
            )
        else:
            tail_mean = 0.0
    else:
        # r = 0, d <= 3: compensate with the shell sum continued analytically
        extent = {1: 20_000_000, 2: 4_000_000, 3: 4_000_000}[d]
        if d == 1:
            ks = np.arange(1, math.isqrt(extent) + 1, dtype=float)
            lam_hi, cnt_hi = ks**2, np.full(len(ks), 2.0)
        else:
            lam_hi = np.arange(1, extent + 1, dtype=float)
            cnt_hi = lattice_shell_counts(d, extent)[1:]
        sel = (lam_hi > lam_cap) & (cnt_hi > 0)
        tail_mean = 2.0 * _compensated_descending_sum(cnt_hi[sel] / lam_hi[sel] ** 2)
        tail_mean += 2.0 * _series_tail_bound(d, 0.0, float(lam_hi[-1]), power=2)
    return lam, cnt, float(tail_mean)


def sample_limit_law(d, r, n_samples, k_or_tol=1e-3, seed=0, zero_noise=False):
    """Draw n_samples of Xi_r = sum 2 xi_k^2 / (lambda_k^2 e^(2 lambda_k r)).

    ``k_or_tol``: an int fixes the number of leading shells directly; a float
    chooses the truncation so the tail variance is below its square.  The
    truncated tail is replaced by its deterministic mean, so draws are exact
    in expectation.  ``zero_noise`` forces xi = 0 (test hook): every draw
    then equals the tail mean.
    """
    if r < 0:
        raise ArgumentError("r must be >= 0")
    if r == 0 and d >= 4:
        raise DivergenceError("the limiting series diverges at r = 0 for d >= 4")
    if isinstance(k_or_tol, (int, np.integer)) and not isinstance(k_or_tol, bool):
        counts = lattice_shell_counts(d, 4096)
        lam_all = np.flatnonzero(counts[1:] > 0) + 1.0
        lam = lam_all[: int(k_or_tol)]
        cnt = counts[lam.astype(int)].astype(float)
        tail_mean = 0.0
        if r > 0:
            extent = int(min(max(8192, math.ceil(22.0 / r)), 8_000_000))
            if d == 1:
                ks = np.arange(1, math.isqrt(extent) + 1, dtype=float)
                lam_hi, cnt_hi = ks**2, np.full(len(ks), 2.0)
            else:
                lam_hi = np.arange(1, extent + 1, dtype=float)
                cnt_hi = lattice_shell_counts(d, extent)[1:]
            sel = lam_hi > lam[-1]
            tail_mean = 2.0 * float(
                np.sum(cnt_hi[sel] / lam_hi[sel] ** 2 * np.exp(-2.0 * r * lam_hi[sel]))
            )
    else:
        lam, cnt, tail_mean = _limit_law_shells(d, r, float(k_or_tol))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vals = np.full(n_samples, tail_mean)
    if not zero_noise:
        weights = 2.0 / lam**2 * np.exp(-2.0 * r * lam)
        order = np.argsort(-weights)
        for j in order:
            vals += weights[j] * rng.chisquare(df=int(cnt[j]), size=n_samples)
    return LimitSample(
        values=vals,
        r=r,
        truncation_count=int(np.sum(cnt)),
        tail_mean=float(tail_mean),
        seed=seed,
    )


def limit_law_moments(d, r, lam_cap=4096):
    """(mean, variance) of Xi_r summed over shells up to lam_cap."""
    counts = lattice_shell_counts(d, lam_cap)
    lam = np.arange(1, lam_cap + 1, dtype=float)
    cnt = counts[1:].astype(float)
    nz = cnt > 0
    lam, cnt = lam[nz], cnt[nz]
    w = 2.0 / lam**2 * np.exp(-2.0 * r * lam)
    return float(np.sum(cnt * w)), float(np.sum(cnt * 2.0 * w**2))


def ks_distance(samples_a, samples_b):
    """Two-sample Kolmogorov-Smirnov statistic sup |F_A - F_B| in [0, 1]."""
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / len(a)
    fb = np.searchsorted(b, pooled, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


@dataclass
class RateFit:
    """Least-squares fit of a decay law on log-transformed data."""

    slope: float
    intercept: float
    residual: float  # RMS of the log-space residuals
    model: str  # "power" | "power_log"
    max_abs_deviation: Optional[float] = None

    def to_json(self):
        return json.dumps(
            {
                "slope": self.slope,
                "intercept": self.intercept,
                "residual": self.residual,
                "model": self.model,
                "max_abs_deviation": self.max_abs_deviation,
            },
            sort_keys=True,
        )


def rate_fit(points, model="power"):
    """Fit decay exponents to (t, value) pairs.

    model "power": least squares of log v = a + s log t.
    model "power_log": v = C log(t)/t, fitting log(v t / log t) = const; the
    slope is -1 by construction and the residual measures the fit quality.
    """
    pts = [(float(t), float(v)) for t, v in points]
    if len(pts) < 3 or len({t for t, _ in pts}) < 3:
        raise ArgumentError("need at least 3 distinct t values")
    t = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(v <= 0) or np.any(t <= 0):
        raise ArgumentError("rate_fit requires positive values and times")
    if model == "power":
        A = np.vstack([np.ones_like(t), np.log(t)]).T
        coef, *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
        resid = np.log(v) - A @ coef
        return RateFit(
            slope=float(coef[1]),
            intercept=float(coef[0]),
            residual=float(np.sqrt(np.mean(resid**2))),
            model="power",
            max_abs_deviation=float(np.max(np.abs(resid))),
        )
    if model == "power_log":
        y = np.log(v * t / np.log(t))
        const = float(np.mean(y))
        resid = y - const
        return RateFit(
            slope=-1.0,
            intercept=const,
            residual=float(np.sqrt(np.mean(resid**2))),
            model="power_log",
            max_abs_deviation=float(np.max(np.abs(resid))),
        )
    raise ArgumentError(f"unknown model '{model}'")


# ---------------------------------------------------------------------------
# Rate function on the circle
# ---------------------------------------------------------------------------


@dataclass
class RateFunctionResult:
    value: float
    density: np.ndarray
    constraint_residual: float
    converged: bool


def _fisher_information(g, h):
    """Discrete Fisher information of the density f = g^2 on the circle grid."""
    dg = (np.roll(g, -1) - g) / h
    return float(np.mean(dg**2))


def _fisher_gradient(g, h, n):
    lap = 2.0 * g - np.roll(g, -1) - np.roll(g, 1)
    return 2.0 * lap / (h**2 * n)


def _measure_from_g(g, grid_n):
    f = g**2
    return DiscreteMeasure(grid_n=grid_n, d=1, weights=f / f.sum())


def _w2sq_value(g, grid_n):
    nu = _measure_from_g(g, grid_n)
    return w2_circle_exact(nu, uniform_measure(1, grid_n)).value ** 2


def _w2sq_and_gradient(g, grid_n):
    f = g**2
    w = f / f.sum()
    nu = DiscreteMeasure(grid_n=grid_n, d=1, weights=w)
    mu = uniform_measure(1, grid_n)
    res, phi, _ = w2_circle_exact(nu, mu, return_potentials=True)
    w2sq = res.value**2
    # d w2sq / d w_j = phi_j on the simplex; pull back through w = f / sum f
    phi_centered = phi - np.sum(w * phi)
    grad_g = 2.0 * g * phi_centered / f.sum()
    return w2sq, grad_g


def rate_function_circle(
    r_target,
    grid_n=256,
    n_stages=7,
    iters_per_stage=220,
    beta0=40.0,
    step0=0.12,
    g_init=None,
    residual_tol=1e-4,
):
    """Minimize the Fisher information over circle densities at fixed W2 cost.

    Parametrizes g = sqrt(f) with the normalization mean(g^2) = 1 enforced by
    projection, and drives W2(f mu, mu)^2 to ``r_target`` with a quadratic
    penalty whose weight doubles every continuation stage.  The exact circle
    solver supplies both the constraint value and, through its Kantorovich
    potential, the constraint gradient.
    """
    if not 0.0 <= r_target < R0_CIRCLE:
        raise ArgumentError(f"r_target must lie in [0, {R0_CIRCLE:.4f})")
    h = TWO_PI / grid_n
    if r_target == 0.0:
        return RateFunctionResult(
            value=0.0, density=np.ones(grid_n), constraint_residual=0.0, converged=True
        )
    theta = np.arange(grid_n) * h
    if g_init is None:
        # one-mode start whose amplitude roughly matches the target cost
        a = min(0.95, math.sqrt(max(r_target, 1e-12)))
        g = np.sqrt(np.maximum(1.0 + a * math.sqrt(2.0) * np.cos(theta), 1e-6))
    else:
        g = np.array(g_init, dtype=float)
    g /= math.sqrt(float(np.mean(g**2)))

    beta = beta0
    for _ in range(n_stages):
        step = step0
        stall = 0
        obj_prev = math.inf
        for _ in range(iters_per_stage):
            w2sq, grad_c = _w2sq_and_gradient(g, grid_n)
            viol = w2sq - r_target
            obj = _fisher_information(g, h) + beta * viol**2
            grad = _fisher_gradient(g, h, grid_n) + 2.0 * beta * viol * grad_c
            # project onto the tangent of the normalization sphere
            grad -= g * (np.dot(grad, g) / np.dot(g, g))
            g_new = g - step * grad
            g_new = np.abs(g_new) + 1e-12
            g_new /= math.sqrt(float(np.mean(g_new**2)))
            viol_new = _w2sq_value(g_new, grid_n) - r_target
            obj_new = _fisher_information(g_new, h) + beta * viol_new**2
            if obj_new <= obj:
                g = g_new
                step = min(step * 1.15, 0.5)
            else:
                step *= 0.5
                if step < 1e-8:
                    break
            if obj_prev - min(obj, obj_new) < 1e-12 * max(1.0, abs(obj_prev)):
                stall += 1
                if stall >= 10:
                    break
            else:
                stall = 0
            obj_prev = min(obj, obj_new)
        beta *= 2.0
    resid = abs(_w2sq_value(g, grid_n) - r_target)
    value = _fisher_information(g, h)
    converged = resid <= residual_tol
    if not converged and resid > 50 * residual_tol:
        raise NumericError(
            "rate-function solver did not meet the constraint", residual=resid, best=value
        )
    return RateFunctionResult(
        value=value, density=g**2, constraint_residual=resid, converged=converged
    )


def interpolation_family_information(density, s_values, grid_n=None):
    """Fisher information along nu_s = s mu + (1-s) nu for the given density."""
    f = np.asarray(density, dtype=float)
    n = len(f)
    h = TWO_PI / n
    out = []
    for s in s_values:
        g = np.sqrt(s + (1.0 - s) * f)
        out.append(_fisher_information(g, h))
    return np.array(out)
