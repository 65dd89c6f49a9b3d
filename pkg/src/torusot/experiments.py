"""End-to-end experiment harness: configs, seeded replication, records, reports.

Experiments
-----------
E1  long-time limit of t * W2(mu_t, mu)^2 against the spectral series (d<=3)
E2  CLT of t * W2(mu_t, mu)^2 against the limiting law nu_0 (d=1)
E3  decay-rate sweep of W2^2 for d in {4, 5} via the spectral surrogate
E4  Laplace transform of the spectral measure and lambda_1 recovery (d=1)
E5  heat-smoothing bias W2(mu_t, mu_{t,r})^2 as a function of r
E6  rate-function curve of the large-deviation principle on the circle
E7  closed-form check of the stationary second moment of psi_i(t)

Every replica owns a generator seeded from (master seed, experiment index,
replica index); results are reduced in replica order so aggregates are
independent of the execution schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from ._version import __version__
from .diffusion import (
    CosinePotential,
    DiscreteMeasure,
    iter_path_chunks,
    psi_functionals,
    simulate_path,
    smooth_measure_weights,
    uniform_measure,
)
from .errors import ArgumentError, ValidationError
from .geometry import TWO_PI, enumerate_modes
from .limits import interpolation_family_information, ks_distance, rate_fit, rate_function_circle, sample_limit_law
from .spectral import (
    estimate_lambda1,
    expected_xi_stationary_shells,
    limit_series,
    xi_from_grid,
    xi_lattice_tail_mean,
)
from .transport import sinkhorn_w2, w2_circle_exact

SCHEMA_VERSION = 1

# Analytic calibration of the d=4 smoothing scale r_t = KAPPA4 / t: with this
# constant the Z^4 lattice sum sum 2 lambda^-2 exp(-2 r_t lambda) equals
# 2 pi^2 log t with vanishing additive constant, making the surrogate decay
# exactly on the t^-1 log t profile it is compared against.
KAPPA4 = 0.449380

_EXPERIMENTS = ("E1", "E2", "E3", "E4", "E5", "E6", "E7")

_TOP_KEYS = {
    "schema_version",
    "experiment",
    "d",
    "potential",
    "horizons",
    "smoothing",
    "replicas",
    "grid_n",
    "lambda_max",
    "seed",
    "start",
    "solver",
}


@dataclass
class ExperimentConfig:
    experiment: str
    d: int
    horizons: list
    smoothing: list
    replicas: int
    grid_n: int
    lambda_max: float
    seed: int
    potential: Optional[dict] = None
    start: str = "uniform"
    solver: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "d": self.d,
            "potential": self.potential,
            "horizons": list(self.horizons),
            "smoothing": list(self.smoothing),
            "replicas": self.replicas,
            "grid_n": self.grid_n,
            "lambda_max": self.lambda_max,
            "seed": self.seed,
            "start": self.start,
            "solver": dict(self.solver),
        }

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - _TOP_KEYS
        violations = []
        if unknown:
            violations.append(f"unknown keys: {sorted(unknown)}")
        if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            violations.append(f"unsupported schema_version {data.get('schema_version')}")
        if violations:
            raise ValidationError(violations)
        cfg = cls(
            experiment=data.get("experiment", ""),
            d=int(data.get("d", 0)),
            horizons=list(data.get("horizons", [])),
            smoothing=list(data.get("smoothing", [])),
            replicas=int(data.get("replicas", 0)),
            grid_n=int(data.get("grid_n", 0)),
            lambda_max=float(data.get("lambda_max", 0)),
            seed=int(data.get("seed", 0)),
            potential=data.get("potential"),
            start=data.get("start", "uniform"),
            solver=dict(data.get("solver", {})),
        )
        cfg.validate()
        return cfg

    def validate(self):
        v = []
        if self.experiment not in _EXPERIMENTS:
            v.append(f"experiment must be one of {_EXPERIMENTS}")
        if not 1 <= self.d <= 5:
            v.append("d must be in 1..5")
        if self.replicas < 1:
            v.append("replicas must be >= 1")
        if len(self.horizons) == 0 and self.experiment not in ("E6",):
            v.append("horizons must be nonempty")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            v.append("horizons must be strictly increasing")
        if self.lambda_max < 4:
            v.append("lambda_max must be >= 4")
        if self.grid_n < 4:
            v.append("grid_n must be >= 4")
        if self.experiment in ("E1", "E2") and self.d > 3:
            v.append(f"{self.experiment} requires d <= 3")
        if self.experiment == "E3" and self.d not in (4, 5):
            v.append("E3 requires d in {4, 5}")
        if self.experiment in ("E2", "E4", "E5", "E6", "E7") and self.d != 1 and not (
            self.experiment == "E5" and self.d == 2
        ):
            v.append(f"{self.experiment} requires d = 1" + (" or 2" if self.experiment == "E5" else ""))
        if self.potential is not None:
            if self.d != 1:
                v.append("potentials are supported only for d = 1")
            if self.experiment not in ("E1", "E2"):
                v.append("potential is supported in experiments E1/E2 only")
            if self.potential.get("type") != "cosine" or "amplitude" not in self.potential:
                v.append("potential must be {'type': 'cosine', 'amplitude': a}")
        if self.experiment in ("E4", "E5") and len(self.smoothing) < 2:
            v.append(f"{self.experiment} needs at least 2 smoothing values")
        if any(r < 0 for r in self.smoothing):
            v.append("smoothing values must be >= 0")
        if self.start not in ("uniform", "corner", "center"):
            v.append("start must be 'uniform', 'corner', or 'center'")
        if v:
            raise ValidationError(v)

    def dt(self):
        return float(self.solver.get("dt", 1e-3))

    def potential_object(self):
        if self.potential is None:
            return None
        return CosinePotential(amplitude=float(self.potential["amplitude"]))


def default_config(experiment, **overrides):
    """A runnable configuration for each experiment (acceptance-scale)."""
    base = {
        "E1": dict(d=1, horizons=[2000.0], smoothing=[], replicas=200, grid_n=512, lambda_max=400),
        "E2": dict(d=1, horizons=[2000.0], smoothing=[], replicas=300, grid_n=512, lambda_max=400),
        "E3": dict(d=4, horizons=[250.0, 500.0, 1000.0, 2000.0], smoothing=[], replicas=48,
                   grid_n=96, lambda_max=1024),
        "E4": dict(d=1, horizons=[500.0], smoothing=[0.2, 0.35, 0.5, 0.65, 0.8, 0.95],
                   replicas=500, grid_n=512, lambda_max=400),
        "E5": dict(d=1, horizons=[500.0], smoothing=[0.01, 0.02, 0.04, 0.08], replicas=100,
                   grid_n=512, lambda_max=400),
        "E6": dict(d=1, horizons=[], smoothing=[0.1, 0.2, 0.4], replicas=1, grid_n=256, lambda_max=4),
        "E7": dict(d=1, horizons=[10.0], smoothing=[], replicas=10000, grid_n=64, lambda_max=9),
    }[experiment]
    if experiment == "E3" and overrides.get("d") == 5:
        base.update(grid_n=32, lambda_max=121, replicas=24)
    cfg = dict(base)
    cfg.update(overrides)
    cfg.setdefault("seed", 20240801)
    cfg.setdefault("solver", {})
    config = ExperimentConfig(experiment=experiment, **cfg)
    config.validate()
    return config


@dataclass
class RunRecord:
    experiment: str
    config: dict
    config_hash: str
    columns: list
    rows: list
    aggregates: dict
    targets: dict
    extras: dict
    n_replicas: int
    n_failed: int
    failed_indices: list
    wall_time: float
    version: str

    def summary_dict(self):
        """Deterministic summary (wall time deliberately excluded)."""
        primary = _primary_columns(self.experiment, self.config) or self.columns
        primary = [c for c in primary if c in self.aggregates]
        est = {c: self.aggregates[c] for c in primary}
        lead = primary[-1] if primary else None
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "n_replicas": self.n_replicas,
            "n_failed": self.n_failed,
            "estimate": self.aggregates[lead]["mean"] if lead else math.nan,
            "stderr": self.aggregates[lead]["stderr"] if lead else math.nan,
            "target": self.targets.get(lead, {}).get("value") if lead else None,
            "target_provenance": self.targets.get(lead, {}).get("provenance") if lead else None,
            "estimates": est,
            "aggregates": self.aggregates,
            "targets": self.targets,
            "extras": self.extras,
            "version": self.version,
        }


def _replica_seed(master, experiment, idx):
    return np.random.SeedSequence(entropy=master, spawn_key=(int(experiment[1]), idx))


def _start_point(config):
    if config.start == "uniform":
        return "stationary"
    if config.start == "corner":
        return np.zeros(config.d)
    return np.full(config.d, math.pi)


def fmt_r(r):
    return ("%g" % r).replace(".", "p").replace("-", "m")


# ---------------------------------------------------------------------------
# prefix-binned simulation shared by E1/E2/E3
# ---------------------------------------------------------------------------


def _prefix_histograms(config, rng_seed, dtype=np.float64, grid_n=None):
    """Simulate one path and yield (t, normalized histogram) at each horizon.

    The histogram accumulates trapezoid time weights: every node adds dt and
    the two endpoint halves are corrected at snapshot time.  Chunk boundaries
    are forced onto the horizons, so each snapshot covers exactly [0, t].
    """
    d = config.d
    n = grid_n or config.grid_n
    dt = config.dt()
    horizons = list(config.horizons)
    hist = np.zeros(n**d, dtype=dtype)
    first_cell = None
    gen_chunk = int(config.solver.get("chunk_steps", 250_000))
    it = iter_path_chunks(
        d,
        horizons[-1],
        dt,
        rng_seed,
        chunk_steps=gen_chunk,
        potential=config.potential_object(),
        init=_start_point(config),
        break_times=horizons,
    )
    h_idx = 0
    last_cell = None
    for times, pts in it:
        idx = np.mod(np.rint(pts / (TWO_PI / n)).astype(np.int64), n)
        flat = idx[:, 0]
        for a in range(1, d):
            flat = flat * n + idx[:, a]
        if first_cell is None:
            first_cell = int(flat[0])
        np.add.at(hist, flat, dtype(dt))
        last_cell = int(flat[-1])
        t_now = float(times[-1])
        while h_idx < len(horizons) and t_now >= horizons[h_idx] - dt * 0.5:
            t = horizons[h_idx]
            snap = hist.copy()
            snap[first_cell] -= dtype(dt) / 2
            snap[last_cell] -= dtype(dt) / 2
            snap /= dtype(snap.sum())
            yield t, snap.reshape((n,) * d)
            h_idx += 1


def _xi_tail_cached(d, r, cap, t):
    return _xi_tail_cached_impl(d, float(r), float(cap), float(t))


@lru_cache(maxsize=256)
def _xi_tail_cached_impl(d, r, cap, t):
    return xi_lattice_tail_mean(d, r, cap, t=t)


@lru_cache(maxsize=64)
def _limit_series_cached(d, r):
    # reachable certified tolerances differ per dimension (the r = 0 series
    # converges like lambda^(d/2 - 2) in the tail)
    tol = {1: 1e-8, 2: 3e-6, 3: 0.05, 4: 1e-6, 5: 1e-6}[d]
    return limit_series(d, r, tol=tol).value


# ---------------------------------------------------------------------------
# replica bodies
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _potential_basis(amplitude, grid_n, n_modes):
    """Weighted eigenbasis for the circle with a cosine potential (cached)."""
    from .geometry import circle_potential_eigensolve

    theta = np.arange(grid_n) * (TWO_PI / grid_n)
    return circle_potential_eigensolve(amplitude * np.cos(theta), n_modes)


def _replica_e1(config, idx):
    seed = _replica_seed(config.seed, config.experiment, idx)
    row = {}
    spectral_n = _spectral_grid_n(config)
    for t, snap in _prefix_histograms(config, seed, grid_n=spectral_n):
        r_t = t ** (-1.5)
        if spectral_n != config.grid_n:
            coarse = _coarsen(snap, config.grid_n)
            measure = DiscreteMeasure(grid_n=config.grid_n, d=config.d, weights=coarse)
        else:
            measure = DiscreteMeasure(grid_n=config.grid_n, d=config.d, weights=snap / snap.sum())
        cap = config.lambda_max
        if config.potential is not None:
            # weighted circle: spectral sums over the eigenbasis of the
            # potential operator, transport against exp(V) dx / Z
            basis = _potential_basis(
                float(config.potential["amplitude"]), config.grid_n, config.grid_n // 8
            )
            lam = basis.eigenvalues[1:]
            keep = lam <= cap
            lam = lam[keep]
            # psi_i = sqrt(t) * <empirical occupation, phi_i>
            psi = math.sqrt(t) * (basis.phis[1:][keep] @ snap)
            row[f"xi_t{t:g}"] = float(np.sum(psi**2 / lam * np.exp(-2.0 * r_t * lam)))
            reference = DiscreteMeasure(grid_n=config.grid_n, d=1, weights=basis.mu)
            res = w2_circle_exact(measure, reference)
            row[f"w2sq_t{t:g}"] = res.value**2
            row[f"tw2sq_t{t:g}"] = t * row[f"w2sq_t{t:g}"]
            continue
        xi = xi_from_grid(snap, t, r_t, cap) + _xi_tail_cached(config.d, r_t, cap, t)
        row[f"xi_t{t:g}"] = xi
        if config.d == 1:
            res = w2_circle_exact(measure, uniform_measure(1, config.grid_n))
            row[f"w2sq_t{t:g}"] = res.value**2
        else:
            eps = float(config.solver.get("epsilon", {2: 0.1, 3: 0.05}[config.d]))
            res = sinkhorn_w2(
                measure,
                uniform_measure(config.d, config.grid_n),
                epsilon=eps,
                max_iter=int(config.solver.get("max_iter", 10000)),
                tol=float(config.solver.get("tol", 1e-7)),
            )
            row[f"w2sq_t{t:g}"] = res.value
        row[f"tw2sq_t{t:g}"] = t * row[f"w2sq_t{t:g}"]
    return row


def _spectral_grid_n(config):
    # the FFT spectral estimate needs sqrt(lambda_max) <= 0.36 * n, and the
    # spectral grid must refine the OT grid so snapshots can be block-summed
    need = math.sqrt(config.lambda_max) / 0.36
    factor = max(1, int(math.ceil(need / config.grid_n)))
    return config.grid_n * factor


def _coarsen(weights, n_out):
    """Block-sum a histogram to a coarser grid (n divisible by n_out)."""
    n_in = weights.shape[0]
    if n_in == n_out:
        return weights / weights.sum()
    if n_in % n_out:
        raise ArgumentError("spectral grid must be a multiple of the OT grid")
    f = n_in // n_out
    d = weights.ndim
    out = weights
    for ax in range(d):
        shape = out.shape[:ax] + (n_out, f) + out.shape[ax + 1 :]
        out = out.reshape(shape).sum(axis=ax + 1)
    return out / out.sum()


def _replica_e2(config, idx):
    row = _replica_e1(config, idx)
    return row


def _replica_e3(config, idx):
    seed = _replica_seed(config.seed, config.experiment, idx)
    row = {}
    cap = config.lambda_max
    for t, snap in _prefix_histograms(config, seed, dtype=np.float32):
        r_t = KAPPA4 / t if config.d == 4 else t ** (-2.0 / (config.d - 2.0))
        resolved = xi_from_grid(snap, t, r_t, cap)
        tail = _xi_tail_cached(config.d, r_t, cap, t)
        row[f"xi_t{t:g}"] = resolved + tail
        row[f"w2sq_t{t:g}"] = (resolved + tail) / t
        row[f"tailfrac_t{t:g}"] = tail / (resolved + tail)
    return row


def _replica_e4(config, idx):
    seed = _replica_seed(config.seed, config.experiment, idx)
    row = {}
    snap = t_snap = None
    for t_snap, snap in _prefix_histograms(config, seed):
        pass  # single horizon: keep the final snapshot
    cap = config.lambda_max
    for r in config.smoothing:
        resolved = xi_from_grid(snap, t_snap, r, cap)
        tail = _xi_tail_cached(config.d, r, cap, t_snap) if r > 0 else 0.0
        row[f"xi_r{fmt_r(r)}"] = resolved + tail
    return row


def _replica_e5(config, idx):
    seed = _replica_seed(config.seed, config.experiment, idx)
    row = {}
    for t, snap in _prefix_histograms(config, seed):
        raw = DiscreteMeasure(grid_n=config.grid_n, d=config.d, weights=snap / snap.sum())
        for r in config.smoothing:
            smoothed_w = smooth_measure_weights(raw.weights, r)
            smoothed = DiscreteMeasure(grid_n=config.grid_n, d=config.d, weights=smoothed_w)
            if config.d == 1:
                bias = w2_circle_exact(raw, smoothed).value ** 2
                vs_mu = w2_circle_exact(smoothed, uniform_measure(1, config.grid_n)).value ** 2
            else:
                eps = float(config.solver.get("epsilon", 0.1))
                bias = sinkhorn_w2(raw, smoothed, epsilon=eps).value
                vs_mu = sinkhorn_w2(smoothed, uniform_measure(config.d, config.grid_n), epsilon=eps).value
            row[f"bias_w2sq_r{fmt_r(r)}"] = bias
            row[f"w2sq_vs_mu_r{fmt_r(r)}"] = vs_mu
    return row


def _replica_e7(config, idx):
    seed = _replica_seed(config.seed, config.experiment, idx)
    t = config.horizons[-1]
    modes = enumerate_modes(config.d, config.lambda_max)
    path = simulate_path(
        config.d,
        t,
        config.dt(),
        seed,
        potential=config.potential_object(),
        init=_start_point(config),
    )
    spec = psi_functionals(path, modes)
    row = {}
    for lam in sorted(set(modes.lambdas.tolist()))[:3]:
        sel = modes.lambdas == lam
        row[f"psi_sq_lam{lam:g}"] = float(np.mean(spec.psi[sel] ** 2))
    return row


_REPLICA_BODIES = {
    "E1": _replica_e1,
    "E2": _replica_e2,
    "E3": _replica_e3,
    "E4": _replica_e4,
    "E5": _replica_e5,
    "E7": _replica_e7,
}


def _replica_dispatch(config_dict, idx):
    config = ExperimentConfig.from_dict(config_dict)
    if idx in config.solver.get("fail_replicas", []):
        raise RuntimeError(f"injected failure in replica {idx}")
    return _REPLICA_BODIES[config.experiment](config, idx)


def _replica_task(args):
    config_dict, idx = args
    try:
        return idx, "ok", _replica_dispatch(config_dict, idx)
    except Exception as exc:  # crash isolation: record and continue
        return idx, "failed", repr(exc)


# ---------------------------------------------------------------------------
# targets and aggregation
# ---------------------------------------------------------------------------


def _primary_columns(experiment, config):
    horizons = config.get("horizons", [])
    smoothing = config.get("smoothing", [])
    if experiment in ("E1", "E2"):
        return [f"tw2sq_t{t:g}" for t in horizons]
    if experiment == "E3":
        return [f"w2sq_t{t:g}" for t in horizons]
    if experiment == "E4":
        return [f"xi_r{fmt_r(r)}" for r in smoothing]
    if experiment == "E5":
        return [f"bias_w2sq_r{fmt_r(r)}" for r in smoothing]
    if experiment == "E6":
        return [f"rate_r{fmt_r(r)}" for r in smoothing]
    if experiment == "E7":
        return []  # filled from observed columns
    return []


def _targets_for(config):
    exp = config.experiment
    targets = {}
    if exp in ("E1", "E2"):
        if config.potential is not None:
            basis = _potential_basis(
                float(config.potential["amplitude"]), config.grid_n, config.grid_n // 8
            )
            ls = float(np.sum(2.0 / basis.eigenvalues[1:] ** 2))
            provenance = "series sum 2/lambda^2 over the weighted-circle eigenvalues"
        else:
            ls = _limit_series_cached(config.d, 0.0)
            provenance = "lattice series sum 2/lambda^2"
        if config.d <= 3:
            for t in config.horizons:
                targets[f"tw2sq_t{t:g}"] = {
                    "value": ls,
                    "provenance": provenance,
                }
    elif exp == "E3":
        for t in config.horizons:
            r_t = KAPPA4 / t if config.d == 4 else t ** (-2.0 / (config.d - 2.0))
            val = _limit_series_cached(config.d, r_t) / t
            targets[f"w2sq_t{t:g}"] = {
                "value": val,
                "provenance": "lattice series sum 2 e^(-2 r_t lambda)/lambda^2 over t",
            }
    elif exp == "E4":
        t = config.horizons[-1]
        for r in config.smoothing:
            if r > 0:
                targets[f"xi_r{fmt_r(r)}"] = {
                    "value": expected_xi_stationary_shells(config.d, t, r, 4096),
                    "provenance": "stationary expectation of Xi_r(t)",
                }
    elif exp == "E5":
        for r in config.smoothing:
            targets[f"bias_w2sq_r{fmt_r(r)}"] = {
                "value": 2.0 * config.d * r,
                "provenance": "coupling bound E rho(X_0, X_r)^2 = 2 d r",
            }
    elif exp == "E7":
        t = config.horizons[-1]
        modes = enumerate_modes(config.d, config.lambda_max)
        for lam in sorted(set(modes.lambdas.tolist()))[:3]:
            bracket = 1.0 - (1.0 - math.exp(-lam * t)) / (lam * t)
            targets[f"psi_sq_lam{lam:g}"] = {
                "value": 2.0 / lam * bracket,
                "provenance": "closed form (2/lambda)(1-(1-e^(-lambda t))/(lambda t))",
            }
    return targets


def run_experiment(config, threads=None):
    """Run all replicas of an experiment and aggregate the results."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    config.validate()
    t0 = time.time()
    if config.experiment == "E6":
        return _run_e6(config, t0)
    threads = threads or int(os.environ.get("TORUSOT_THREADS", "1"))
    tasks = [(config.to_dict(), i) for i in range(config.replicas)]
    results = []
    if threads > 1:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replica_task, tasks, chunksize=1))
    else:
        results = [_replica_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    rows, failed = [], []
    for idx, status, payload in results:
        if status == "ok":
            row = {"replica_index": idx}
            row.update(payload)
            rows.append(row)
        else:
            failed.append((idx, payload))
    columns = sorted({k for row in rows for k in row if k != "replica_index"})
    aggregates = {}
    for c in columns:
        vals = np.array([row[c] for row in rows if c in row], dtype=float)
        mean = float(np.mean(vals)) if len(vals) else math.nan
        stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        aggregates[c] = {"mean": mean, "stderr": stderr}
    extras = _extras_for(config, rows, aggregates)
    record = RunRecord(
        experiment=config.experiment,
        config=config.to_dict(),
        config_hash=config.config_hash(),
        columns=columns,
        rows=rows,
        aggregates=aggregates,
        targets=_targets_for(config),
        extras=extras,
        n_replicas=len(rows),
        n_failed=len(failed),
        failed_indices=[i for i, _ in failed],
        wall_time=time.time() - t0,
        version=__version__,
    )
    return record


def _extras_for(config, rows, aggregates):
    extras = {}
    exp = config.experiment
    if exp == "E2" and rows:
        t = config.horizons[-1]
        col = f"tw2sq_t{t:g}"
        sim = np.array([row[col] for row in rows])
        n_ref = int(config.solver.get("n_reference", 1_000_000))
        ref = sample_limit_law(config.d, 0.0, n_ref, 1e-3, seed=config.seed + 1)
        extras["ks_vs_limit"] = ks_distance(sim, ref.values)
    if exp == "E3" and rows and len(config.horizons) >= 3:
        pts = [(t, aggregates[f"w2sq_t{t:g}"]["mean"]) for t in config.horizons]
        fit_pow = rate_fit(pts, model="power")
        fit_pl = rate_fit(pts, model="power_log")
        extras["slope_power"] = fit_pow.slope
        extras["residual_power"] = fit_pow.residual
        extras["residual_power_log"] = fit_pl.residual
    if exp == "E4" and rows:
        t = config.horizons[-1]
        # restrict the fit to r where the second eigenvalue contributes < 1%
        fit_rs = [r for r in config.smoothing if r > 0.306]
        if len(fit_rs) >= 3:
            # Xi_r estimates 2x the Laplace transform of the spectral measure
            means = [0.5 * aggregates[f"xi_r{fmt_r(r)}"]["mean"] for r in fit_rs]
            try:
                lam1, mult = estimate_lambda1(fit_rs, means)
                extras["lambda1_hat"] = lam1
                extras["mult_hat"] = mult
            except Exception:
                pass
    if exp == "E5" and rows:
        pts = [(r, aggregates[f"bias_w2sq_r{fmt_r(r)}"]["mean"]) for r in config.smoothing]
        fit = rate_fit([(r, v) for r, v in pts], model="power")
        extras["bias_slope"] = fit.slope
    return extras


def _run_e6(config, t0):
    rows = []
    row = {"replica_index": 0}
    g_init = None
    values = []
    for r in sorted(config.smoothing):
        res = rate_function_circle(r, grid_n=config.grid_n, g_init=g_init)
        g_init = np.sqrt(res.density)
        row[f"rate_r{fmt_r(r)}"] = res.value
        row[f"rate_resid_r{fmt_r(r)}"] = res.constraint_residual
        values.append((r, res.value, res.density))
    rows.append(row)
    extras = {}
    vals = [v for _, v, _ in values]
    extras["monotone_ok"] = float(all(b >= a - 1e-4 for a, b in zip(vals, vals[1:])))
    # discrete check of the interpolation argument on the largest target
    _, v_last, dens = values[-1]
    s_grid = np.linspace(0.0, 0.9, 10)
    fam = interpolation_family_information(dens, s_grid)
    extras["interpolation_max_excess"] = float(np.max(fam - v_last))
    columns = sorted(k for k in row if k != "replica_index")
    aggregates = {c: {"mean": float(row[c]), "stderr": 0.0} for c in columns}
    return RunRecord(
        experiment="E6",
        config=config.to_dict(),
        config_hash=config.config_hash(),
        columns=columns,
        rows=rows,
        aggregates=aggregates,
        targets={},
        extras=extras,
        n_replicas=1,
        n_failed=0,
        failed_indices=[],
        wall_time=time.time() - t0,
        version=__version__,
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _sweep_value(col):
    # columns look like "name_t250", "name_r0p3", or "name_lam4"
    tag = col.rsplit("_", 1)[-1]
    if tag.startswith("lam"):
        return float(tag[3:])
    if tag.startswith("t"):
        return float(tag[1:])
    if tag.startswith("r"):
        return float(tag[1:].replace("p", ".").replace("m", "-"))
    return math.nan


def emit_report(records, out_dir, fmt="csv"):
    """Write a JSON summary and a plot-data CSV per experiment.

    Re-running on the same records produces byte-identical files (wall time
    is not part of the summary).
    """
    if not records:
        raise ArgumentError("emit_report needs at least one record")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for rec in records:
        base = os.path.join(out_dir, f"{rec.experiment}_{rec.config_hash}")
        summary_path = base + "_summary.json"
        with open(summary_path, "w") as fh:
            json.dump(rec.summary_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
        written.append(summary_path)
        curve_path = base + "_curve.csv"
        primary = _primary_columns(rec.experiment, rec.config) or rec.columns
        with open(curve_path, "w") as fh:
            fh.write("t,value,stderr,target\n")
            for col in primary:
                if col not in rec.aggregates:
                    continue
                agg = rec.aggregates[col]
                target = rec.targets.get(col, {}).get("value", math.nan)
                fh.write(
                    f"{_sweep_value(col):.12g},{agg['mean']:.12g},{agg['stderr']:.12g},{target:.12g}\n"
                )
        written.append(curve_path)
        if fmt == "csv":
            rep_path = base + "_replicas.csv"
            with open(rep_path, "w") as fh:
                cols = ["replica_index"] + rec.columns
                fh.write(",".join(cols) + "\n")
                for row in rec.rows:
                    fh.write(",".join(_fmt_cell(row.get(c)) for c in cols) + "\n")
            written.append(rep_path)
    return written


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"
