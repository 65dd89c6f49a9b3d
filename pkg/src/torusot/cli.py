"""Command-line interface.

Subcommands: simulate, spectrum, transport, limit-sample, experiment run,
experiment report.  The default output directory comes from TORUSOT_OUT
(falling back to the working directory)."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .diffusion import CosinePotential, DiscreteMeasure, simulate_path
from .experiments import ExperimentConfig, emit_report, run_experiment
from .geometry import enumerate_modes
from .limits import sample_limit_law
from .transport import sinkhorn_w2, w1_lp_small, w2_circle_exact


def _out_dir(args):
    out = args.out or os.environ.get("TORUSOT_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="torusot")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate one diffusion path, write CSV")
    p_sim.add_argument("--d", type=int, default=1)
    p_sim.add_argument("--t-end", type=float, required=True)
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--potential-amplitude", type=float, default=None)
    p_sim.add_argument("--init", type=str, default="stationary")
    _add_common(p_sim)

    p_spec = sub.add_parser("spectrum", help="enumerate torus modes, write CSV table")
    p_spec.add_argument("--d", type=int, default=1)
    p_spec.add_argument("--lambda-max", type=float, required=True)
    _add_common(p_spec)

    p_tr = sub.add_parser("transport", help="distance between two stored measures")
    p_tr.add_argument("--method", choices=["exact", "sinkhorn", "w1"], default="exact")
    p_tr.add_argument("--a", type=str, required=True, help="binary DiscreteMeasure file")
    p_tr.add_argument("--b", type=str, required=True)
    p_tr.add_argument("--epsilon", type=float, default=0.1)
    _add_common(p_tr)

    p_ls = sub.add_parser("limit-sample", help="draw the limiting law, write binary vector")
    p_ls.add_argument("--d", type=int, default=1)
    p_ls.add_argument("--r", type=float, default=0.0)
    p_ls.add_argument("--n", type=int, default=100000)
    p_ls.add_argument("--tol", type=float, default=1e-3)
    _add_common(p_ls)

    p_exp = sub.add_parser("experiment", help="run or report experiments")
    sub_exp = p_exp.add_subparsers(dest="exp_command", required=True)
    p_run = sub_exp.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config", type=str)
    _add_common(p_run)
    p_rep = sub_exp.add_parser("report", help="re-emit reports for stored records")
    p_rep.add_argument("records_dir", type=str)
    _add_common(p_rep)

    args = parser.parse_args(argv)

    if args.command == "simulate":
        potential = (
            CosinePotential(args.potential_amplitude)
            if args.potential_amplitude is not None
            else None
        )
        init = args.init if args.init == "stationary" else np.zeros(args.d)
        path = simulate_path(args.d, args.t_end, args.dt, args.seed, potential=potential, init=init)
        out = os.path.join(_out_dir(args), "path.csv")
        path.to_csv(out)
        print(out)
        return 0

    if args.command == "spectrum":
        modes = enumerate_modes(args.d, args.lambda_max)
        out = os.path.join(_out_dir(args), "modes.csv")
        modes.to_csv(out)
        print(out)
        return 0

    if args.command == "transport":
        a = DiscreteMeasure.from_binary(args.a)
        b = DiscreteMeasure.from_binary(args.b)
        if args.method == "exact":
            res = w2_circle_exact(a, b)
        elif args.method == "sinkhorn":
            res = sinkhorn_w2(a, b, epsilon=args.epsilon)
        else:
            res = w1_lp_small(a, b)
        print(res.to_json())
        return 0

    if args.command == "limit-sample":
        sample = sample_limit_law(args.d, args.r, args.n, args.tol, seed=args.seed)
        out = os.path.join(_out_dir(args), "limit_sample.bin")
        sample.save(out)
        print(out)
        return 0

    if args.command == "experiment":
        if args.exp_command == "run":
            with open(args.config) as fh:
                config = ExperimentConfig.from_dict(json.load(fh))
            record = run_experiment(config, threads=args.threads)
            out = _out_dir(args)
            files = emit_report([record], out, fmt=args.format)
            record_path = os.path.join(out, f"{record.experiment}_{record.config_hash}_record.json")
            with open(record_path, "w") as fh:
                json.dump(
                    {
                        "config": record.config,
                        "summary": record.summary_dict(),
                        "rows": record.rows,
                        "wall_time": record.wall_time,
                    },
                    fh,
                    sort_keys=True,
                )
            for f in files + [record_path]:
                print(f)
            return 0
        # report: rebuild summaries from stored record files
        out = _out_dir(args)
        names = sorted(
            f for f in os.listdir(args.records_dir) if f.endswith("_record.json")
        )
        if not names:
            print("no *_record.json files found", file=sys.stderr)
            return 1
        from .experiments import RunRecord
        from ._version import __version__

        records = []
        for name in names:
            with open(os.path.join(args.records_dir, name)) as fh:
                data = json.load(fh)
            summary = data["summary"]
            records.append(
                RunRecord(
                    experiment=summary["experiment"],
                    config=data["config"],
                    config_hash=summary["config_hash"],
                    columns=sorted({k for row in data["rows"] for k in row if k != "replica_index"}),
                    rows=data["rows"],
                    aggregates=summary["aggregates"],
                    targets=summary["targets"],
                    extras=summary["extras"],
                    n_replicas=summary["n_replicas"],
                    n_failed=summary["n_failed"],
                    failed_indices=[],
                    wall_time=data.get("wall_time", 0.0),
                    version=summary.get("version", __version__),
                )
            )
        for f in emit_report(records, out, fmt=args.format):
            print(f)
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
