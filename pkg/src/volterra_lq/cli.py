"""Command-line front end.

Exit codes: 0 success, 2 config error, 3 data error, 4 non-converged fit
(only with ``--strict``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bounds as bnd
from .data import DataError, Dataset, dump_json, ingest_csv, write_csv
from .dictionary import (SizingError, VolterraStructure, count_params, predict,
                         read_coefficients)
from .experiment import (ConfigError, ExperimentConfig, load_data, run_experiment, run_sweep,
                         simulator_parts)
from .metrics import sparsity_curve, write_two_column_csv
from .simulator import StabilityError, simulate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED = 0, 2, 3, 4


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(seed=args.seed)


def _out(args, cfg=None) -> Path:
    out = Path(args.out) if args.out else (cfg.output_dir if cfg else Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _structure(args) -> VolterraStructure:
    if args.config:
        return ExperimentConfig.load(args.config).structure
    if args.degree is None or args.memory is None:
        raise ConfigError("give --config or both --degree and --memory")
    mem = [int(v) for v in args.memory.split(",")]
    if len(mem) == 1:
        mem = mem * args.degree
    return VolterraStructure(args.degree, tuple(mem))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if cfg.simulate is None:
        raise ConfigError("simulate needs a 'simulate' data source in the config")
    data = simulate(*simulator_parts(cfg, cfg.eval_start + cfg.eval_length))
    path = write_csv(data, _out(args, cfg) / "dataset.csv")
    print(path)
    return EXIT_OK


def _pipeline(args, evaluate: bool) -> int:
    cfg = _config(args)
    manifest = run_experiment(cfg, _out(args, cfg), evaluate=evaluate)
    print(json.dumps({"D": manifest["D"], "nonconverged_q": manifest["nonconverged_q"],
                      "files": sorted(manifest["files"])}, indent=2))
    if args.strict and manifest["nonconverged_q"]:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_fit(args) -> int:
    return _pipeline(args, evaluate=False)


def cmd_evaluate(args) -> int:
    return _pipeline(args, evaluate=True)


def cmd_tune(args) -> int:
    from .solver import QuadraticObjective
    from .tuning import tune_R

    cfg = _config(args)
    data = load_data(cfg)
    obj = QuadraticObjective.from_data(data.window(0, cfg.train_length), cfg.structure)
    out = _out(args, cfg)
    results = {}
    nonconverged = False
    for q in cfg.qs:
        res = tune_R(obj, q, None, cfg.solver, cfg.tuning)
        results[f"{q:g}"] = res.to_dict()
        dump_json(res.to_dict(), out / f"tuning_q{q:g}.json")
        nonconverged |= not res.exact
    print(json.dumps({q: {"R": r["R"], "achieved_norm": r["achieved_norm"], "exact": r["exact"]}
                      for q, r in results.items()}, indent=2))
    return EXIT_NONCONVERGED if args.strict and nonconverged else EXIT_OK


def cmd_predict(args) -> int:
    structure = _structure(args)
    theta = read_coefficients(args.coefficients, structure)
    data = ingest_csv(args.data)
    tau = data.tau if data.tau is not None and data.tau >= structure.tau_model else structure.tau_model
    y_hat = predict(theta, structure, Dataset(data.u, data.y, tau))
    out = _out(args)
    path = write_two_column_csv(out / "predictions.csv", ("y", "y_hat"),
                                zip(data.y[tau:].tolist(), y_hat.tolist()))
    print(path)
    return EXIT_OK


def cmd_sparsity(args) -> int:
    structure = _structure(args)
    theta = read_coefficients(args.coefficients, structure)
    thresholds = None
    try:
        if args.thresholds:
            thresholds = [float(t) for t in args.thresholds.split(",")]
        curve = sparsity_curve(theta, thresholds)
    except ValueError as exc:
        raise ConfigError(f"bad --thresholds: {exc}") from exc
    path = write_two_column_csv(_out(args) / "sparsity.csv", ("threshold", "count"), curve.to_rows())
    print(path)
    return EXIT_OK


def cmd_bound(args) -> int:
    D = args.D
    if D is None:
        D = count_params(_structure(args))
    p = bnd.BoundParams(args.N, args.tau, D, args.M, args.sigma, args.R, args.K)
    print(json.dumps(bnd.bound_report(p, args.q, args.which), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    manifest = run_sweep(cfg, _out(args, cfg), workers=args.threads)
    print(json.dumps({"cells": sorted(manifest["cells"]), "nonconverged": manifest["nonconverged"]},
                     indent=2))
    if args.strict and manifest["nonconverged"]:
        return EXIT_NONCONVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="parallel sweep cells")
    common.add_argument("--strict", action="store_true", help="exit 4 on non-converged fits")
    common.add_argument("-v", "--verbose", action="store_true")

    structure = argparse.ArgumentParser(add_help=False)
    structure.add_argument("--degree", type=int)
    structure.add_argument("--memory", help="memory length(s), comma separated")

    parser = argparse.ArgumentParser(prog="volterra-lq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate a dataset").set_defaults(func=cmd_simulate)
    sub.add_parser("fit", parents=[common], help="fit models").set_defaults(func=cmd_fit)
    sub.add_parser("tune", parents=[common], help="select R per q").set_defaults(func=cmd_tune)
    sub.add_parser("evaluate", parents=[common],
                   help="fit, predict and score on the evaluation window").set_defaults(func=cmd_evaluate)
    sub.add_parser("sweep", parents=[common], help="run a config grid").set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", parents=[common, structure], help="apply a coefficient file")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sparsity", parents=[common, structure], help="sparsity curve of a coefficient file")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--thresholds", help="comma-separated increasing thresholds")
    p.set_defaults(func=cmd_sparsity)

    p = sub.add_parser("bound", parents=[common, structure], help="evaluate an error bound")
    p.add_argument("--which", choices=("theorem1", "scaled", "q_penalty"), default="theorem1")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--D", type=int)
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--K", type=int)
    p.add_argument("--q", type=float)
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SizingError, bnd.BoundDomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, StabilityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
