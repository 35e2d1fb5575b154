"""Experiment configs and the ingest -> tune -> fit -> evaluate pipeline.

A config is a JSON document::

    {
      "schema_version": 1,
      "structure": {"degree": 2, "memory_lengths": [40, 40]},
      "solver": {"q": [1, 1.5, 2], "R": "auto"},
      "data": {"simulate": {"snr": 40}},
      "split": {"train_length": 1000, "eval_length": 1000},
      "seed": 0
    }

Unknown keys are rejected. ``data`` holds exactly one of ``csv`` (a path,
relative paths resolve against the config file) or ``simulate``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any


from . import bounds as bnd
from .data import DataError, Dataset, dump_json, ingest_csv, write_csv
from .dictionary import (VolterraStructure, _resolve_tau, build_regressors, count_params,
                         write_coefficients)
from .metrics import nonzero_count, rmse, sparsity_curve, write_two_column_csv
from .simulator import BlockCascade, SignalSpec, TransferFunction, simulate
from .solver import QuadraticObjective, SolverOptions, default_radius, fit, fit_unconstrained, lq_norm
from .tuning import TuningOptions, tune_R

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NNZ_THRESHOLD = 1e-6


class ConfigError(ValueError):
    pass


_KEYS = {
    "": {"schema_version", "structure", "solver", "data", "split", "bounds", "output_dir",
         "seed", "sweep", "baseline", "tuning"},
    "structure": {"degree", "memory_lengths", "include_constant"},
    "solver": {"q", "R", "gap_tol", "max_iters", "path", "away_steps"},
    "data": {"csv", "simulate"},
    "simulate": {"cascade", "snr", "snr_unit", "correlate_with", "tau"},
    "split": {"train_length", "eval_start", "eval_length", "eval_skip"},
    "bounds": {"M", "sigma", "K"},
    "sweep": {"train_length", "seed", "snr"},
    "tuning": {"epsilon", "start", "small_fraction", "max_doublings", "max_bisections", "active_rtol"},
}


def _check_keys(d, section: str):
    if not isinstance(d, dict):
        raise ConfigError(f"'{section or 'config'}' must be an object")
    extra = set(d) - _KEYS[section]
    if extra:
        raise ConfigError(f"unknown key(s) in '{section or 'config'}': {sorted(extra)}")


@dataclass(frozen=True)
class ExperimentConfig:
    structure: VolterraStructure
    qs: tuple[float, ...]
    R: float | str
    solver: SolverOptions
    tuning: TuningOptions
    csv: Path | None
    simulate: dict | None
    train_length: int
    eval_start: int
    eval_length: int | None
    eval_skip: int | None
    bounds: dict
    output_dir: Path
    seed: int
    baseline: bool
    sweep: dict | None
    raw: dict = field(repr=False, compare=False)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(raw)
        _check_keys(raw, "")
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
        for sec in ("structure", "solver", "data", "split"):
            if sec not in raw:
                raise ConfigError(f"missing section '{sec}'")
        for sec in ("structure", "solver", "data", "split", "bounds", "sweep", "tuning"):
            if sec in raw:
                _check_keys(raw[sec], sec)
        try:
            structure = VolterraStructure.from_dict(raw["structure"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad structure: {exc}") from exc

        sv = raw["solver"]
        qs = sv.get("q", [1.0])
        qs = tuple(float(q) for q in (qs if isinstance(qs, list) else [qs]))
        if not qs or any(q < 1 for q in qs):
            raise ConfigError("every q must be >= 1")
        R = sv.get("R", 1.0)
        if R != "auto" and not (isinstance(R, (int, float)) and R > 0):
            raise ConfigError("R must be a positive number or 'auto'")
        try:
            solver = SolverOptions(sv.get("gap_tol"), sv.get("max_iters"),
                                   sv.get("path", "frank_wolfe"),
                                   away_steps=bool(sv.get("away_steps", False)))
            tuning = TuningOptions(**raw.get("tuning", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if solver.path == "projected_gradient" and any(q != 1 for q in qs):
            raise ConfigError("projected_gradient path supports q = 1 only")

        data = raw["data"]
        if len(data) != 1:
            raise ConfigError("data must name exactly one source: 'csv' or 'simulate'")
        csv_path = sim = None
        if "csv" in data:
            csv_path = Path(data["csv"])
            if base_dir is not None and not csv_path.is_absolute():
                csv_path = base_dir / csv_path
        else:
            sim = data["simulate"]
            _check_keys(sim, "simulate")

        sp = raw["split"]
        if "train_length" not in sp:
            raise ConfigError("split.train_length is required")
        train = int(sp["train_length"])
        eval_start = int(sp.get("eval_start", train))
        eval_length = sp.get("eval_length")
        if sim is not None and eval_length is None:
            eval_length = train
        if train < 1 or (eval_length is not None and int(eval_length) < 1):
            raise ConfigError("window lengths must be positive")
        if eval_start < train:
            raise ConfigError(f"evaluation window starts at {eval_start}, inside the "
                              f"training window [0, {train})")
        return cls(structure, qs, R if R == "auto" else float(R), solver, tuning, csv_path, sim,
                   train, eval_start, None if eval_length is None else int(eval_length),
                   sp.get("eval_skip"), raw.get("bounds", {}),
                   Path(raw.get("output_dir", "out")), int(raw.get("seed", 0)),
                   bool(raw.get("baseline", False)), raw.get("sweep"), raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    def with_overrides(self, seed=None, output_dir=None, train_length=None, snr=None,
                       drop_sweep: bool = False) -> "ExperimentConfig":
        """Copy with selected fields replaced (``None`` keeps the current value)."""
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if output_dir is not None:
            raw["output_dir"] = str(output_dir)
        if train_length is not None:
            raw["split"]["train_length"] = int(train_length)
            raw["split"].pop("eval_start", None)
        if snr is not None:
            raw["data"]["simulate"]["snr"] = snr
        if drop_sweep:
            raw.pop("sweep", None)
        cfg = ExperimentConfig.from_dict(raw)
        return cfg if self.csv is None else replace(cfg, csv=self.csv)

    def identity(self) -> dict:
        """Raw config minus where results go (which does not affect them)."""
        return {k: v for k, v in self.raw.items() if k != "output_dir"}

    def hash(self) -> str:
        canon = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def simulator_parts(cfg: ExperimentConfig, N: int) -> tuple[BlockCascade, SignalSpec]:
    sim = cfg.simulate
    try:
        cascade = BlockCascade.from_dict(sim["cascade"]) if "cascade" in sim else BlockCascade()
        corr = sim.get("correlate_with")
        spec = SignalSpec(N, cfg.seed, sim.get("snr"), sim.get("snr_unit", "linear"),
                          TransferFunction(tuple(corr["num"]), tuple(corr["den"])) if corr else None,
                          sim.get("tau"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulate section: {exc}") from exc
    return cascade, spec


def load_data(cfg: ExperimentConfig) -> Dataset:
    """The config's single data source, simulated or read from CSV."""
    if cfg.csv is not None:
        data = ingest_csv(cfg.csv)
    else:
        N = cfg.eval_start + cfg.eval_length
        data = simulate(*simulator_parts(cfg, N))
    end = cfg.eval_start + (cfg.eval_length or 0)
    if cfg.train_length > data.N or end > data.N:
        raise DataError(f"split needs {max(cfg.train_length, end)} samples; record has {data.N}")
    return data


def _split(cfg: ExperimentConfig, data: Dataset) -> tuple[Dataset, Dataset]:
    train = data.window(0, cfg.train_length)
    stop = data.N if cfg.eval_length is None else cfg.eval_start + cfg.eval_length
    if cfg.eval_start >= stop:
        raise DataError("empty evaluation window")
    return train, data.window(cfg.eval_start, stop)


def _qtag(q: float) -> str:
    return f"q{q:g}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir=None, evaluate: bool = True) -> dict:
    """Run the full pipeline and persist every artifact under ``out_dir``.

    Writes per-q fit reports (JSON), coefficients, iteration traces,
    sparsity curves and (with ``evaluate``) predictions, plus
    ``comparison.{csv,json}`` and ``manifest.json``. Returns the manifest.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_data(cfg)
    train, ev = _split(cfg, data)
    structure = cfg.structure
    D = count_params(structure)
    tau = _resolve_tau(train, structure, None)
    obj = QuadraticObjective.from_data(train, structure, tau)

    files: list[Path] = []
    if cfg.simulate is not None:
        files.append(write_csv(data, out / "dataset.csv"))
        files.append(out / "dataset.json")

    S_eval = y_eval = None
    eval_tau = None
    if evaluate:
        eval_tau = tau if cfg.eval_skip is None else int(cfg.eval_skip)
        if eval_tau < structure.tau_model:
            raise ConfigError(f"eval_skip {eval_tau} shorter than model memory {structure.tau_model}")
        S_eval = build_regressors(ev, structure, eval_tau)
        y_eval = ev.y[eval_tau:]

    M = cfg.bounds.get("M")
    sigma = cfg.bounds.get("sigma")
    sigma_method = "config"
    if M is None:
        M = bnd.estimate_M(obj.y, obj.S)
    if sigma is None:
        sigma, sigma_method = bnd.estimate_sigma(obj.S, obj.y)

    reports = []
    nonconverged = []
    for q in cfg.qs:
        tag = _qtag(q)
        tuning_info = None
        if cfg.R == "auto":
            res = tune_R(obj, q, None, cfg.solver, cfg.tuning)
            rep, R = res.fit, res.R
            theta = res.unscaled_coefficients()
            tuning_info = res.to_dict()
            files.append(dump_json(tuning_info, out / f"tuning_{tag}.json"))
        else:
            R = cfg.R
            rep = fit(obj, q, default_radius(D, q, R), cfg.solver)
            theta = rep.coefficients.values
        if not rep.converged:
            nonconverged.append(q)

        summary = rep.to_dict()
        summary.update({
            "R": R,
            "radius": default_radius(D, q, R),
            "norm_q": lq_norm(theta, q),
            "norm_1": lq_norm(theta, 1),
            "scaled_radius": rep.coefficients.radius,
            "D": D,
            "N_train": train.N,
            "tau": tau,
            "nonzero_count": nonzero_count(theta, NNZ_THRESHOLD),
            "train_rmse": rmse(obj.y, obj.S @ theta),
        })
        if evaluate:
            y_hat = S_eval @ theta
            summary["eval_rmse"] = rmse(y_eval, y_hat)
            summary["eval_window"] = [cfg.eval_start + eval_tau, cfg.eval_start + ev.N]
            files.append(write_two_column_csv(out / f"predictions_{tag}.csv", ("y", "y_hat"),
                                              zip(y_eval.tolist(), y_hat.tolist())))
        if D > 2:
            bp = bnd.BoundParams(train.N, tau, D, float(M), float(sigma), float(R),
                                 cfg.bounds.get("K"))
            summary["bounds"] = {
                "M": M, "sigma": sigma, "sigma_method": sigma_method,
                "theorem1": bnd.bound_theorem1(bp),
                "scaled": bnd.bound_scaled(bp),
                "q_penalty": bnd.bound_q_penalty(bp, q),
            }
        if tuning_info is not None:
            summary["tuning"] = tuning_info
        reports.append(summary)

        files.append(dump_json(summary, out / f"fit_{tag}.json"))
        files.append(write_coefficients(theta, structure, out / f"coefficients_{tag}.csv"))
        files.append(write_two_column_csv(out / f"trace_{tag}.csv", ("objective", "gap"),
                                          rep.trace.tolist()))
        files.append(write_two_column_csv(out / f"sparsity_{tag}.csv", ("threshold", "count"),
                                          sparsity_curve(theta).to_rows()))

    if cfg.baseline:
        theta = fit_unconstrained(obj)
        base = {"q": None, "R": None, "path": "least_squares", "objective": obj.value(theta),
                "gap": None, "iterations": None, "converged": True,
                "norm_1": lq_norm(theta, 1), "norm_q": lq_norm(theta, 2), "D": D,
                "nonzero_count": nonzero_count(theta, NNZ_THRESHOLD),
                "train_rmse": rmse(obj.y, obj.S @ theta)}
        if evaluate:
            base["eval_rmse"] = rmse(y_eval, S_eval @ theta)
            base["eval_window"] = [cfg.eval_start + eval_tau, cfg.eval_start + ev.N]
        reports.append(base)
        files.append(dump_json(base, out / "fit_least_squares.json"))
        files.append(write_coefficients(theta, structure, out / "coefficients_least_squares.csv"))

    if evaluate:
        table = compare_models(reports)
        files.extend(write_comparison(table, out))

    manifest = {
        "config_hash": cfg.hash(),
        "config": cfg.identity(),
        "seed": cfg.seed,
        "D": D,
        "tau": tau,
        "q": list(cfg.qs),
        "nonconverged_q": nonconverged,
        "files": {p.name: _sha256(p) for p in sorted(files, key=lambda p: p.name)},
    }
    dump_json(manifest, out / "manifest.json")
    return manifest


COMPARISON_COLUMNS = ("q", "R", "rmse", "norm_1", "norm_q", "nonzero_count", "gap", "iterations")


def compare_models(reports: list[dict]) -> list[dict]:
    """Rows ``(q, R, RMSe, ||theta||_1, ||theta||_q, nonzeros, gap, iterations)`` sorted by RMSe.

    All reports must share one evaluation window. Ties keep ascending ``q``
    (the least-squares baseline, with no ``q``, sorts last among ties).
    """
    if not reports:
        return []
    windows = {tuple(r.get("eval_window") or ()) for r in reports}
    if len(windows) != 1:
        raise ValueError(f"reports use different evaluation windows: {sorted(windows)}")
    rows = [{"q": r["q"], "R": r["R"], "rmse": r["eval_rmse"], "norm_1": r["norm_1"],
             "norm_q": r["norm_q"], "nonzero_count": r["nonzero_count"], "gap": r["gap"],
             "iterations": r["iterations"]} for r in reports]
    return sorted(rows, key=lambda r: (r["rmse"], r["q"] is None, r["q"] or 0.0))


def write_comparison(table: list[dict], out: Path) -> list[Path]:
    csv_path = out / "comparison.csv"
    with csv_path.open("w") as fh:
        fh.write(",".join(COMPARISON_COLUMNS) + "\n")
        for row in table:
            fh.write(",".join("" if row[c] is None else repr(row[c]) for c in COMPARISON_COLUMNS) + "\n")
    return [csv_path, dump_json(table, out / "comparison.json")]


def sweep_cells(cfg: ExperimentConfig) -> list[dict]:
    """Cartesian grid of (train_length, seed, snr) overrides from ``cfg.sweep``."""
    sw = cfg.sweep or {}
    Ns = sw.get("train_length", [cfg.train_length])
    seeds = sw.get("seed", [cfg.seed])
    snrs = sw.get("snr", [None])
    if any(s is not None for s in snrs) and cfg.simulate is None:
        raise ConfigError("an snr sweep needs a simulated data source")
    return [{"train_length": N, "seed": s, "snr": snr} for N in Ns for s in seeds for snr in snrs]


def _cell_name(cell: dict) -> str:
    name = f"N{cell['train_length']}_seed{cell['seed']}"
    return name + (f"_snr{cell['snr']:g}" if cell["snr"] is not None else "")


def _run_cell(args):
    cfg, cell, out = args
    sub = cfg.with_overrides(drop_sweep=True, **cell)
    return run_experiment(sub, out)


def run_sweep(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> dict:
    """Run every grid cell into its own subdirectory and aggregate the comparisons."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(cfg)
    jobs = [(cfg, cell, out / _cell_name(cell)) for cell in cells]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            manifests = list(pool.map(_run_cell, jobs))
    else:
        manifests = [_run_cell(j) for j in jobs]
    rows = []
    for cell, (_, _, sub) in zip(cells, jobs):
        for row in json.loads((sub / "comparison.json").read_text()):
            rows.append({**cell, **row})
    summary_path = out / "sweep_summary.csv"
    cols = ("train_length", "seed", "snr") + COMPARISON_COLUMNS
    with summary_path.open("w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join("" if row[c] is None else repr(row[c]) for c in cols) + "\n")
    manifest = {
        "config_hash": cfg.hash(),
        "cells": {_cell_name(c): m["files"] for c, m in zip(cells, manifests)},
        "nonconverged": {_cell_name(c): m["nonconverged_q"] for c, m in zip(cells, manifests)
                         if m["nonconverged_q"]},
        "files": {summary_path.name: _sha256(summary_path)},
    }
    dump_json(manifest, out / "manifest.json")
    return manifest


def default_wh2_config(**overrides: Any) -> dict:
    """Config dict for the WH2 study: P=2, L=40, q in {1, 1.5, 2}, SNR 40, tuned R."""
    cfg = {
        "schema_version": SCHEMA_VERSION,
        "structure": {"degree": 2, "memory_lengths": [40, 40], "include_constant": True},
        "solver": {"q": [1, 1.5, 2], "R": "auto", "path": "frank_wolfe"},
        "data": {"simulate": {"snr": 40, "snr_unit": "linear"}},
        "split": {"train_length": 1000, "eval_length": 1000},
        "output_dir": "out",
        "seed": 0,
    }
    cfg.update(overrides)
    return cfg
