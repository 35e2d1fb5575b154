"""Input/output records and their CSV/JSON persistence."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


class DataError(ValueError):
    """Malformed or insufficient measurement data."""


@dataclass(frozen=True)
class Dataset:
    """Measured (or simulated) input/output record.

    Attributes
    ----------
    u, y : np.ndarray
        Input and output samples of equal length ``N``.
    tau : int or None
        Declared memory bound of the system. ``None`` lets the model
        structure decide (its own memory length minus one).
    meta : dict
        Provenance (seed, generator spec, source file, ...).
    """

    u: np.ndarray
    y: np.ndarray
    tau: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if u.ndim != 1 or y.ndim != 1:
            raise DataError("u and y must be one-dimensional")
        if u.shape != y.shape:
            raise DataError(f"u and y lengths differ ({u.size} != {y.size})")
        if self.tau is not None and self.tau < 0:
            raise DataError("tau must be nonnegative")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.u.size

    def window(self, start: int, stop: int) -> "Dataset":
        """Contiguous sub-record ``[start, stop)`` keeping tau and meta."""
        if not 0 <= start < stop <= self.N:
            raise DataError(f"window [{start}, {stop}) outside record of length {self.N}")
        return Dataset(self.u[start:stop], self.y[start:stop], self.tau, dict(self.meta))


def ingest_csv(path) -> Dataset:
    """Read a dataset from a CSV file with (at least) ``u`` and ``y`` columns.

    Rows are kept in file order. Any non-numeric cell is reported with its
    line number.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in ("u", "y"):
            if col not in header:
                raise DataError(f"{path}: missing required column '{col}'")
        iu, iy = header.index("u"), header.index("y")
        us, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                us.append(float(row[iu]))
                ys.append(float(row[iy]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell in row {row!r}") from None
    meta: dict[str, Any] = {"source": str(path), "N": len(us)}
    sidecar = path.with_suffix(".json")
    tau = None
    if sidecar.exists():
        with sidecar.open() as fh:
            side = json.load(fh)
        tau = side.get("tau")
        meta.update(side)
    return Dataset(np.array(us), np.array(ys), tau, meta)


def write_csv(data: Dataset, path, sidecar: bool = True) -> Path:
    """Write ``n,u,y`` rows (``repr`` floats, so ingest is bit-exact) and a JSON sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "u", "y"])
        for n, (u, y) in enumerate(zip(data.u.tolist(), data.y.tolist())):
            w.writerow([n, repr(u), repr(y)])
    if sidecar:
        side = dict(data.meta)
        side["tau"] = data.tau
        dump_json(side, path.with_suffix(".json"))
    return path


def dump_json(obj, path) -> Path:
    """Deterministic JSON writer (sorted keys, fixed separators, trailing newline)."""
    path = Path(path)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
