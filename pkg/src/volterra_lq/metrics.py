"""Model scoring: RMS error, sparsity curves and kernel slices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dictionary import MultiIndex, VolterraStructure, enumerate_terms


def rmse(y, y_hat, skip: int = 0) -> float:
    """Root-mean-square error over ``y[skip:]`` vs ``y_hat[skip:]``."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch ({y.size} != {y_hat.size})")
    r = (y - y_hat)[skip:]
    if r.size == 0:
        raise ValueError("empty evaluation window")
    return float(np.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class SparsityCurve:
    thresholds: np.ndarray
    counts: np.ndarray

    def to_rows(self):
        return list(zip(self.thresholds.tolist(), self.counts.tolist()))


def default_thresholds(theta, n: int = 64, lo: float = 1e-8) -> np.ndarray:
    """``n`` log-spaced thresholds from ``lo`` to ``max|theta|``."""
    top = float(np.max(np.abs(theta), initial=0.0))
    if top <= lo:
        top = 1.0
    return np.logspace(np.log10(lo), np.log10(top), n)


def sparsity_curve(theta, thresholds: Sequence[float] | None = None) -> SparsityCurve:
    """Number of coefficients with ``|theta_i| > t`` for each threshold ``t``."""
    a = np.sort(np.abs(np.asarray(theta, dtype=float)))
    t = default_thresholds(a) if thresholds is None else np.asarray(thresholds, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("thresholds must be positive and strictly increasing")
    counts = a.size - np.searchsorted(a, t, side="right")
    return SparsityCurve(t, counts.astype(int))


def nonzero_count(theta, threshold: float) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(theta)) > threshold))


def kernel_slice(theta, structure: VolterraStructure, order: int,
                 fixed_lags: Sequence[int] = (), diagonal: bool = False) -> np.ndarray:
    """One-dimensional cut through the symmetric ``order``-th kernel.

    With ``diagonal=True`` returns ``h(k, ..., k)`` for ``k = 0..L-1``.
    Otherwise ``fixed_lags`` pins ``order - 1`` indices and the remaining
    one runs over ``0..L-1``. Canonical coefficients are divided by the
    number of orderings of their lag multiset, so the values are entries of
    the symmetric kernel (identical to the coefficients on the diagonal and
    for order 1).
    """
    theta = np.asarray(theta, dtype=float)
    if not 1 <= order <= structure.degree:
        raise ValueError(f"order {order} outside 1..{structure.degree}")
    L = structure.memory_lengths[order - 1]
    fixed = tuple(int(k) for k in fixed_lags)
    if not diagonal and len(fixed) != order - 1:
        raise ValueError(f"need {order - 1} fixed lags for an order-{order} slice")
    if any(not 0 <= k < L for k in fixed):
        raise ValueError(f"fixed lags must lie in [0, {L})")
    position = {t: i for i, t in enumerate(enumerate_terms(structure))}
    out = np.empty(L)
    for k in range(L):
        term = MultiIndex.of((k,) * order if diagonal else fixed + (k,))
        out[k] = theta[position[term]] / term.multiplicity()
    return out


def write_two_column_csv(path, header: tuple[str, str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for a, b in rows:
            w.writerow([repr(a) if isinstance(a, float) else a, repr(b) if isinstance(b, float) else b])
    return path
