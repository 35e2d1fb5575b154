"""Symmetric double-truncated Volterra dictionary.

A structure of degree ``P`` with per-order memory lengths ``L_1..L_P``
describes the regressors

    1,  u[n-k1],  u[n-k1] u[n-k2],  ...,   0 <= k1 <= k2 <= ... < L_p

one per lag multiset (kernels are symmetric, so permutations of the same
lags are the same regressor).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .data import DataError, Dataset

# Hard ceiling on the dictionary size; beyond this the regressor matrix cannot
# be held in memory anyway.
MAX_PARAMS = 10**9


class SizingError(ValueError):
    """Dictionary too large to enumerate or store."""


class MultiIndex(NamedTuple):
    """Canonical (sorted) lag multiset of one Volterra term. Order 0 is the constant."""

    order: int
    lags: tuple[int, ...]

    @classmethod
    def of(cls, lags: Sequence[int]) -> "MultiIndex":
        lags = tuple(sorted(int(k) for k in lags))
        return cls(len(lags), lags)

    def multiplicity(self) -> int:
        """Number of ordered lag tuples represented by this multiset."""
        out = 1
        for k in range(1, self.order + 1):
            out *= k
        for k in set(self.lags):
            for j in range(1, self.lags.count(k) + 1):
                out //= j
        return out

    def label(self) -> str:
        return ";".join(str(k) for k in self.lags)


@dataclass(frozen=True)
class VolterraStructure:
    """Degree and per-order memory lengths of a Volterra model."""

    degree: int
    memory_lengths: tuple[int, ...]
    include_constant: bool = True

    def __post_init__(self):
        lengths = tuple(int(v) for v in self.memory_lengths)
        object.__setattr__(self, "memory_lengths", lengths)
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if len(lengths) != self.degree:
            raise ValueError(
                f"need one memory length per order: degree {self.degree}, got {len(lengths)}")
        if any(v < 1 for v in lengths):
            raise ValueError("memory lengths must be >= 1")

    @classmethod
    def uniform(cls, degree: int, memory: int, include_constant: bool = True):
        return cls(degree, (memory,) * degree, include_constant)

    @property
    def tau_model(self) -> int:
        """Longest lag used by any term."""
        return max(self.memory_lengths) - 1

    def to_dict(self) -> dict:
        return {"degree": self.degree, "memory_lengths": list(self.memory_lengths),
                "include_constant": self.include_constant}

    @classmethod
    def from_dict(cls, d: dict) -> "VolterraStructure":
        return cls(int(d["degree"]), tuple(d["memory_lengths"]), bool(d.get("include_constant", True)))


def count_params(structure: VolterraStructure) -> int:
    """Number of dictionary terms: ``1 + sum_p C(L_p + p - 1, p)``.

    With equal memory lengths this is ``C(L + P, P)``.
    """
    total = int(structure.include_constant)
    for p, L in enumerate(structure.memory_lengths, start=1):
        total += comb(L + p - 1, p)
        if total > MAX_PARAMS:
            raise SizingError(f"dictionary exceeds {MAX_PARAMS} terms")
    return total


def enumerate_terms(structure: VolterraStructure) -> list[MultiIndex]:
    """All dictionary terms in canonical order.

    Constant first, then order 1, 2, ... and, within an order, lexicographic
    on the nondecreasing lag tuples.
    """
    count_params(structure)  # size guard
    terms = [MultiIndex(0, ())] if structure.include_constant else []
    for p, L in enumerate(structure.memory_lengths, start=1):
        terms.extend(MultiIndex(p, lags) for lags in combinations_with_replacement(range(L), p))
    return terms


def term_value(u: Sequence[float], n: int, lags: Sequence[int]) -> float:
    """Regressor value ``prod_j u[n - k_j]`` for one time index.

    Lags are canonicalized first so any permutation gives a bit-identical
    product.
    """
    out = 1.0
    for k in sorted(lags):
        out *= float(u[n - k])
    return out


def _resolve_tau(data: Dataset, structure: VolterraStructure, tau: int | None) -> int:
    if tau is None:
        tau = data.tau if data.tau is not None else structure.tau_model
    if tau < structure.tau_model:
        raise DataError(
            f"memory bound tau={tau} shorter than the model memory {structure.tau_model}")
    if data.N <= tau:
        raise DataError(f"record of length {data.N} has no samples after tau={tau}")
    return tau


def lag_matrix(u: np.ndarray, tau: int, n_lags: int) -> np.ndarray:
    """Column ``k`` holds ``u[n - k]`` for ``n = tau .. N-1``."""
    N = u.size
    return np.stack([u[tau - k:N - k] for k in range(n_lags)], axis=1)


def build_regressors(data: Dataset, structure: VolterraStructure,
                     tau: int | None = None) -> np.ndarray:
    """Regressor matrix ``S`` with one row per usable time index.

    Rows correspond to ``n = tau .. N-1`` (zero-based), i.e. the first
    ``tau`` samples only serve as history. Columns follow
    :func:`enumerate_terms`.
    """
    tau = _resolve_tau(data, structure, tau)
    U = lag_matrix(data.u, tau, structure.tau_model + 1)
    rows = U.shape[0]
    blocks = []
    if structure.include_constant:
        blocks.append(np.ones((rows, 1)))
    for p, L in enumerate(structure.memory_lengths, start=1):
        idx = np.array(list(combinations_with_replacement(range(L), p)), dtype=np.intp)
        # multiply factors in ascending-lag order, same as term_value
        block = U[:, idx[:, 0]].copy()
        for j in range(1, p):
            block *= U[:, idx[:, j]]
        blocks.append(block)
    return np.hstack(blocks)


def predict(coeffs, structure: VolterraStructure, data: Dataset,
            tau: int | None = None) -> np.ndarray:
    """Model output ``S @ theta`` over the usable samples (length ``N - tau``)."""
    theta = np.asarray(getattr(coeffs, "values", coeffs), dtype=float)
    D = count_params(structure)
    if theta.shape != (D,):
        raise ValueError(f"coefficient vector has shape {theta.shape}, structure needs ({D},)")
    return build_regressors(data, structure, tau) @ theta


def write_coefficients(theta, structure: VolterraStructure, path) -> Path:
    """Write coefficients as CSV rows ``order,lags,value`` (lags joined by ``;``)."""
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    terms = enumerate_terms(structure)
    if theta.size != len(terms):
        raise ValueError("coefficient count does not match structure")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["order", "lags", "value"])
        for term, v in zip(terms, theta.tolist()):
            w.writerow([term.order, term.label(), repr(v)])
    return path


def read_coefficients(path, structure: VolterraStructure) -> np.ndarray:
    """Inverse of :func:`write_coefficients`; rows may come in any order."""
    position = {t: i for i, t in enumerate(enumerate_terms(structure))}
    theta = np.zeros(len(position))
    seen = set()
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            lags = tuple(int(k) for k in row["lags"].split(";") if k != "")
            term = MultiIndex.of(lags)
            if term.order != int(row["order"]) or term not in position:
                raise DataError(f"{path}:{lineno}: term {row['order']}/{row['lags']} not in structure")
            if term in seen:
                raise DataError(f"{path}:{lineno}: duplicate term {row['lags']}")
            seen.add(term)
            theta[position[term]] = float(row["value"])
    return theta
