"""Upper bounds on the excess risk ``E Q(theta_hat) - Q(theta*)``.

All bounds share the shape ``C * sqrt(N)/(N - tau) * sqrt((tau + 1) ln D)``
with ``C = 32 sqrt(e) (s M sigma + 2 (s M)^2)``; they differ in the scale
``s`` applied to the magnitude bound ``M``:

* ``s = 1``                      -- the base bound,
* ``s = R``                      -- dictionary scaled by ``R``,
* ``s = D**(1-1/q)``             -- an l_q constraint justified only through
                                    the l_1 one (``K**(1-1/q)`` if the true
                                    coefficient vector is K-sparse).

The infinite-memory case (slower decay by ``sqrt(ln N)`` plus an extra
``N**-c`` term) is not covered.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from math import e, log, sqrt

import numpy as np

FORMULA = "32*sqrt(e)*(s*M*sigma + 2*(s*M)**2) * sqrt(N)/(N - tau) * sqrt((tau + 1)*ln(D))"


class BoundDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundParams:
    N: int
    tau: int
    D: int
    M: float
    sigma: float
    R: float = 1.0
    K: int | None = None

    def __post_init__(self):
        if not self.N > self.tau >= 0:
            raise BoundDomainError(f"need N > tau >= 0 (N={self.N}, tau={self.tau})")
        if self.D <= 2:
            raise BoundDomainError(f"bound holds for D > 2 only (D={self.D})")
        if self.M < 0 or self.sigma < 0:
            raise BoundDomainError("M and sigma must be nonnegative")
        if self.R <= 0:
            raise BoundDomainError("R must be positive")
        if self.K is not None and not 1 <= self.K <= self.D:
            raise BoundDomainError(f"sparsity K must lie in [1, D] (K={self.K})")

    def to_dict(self) -> dict:
        return asdict(self)


def _bound(p: BoundParams, scale: float) -> float:
    sM = scale * p.M
    C = 32.0 * sqrt(e) * (sM * p.sigma + 2.0 * sM * sM)
    return C * sqrt(p.N) / (p.N - p.tau) * sqrt((p.tau + 1) * log(p.D))


def bound_theorem1(p: BoundParams) -> float:
    """Base bound (``R`` in ``p`` is ignored)."""
    return _bound(p, 1.0)


def bound_scaled(p: BoundParams) -> float:
    """Bound for a dictionary scaled by ``p.R``: ``M`` is replaced by ``R M``."""
    return _bound(p, p.R)


def bound_q_penalty(p: BoundParams, q: float, sparse: bool = False) -> float:
    """Bound with ``M`` inflated by ``D**(1-1/q)`` (``K**(1-1/q)`` when ``sparse``)."""
    if q < 1:
        raise BoundDomainError("q must be >= 1")
    if sparse and p.K is None:
        raise BoundDomainError("sparse variant needs K")
    base = p.K if sparse else p.D
    return _bound(p, base ** (1.0 - 1.0 / q))


def estimate_M(y, S) -> float:
    """``max(max|y|, max|S|)`` as a stand-in for the unknown magnitude bound."""
    return float(max(np.max(np.abs(y), initial=0.0), np.max(np.abs(S), initial=0.0)))


def estimate_sigma(S, y, holdout: float = 0.3) -> tuple[float, str]:
    """Noise level from an unconstrained fit on the leading rows, scored on the rest.

    Returns the estimate and a description of the method for the report.
    """
    S = np.asarray(S, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    n_fit = int(round(n * (1.0 - holdout)))
    if n_fit < 1 or n_fit >= n:
        raise ValueError("holdout split leaves an empty part")
    theta, *_ = np.linalg.lstsq(S[:n_fit], y[:n_fit], rcond=None)
    r = S[n_fit:] @ theta - y[n_fit:]
    method = f"rms residual of min-norm least squares on first {n_fit} rows, scored on last {n - n_fit}"
    return float(np.sqrt(np.mean(r * r))), method


def bound_report(p: BoundParams, q: float | None = None, which: str = "theorem1") -> dict:
    """``{formula, params, value}`` for the CLI."""
    if which == "theorem1":
        value, scale = bound_theorem1(p), "1"
    elif which == "scaled":
        value, scale = bound_scaled(p), "R"
    elif which == "q_penalty":
        if q is None:
            raise BoundDomainError("q_penalty bound needs q")
        value = bound_q_penalty(p, q, sparse=p.K is not None)
        scale = "K**(1-1/q)" if p.K is not None else "D**(1-1/q)"
    else:
        raise BoundDomainError(f"unknown bound {which!r}")
    params = p.to_dict()
    if q is not None:
        params["q"] = q
    return {"formula": FORMULA.replace("s*", f"({scale})*"), "bound": which,
            "params": params, "value": value}
