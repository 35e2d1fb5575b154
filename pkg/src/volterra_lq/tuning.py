"""Selection of the dictionary scale factor ``R``.

The fit is run on the dictionary scaled by ``R`` with the fixed radius
``D**(1/q - 1)``. Large ``R`` leaves the constraint inactive and the fitted
norm well below the target; ``R`` is then lowered by bisection until the
fitted norm lands in ``[target - eps, target)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .solver import FitReport, QuadraticObjective, SolverOptions, default_radius, fit

log = logging.getLogger(__name__)


class DegenerateDataError(ValueError):
    """Outputs identically zero: every R gives the zero model."""


@dataclass(frozen=True)
class TuningOptions:
    epsilon: float | None = None     # band width; default 0.02 * target
    start: float = 1.0
    small_fraction: float = 0.5      # "norm << target" means below this fraction
    max_doublings: int = 60
    max_bisections: int = 40
    active_rtol: float = 1e-6        # norm within this of the target counts as "on the boundary"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class TuningResult:
    R: float
    achieved_norm: float
    target: float
    epsilon: float
    q: float
    exact: bool
    bisection_trace: tuple[tuple[float, float], ...]
    fit: FitReport

    @property
    def equivalent_radius(self) -> float:
        """Radius in the unscaled problem, ``R * D**(1/q - 1)``."""
        return self.R * self.target

    def unscaled_coefficients(self):
        """Coefficients for the original (unscaled) dictionary, ``R * theta``."""
        return self.R * self.fit.coefficients.values

    def to_dict(self) -> dict:
        return {"R": self.R, "achieved_norm": self.achieved_norm, "target": self.target,
                "epsilon": self.epsilon, "q": self.q, "exact": self.exact,
                "equivalent_radius": self.equivalent_radius,
                "bisection_trace": [list(p) for p in self.bisection_trace]}


def tune_R(objective: QuadraticObjective, q: float, epsilon: float | None = None,
           opts: SolverOptions | None = None,
           tuning: TuningOptions | None = None) -> TuningResult:
    """Bisect on ``R`` until ``||theta(R)||_q`` enters ``[target - eps, target)``.

    ``R`` starts at ``tuning.start`` and is doubled until the fitted norm is
    below ``small_fraction * target``. The search never goes below an ``R``
    whose fit already touches the boundary. If the band is not hit within
    ``max_bisections`` steps the upper bracket is returned with
    ``exact=False``.
    """
    tuning = tuning or TuningOptions()
    if objective.c == 0.0:
        raise DegenerateDataError("output is identically zero; R is not identifiable")
    target = default_radius(objective.D, q)
    eps = epsilon if epsilon is not None else tuning.epsilon
    eps = 0.02 * target if eps is None else float(eps)
    if not 0.0 < eps < target:
        raise ValueError(f"epsilon must lie in (0, {target}); got {eps}")

    trace: list[tuple[float, float]] = []
    fits: dict[float, FitReport] = {}
    lo_edge = target - eps
    hi_edge = target * (1.0 - tuning.active_rtol)

    def run(R: float) -> float:
        rep = fit(objective.scaled(R), q, target, opts)
        fits[R] = rep
        trace.append((R, rep.norm_q))
        log.debug("R=%.6g norm=%.6g target=%.6g", R, rep.norm_q, target)
        return rep.norm_q

    def in_band(norm: float) -> bool:
        return lo_edge <= norm < hi_edge

    def done(R: float, exact: bool) -> TuningResult:
        rep = fits[R]
        return TuningResult(R, rep.norm_q, target, eps, q, exact, tuple(trace), rep)

    # R_on: largest R whose fit reaches the band or beyond; R_in: smallest R below the band
    R_on = None
    R_in = None

    def probe(R: float) -> bool:
        nonlocal R_on, R_in
        norm = run(R)
        if norm >= lo_edge:
            R_on = R if R_on is None else max(R_on, R)
        else:
            R_in = R if R_in is None else min(R_in, R)
        return in_band(norm)

    # R is only accepted while decreasing; the doubling phase just brackets
    R = tuning.start
    for _ in range(tuning.max_doublings + 1):
        probe(R)
        if trace[-1][1] < tuning.small_fraction * target:
            break
        R *= 2.0
    else:
        log.warning("no R up to %.3g gives norm << target", trace[-1][0])
        return done(trace[-1][0], False)

    if R_on is None:
        R = R_in
        for _ in range(tuning.max_doublings):
            R /= 2.0
            if probe(R):
                return done(R, True)
            if R_on is not None:
                break
        else:
            return done(R_in, False)

    for _ in range(tuning.max_bisections):
        R = 0.5 * (R_on + R_in)
        if probe(R):
            return done(R, True)
    return done(R_in, False)
