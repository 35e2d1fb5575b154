"""l_q-ball constrained least squares.

Solves ``min_theta Q(theta)  s.t.  ||theta||_q <= r`` where ``Q`` is the mean
squared residual of a linear-in-parameters model. The default path is
Frank-Wolfe (conditional gradient) with exact line search: its linear
minimization oracle has a closed form for every ``q >= 1``, so no projection
onto an l_q ball is ever needed. A projected-gradient path is kept for
``q = 1`` as a cross-check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FEAS_RTOL = 1e-9

PATHS = ("frank_wolfe", "projected_gradient")


def lq_norm(x, q: float) -> float:
    """``||x||_q`` computed on the max-scaled vector (no overflow for large q)."""
    x = np.abs(np.asarray(x, dtype=float))
    if q == np.inf:
        return float(x.max(initial=0.0))
    m = x.max(initial=0.0)
    if m == 0.0:
        return 0.0
    if q == 1:
        return float(x.sum())
    if q == 2:
        return float(np.linalg.norm(x))
    return float(m * np.sum((x / m) ** q) ** (1.0 / q))


def default_radius(D: int, q: float, R: float = 1.0) -> float:
    """Ball radius ``R * D**(1/q - 1)``."""
    return R * D ** (1.0 / q - 1.0)


@dataclass(frozen=True)
class CoefficientVector:
    values: np.ndarray
    q: float
    radius: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def norm_q(self) -> float:
        return lq_norm(self.values, self.q)

    def is_feasible(self, rtol: float = FEAS_RTOL) -> bool:
        return self.norm_q <= self.radius * (1.0 + rtol)


class QuadraticObjective:
    """Empirical criterion ``Q(theta) = mean((S theta - y)**2)``.

    When there are more rows than columns the normal-equation terms
    ``A = S'S/n``, ``b = 2 S'y/n`` and ``c = y'y/n`` are cached, so that
    ``Q(theta) = theta'A theta - theta'b + c``; otherwise products go through
    ``S`` directly.
    """

    def __init__(self, S, y, cache: bool | None = None):
        S = np.asarray(S, dtype=float)
        y = np.asarray(y, dtype=float)
        if S.ndim != 2 or y.ndim != 1 or S.shape[0] != y.size:
            raise ValueError(f"incompatible shapes S{S.shape}, y{y.shape}")
        if S.shape[0] < 1 or S.shape[1] < 1:
            raise ValueError("objective needs at least one row and one column")
        self.S = S
        self.y = y
        self.n, self.D = S.shape
        self.c = float(y @ y) / self.n
        self.cached = self.n > self.D if cache is None else bool(cache)
        if self.cached:
            self.A = (S.T @ S) / self.n
            self.b = 2.0 * (S.T @ y) / self.n
        else:
            self.A = None
            self.b = None

    @classmethod
    def from_data(cls, data, structure, tau=None, cache=None) -> "QuadraticObjective":
        from .dictionary import build_regressors, _resolve_tau
        tau = _resolve_tau(data, structure, tau)
        S = build_regressors(data, structure, tau)
        return cls(S, data.y[tau:], cache)

    def scaled(self, R: float) -> "QuadraticObjective":
        """Same data with every dictionary column multiplied by ``R``."""
        return QuadraticObjective(R * self.S, self.y, self.cached)

    def residual(self, theta) -> np.ndarray:
        return self.S @ self._check(theta) - self.y

    def value(self, theta) -> float:
        r = self.residual(theta)
        return float(r @ r) / self.n

    def gradient(self, theta) -> np.ndarray:
        return (2.0 / self.n) * (self.S.T @ self.residual(theta))

    def expanded_value(self, theta) -> float:
        """``theta'A theta - theta'b + c`` (requires the cached terms)."""
        theta = self._check(theta)
        if not self.cached:
            raise RuntimeError("expanded form needs the cached normal equations")
        return float(theta @ (self.A @ theta) - theta @ self.b + self.c)

    def lipschitz(self) -> float:
        """Lipschitz constant of the gradient, ``2 * lambda_max(S'S/n)``."""
        if self.cached:
            return 2.0 * float(np.linalg.eigvalsh(self.A)[-1])
        return 2.0 * float(np.linalg.norm(self.S, 2) ** 2) / self.n

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.D,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.D},)")
        return theta


def objective_value(objective: QuadraticObjective, theta) -> float:
    return objective.value(theta)


def gradient(objective: QuadraticObjective, theta) -> np.ndarray:
    return objective.gradient(theta)


def lmo(g, q: float, r: float) -> np.ndarray:
    """Minimizer of ``<g, s>`` over the ball ``||s||_q <= r``.

    For ``q = 1`` this is the signed vertex at the largest ``|g_i|`` (lowest
    index on ties); for ``q > 1`` it is the dual-norm direction
    ``-r sign(g) |g|**(q*-1) / ||g||_{q*}**(q*-1)`` with ``q* = q/(q-1)``.
    A zero gradient returns the zero vector.
    """
    g = np.asarray(g, dtype=float)
    if q < 1:
        raise ValueError("q must be >= 1")
    if r <= 0:
        raise ValueError("radius must be positive")
    s = np.zeros_like(g)
    gmax = np.abs(g).max(initial=0.0)
    if gmax == 0.0:
        return s
    if q == 1:
        i = int(np.argmax(np.abs(g)))
        s[i] = -r * np.sign(g[i])
        return s
    qs = q / (q - 1.0)
    a = np.abs(g) / gmax
    w = a if q == 2 else a ** (qs - 1.0)
    # ||a||_{q*}^{q*-1} = (sum a^{q*})^{1/q}
    denom = np.sum(a * w) ** (1.0 / q)
    return -r * np.sign(g) * w / denom


def project_l1(x, r: float) -> np.ndarray:
    """Euclidean projection onto ``{||theta||_1 <= r}`` (sort-and-threshold)."""
    x = np.asarray(x, dtype=float)
    if r <= 0:
        raise ValueError("radius must be positive")
    a = np.abs(x)
    if a.sum() <= r:
        return x.copy()
    mu = np.sort(a)[::-1]
    cssv = np.cumsum(mu) - r
    ind = np.arange(1, a.size + 1)
    rho = np.nonzero(mu * ind > cssv)[0][-1]
    lam = cssv[rho] / (rho + 1.0)
    return np.sign(x) * np.maximum(a - lam, 0.0)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by the fit and tuning routines.

    ``gap_tol`` and ``max_iters`` left as ``None`` resolve per problem to
    ``1e-8 * Q(0)`` and ``50 * D``. ``away_steps`` switches ``q = 1`` fits to
    the away-step variant, which converges linearly on the cross-polytope
    where plain Frank-Wolfe zig-zags once the optimum sits on a face. Off by
    default: the plain iteration is the reference method.
    """

    gap_tol: float | None = None
    max_iters: int | None = None
    path: str = "frank_wolfe"
    refresh_every: int = 256
    away_steps: bool = False

    def __post_init__(self):
        if self.path not in PATHS:
            raise ValueError(f"unknown solver path {self.path!r}; expected one of {PATHS}")

    def to_dict(self) -> dict:
        return {"gap_tol": self.gap_tol, "max_iters": self.max_iters, "path": self.path,
                "away_steps": self.away_steps}


@dataclass(frozen=True)
class FitReport:
    coefficients: CoefficientVector
    objective: float
    gap: float
    iterations: int
    converged: bool
    gap_tol: float
    path: str
    trace: np.ndarray = field(repr=False)

    @property
    def norm_q(self) -> float:
        return self.coefficients.norm_q

    @property
    def norm_1(self) -> float:
        return lq_norm(self.coefficients.values, 1)

    def to_dict(self) -> dict:
        return {
            "q": self.coefficients.q,
            "radius": self.coefficients.radius,
            "objective": self.objective,
            "gap": self.gap,
            "gap_tol": self.gap_tol,
            "iterations": self.iterations,
            "converged": self.converged,
            "norm_q": self.norm_q,
            "norm_1": self.norm_1,
            "path": self.path,
        }


def fit(objective: QuadraticObjective, q: float, r: float,
        opts: SolverOptions | None = None) -> FitReport:
    """Minimize ``Q`` over the l_q ball of radius ``r`` starting from zero.

    Terminates once the Frank-Wolfe duality gap ``<grad, theta - s>`` drops
    to ``gap_tol`` or after ``max_iters`` iterations; the latter is reported
    as ``converged=False`` rather than raised.
    """
    opts = opts or SolverOptions()
    if q < 1:
        raise ValueError("q must be >= 1")
    if r <= 0:
        raise ValueError("radius must be positive")
    gap_tol = 1e-8 * objective.c if opts.gap_tol is None else float(opts.gap_tol)
    max_iters = 50 * objective.D if opts.max_iters is None else int(opts.max_iters)
    if opts.path == "projected_gradient":
        if q != 1:
            raise ValueError("projected-gradient path is only available for q = 1")
        theta, trace, k, gap = _projected_gradient(objective, r, gap_tol, max_iters)
    elif q == 1 and opts.away_steps:
        theta, trace, k, gap = _fw_away_l1(objective, r, gap_tol, max_iters, opts.refresh_every)
    elif objective.cached:
        theta, trace, k, gap = _fw_gram(objective, q, r, gap_tol, max_iters, opts.refresh_every)
    else:
        theta, trace, k, gap = _fw_matrix_free(objective, q, r, gap_tol, max_iters)

    gap = max(gap, 0.0)  # nonnegative in exact arithmetic
    nq = lq_norm(theta, q)
    if nq > r:
        # rounding only; iterates are convex combinations of ball points
        theta *= r / nq
    converged = gap <= gap_tol
    if not converged:
        log.info("fit stopped at iteration cap %d with gap %.3g > %.3g", max_iters, gap, gap_tol)
    return FitReport(CoefficientVector(theta, q, r), objective.value(theta), float(gap),
                     k, bool(converged), gap_tol, opts.path, np.array(trace).reshape(-1, 2))


def _step(gap: float, curv: float) -> float:
    # exact minimizer of Q(theta + t d) on [0, 1]; Sd = 0 forces gap = 0
    if curv <= 0.0:
        return 1.0 if gap > 0.0 else 0.0
    return min(1.0, gap / (2.0 * curv))


def _vertex(s: np.ndarray, q: float):
    """Index and value of the single nonzero of an l_1 LMO output."""
    if q != 1:
        return None
    nz = np.flatnonzero(s)
    return (int(nz[0]), float(s[nz[0]])) if nz.size == 1 else None


def _fw_gram(obj: QuadraticObjective, q, r, gap_tol, max_iters, refresh_every):
    A, b, c = obj.A, obj.b, obj.c
    theta = np.zeros(obj.D)
    At = np.zeros(obj.D)
    f = c
    trace = []
    k = 0
    while True:
        g = 2.0 * At - b
        s = lmo(g, q, r)
        gap = float(g @ (theta - s))
        trace.append((f, gap))
        if gap <= gap_tol or k >= max_iters:
            return theta, trace, k, gap
        v = _vertex(s, q)
        As = A[:, v[0]] * v[1] if v is not None else A @ s
        d = s - theta
        Ad = As - At
        gamma = _step(gap, float(d @ Ad))
        theta += gamma * d
        At += gamma * Ad
        k += 1
        if k % refresh_every == 0:
            At = A @ theta
        f = float(theta @ At - theta @ b + c)


def _fw_matrix_free(obj: QuadraticObjective, q, r, gap_tol, max_iters):
    S, y, n = obj.S, obj.y, obj.n
    theta = np.zeros(obj.D)
    St = np.zeros(n)
    trace = []
    k = 0
    while True:
        res = St - y
        f = float(res @ res) / n
        g = (2.0 / n) * (S.T @ res)
        s = lmo(g, q, r)
        gap = float(g @ (theta - s))
        trace.append((f, gap))
        if gap <= gap_tol or k >= max_iters:
            return theta, trace, k, gap
        v = _vertex(s, q)
        Ss = S[:, v[0]] * v[1] if v is not None else S @ s
        d = s - theta
        Sd = Ss - St
        gamma = _step(gap, float(Sd @ Sd) / n)
        theta += gamma * d
        St += gamma * Sd
        k += 1


def _fw_away_l1(obj: QuadraticObjective, r, gap_tol, max_iters, refresh_every):
    """Away-step Frank-Wolfe on the l_1 ball.

    Atoms are the vertices ``+-r e_i`` plus the origin (the start point).
    ``w[0, i]`` and ``w[1, i]`` weight ``+r e_i`` and ``-r e_i``; ``w0`` the
    origin. Works on ``A theta`` when the normal equations are cached and on
    ``S theta`` otherwise.
    """
    D, n = obj.D, obj.n
    cached = obj.cached
    M = obj.A if cached else obj.S
    theta = np.zeros(D)
    P = np.zeros(D if cached else n)  # A theta or S theta
    w = np.zeros((2, D))
    w0 = 1.0
    sign = np.array([1.0, -1.0])
    trace = []
    k = 0

    def image(i, sgn):
        return (sgn * r) * M[:, i]

    while True:
        if cached:
            g = 2.0 * P - obj.b
            f = float(theta @ P - theta @ obj.b + obj.c)
        else:
            res = P - obj.y
            g = (2.0 / n) * (obj.S.T @ res)
            f = float(res @ res) / n
        s = lmo(g, 1, r)
        gap = float(g @ (theta - s))
        trace.append((f, gap))
        if gap <= gap_tol or k >= max_iters:
            return theta, trace, k, gap

        # away atom: the active one with the largest <g, v>
        score = np.where(w > 0.0, r * sign[:, None] * g, -np.inf)
        j, i = np.unravel_index(int(np.argmax(score)), score.shape)
        best = score[j, i]
        if w0 > 0.0 and best < 0.0:
            j, i, best = -1, -1, 0.0
        away_gap = best - float(g @ theta)

        if away_gap > gap:
            wa = w0 if j < 0 else w[j, i]
            vimg = 0.0 if j < 0 else image(i, sign[j])
            d = theta.copy()
            if j >= 0:
                d[i] -= sign[j] * r
            Pd = P - vimg
            gmax = wa / (1.0 - wa) if wa < 1.0 else np.inf
            curv = float(d @ Pd) if cached else float(Pd @ Pd) / n
            gamma = min(gmax, away_gap / (2.0 * curv)) if curv > 0.0 else gmax
            w *= 1.0 + gamma
            w0 *= 1.0 + gamma
            if gamma == gmax:
                if j < 0:
                    w0 = 0.0
                else:
                    w[j, i] = 0.0
            elif j < 0:
                w0 -= gamma
            else:
                w[j, i] -= gamma
        else:
            i = int(np.flatnonzero(s)[0])
            j = 0 if s[i] > 0 else 1
            d = s - theta
            Pd = image(i, sign[j]) - P
            curv = float(d @ Pd) if cached else float(Pd @ Pd) / n
            gamma = _step(gap, curv)
            w *= 1.0 - gamma
            w0 *= 1.0 - gamma
            w[j, i] += gamma
        theta += gamma * d
        P += gamma * Pd
        k += 1
        if k % refresh_every == 0:
            theta = r * (w[0] - w[1])
            P = M @ theta


def _projected_gradient(obj: QuadraticObjective, r, gap_tol, max_iters):
    step = 1.0 / obj.lipschitz()
    theta = np.zeros(obj.D)
    trace = []
    k = 0
    while True:
        g = obj.gradient(theta)
        s = lmo(g, 1, r)
        gap = float(g @ (theta - s))
        trace.append((obj.value(theta), gap))
        if gap <= gap_tol or k >= max_iters:
            return theta, trace, k, gap
        theta = project_l1(theta - step * g, r)
        k += 1


def fit_unconstrained(objective: QuadraticObjective) -> np.ndarray:
    """Minimum-norm least-squares solution (the unconstrained baseline)."""
    theta, *_ = np.linalg.lstsq(objective.S, objective.y, rcond=None)
    return theta
