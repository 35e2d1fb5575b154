import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import (l1_qp_enumeration, l2_trust_region, mesh_2d, normal_terms,
                     project_l1_enumeration, random_ball_points)
from volterra_lq.solver import (CoefficientVector, QuadraticObjective, SolverOptions, default_radius,
                                fit, fit_unconstrained, gradient, lmo, lq_norm, objective_value,
                                project_l1)

seeds = st.integers(0, 2**32 - 1)


def random_problem(seed, n=30, D=5, scale=2.0, noise=0.1):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((n, D))
    theta = scale * rng.standard_normal(D)
    return S, S @ theta + noise * rng.standard_normal(n)


# --- linear minimization oracle -------------------------------------------

def test_lmo_l2_example():
    np.testing.assert_allclose(lmo([3.0, 4.0], 2, 1.0), [-0.6, -0.8], rtol=0, atol=1e-15)


def test_lmo_l2_example_against_circle_grid():
    t = np.linspace(0, 2 * np.pi, 200_001)
    pts = np.stack([np.cos(t), np.sin(t)], axis=1)
    best = pts[np.argmin(pts @ [3.0, 4.0])]
    np.testing.assert_allclose(lmo([3.0, 4.0], 2, 1.0), best, atol=1e-4)


def test_lmo_l1_example():
    assert np.array_equal(lmo([1.0, -2.0], 1, 1.0), [0.0, 1.0])


def test_lmo_l1_ties_lowest_index():
    assert np.array_equal(lmo([2.0, -2.0, 1.0], 1, 0.5), [-0.5, 0.0, 0.0])


def test_lmo_l15_example():
    s = lmo([1.0, 1.0], 1.5, 1.0)
    np.testing.assert_allclose(s, [-2 ** (-2 / 3)] * 2, rtol=1e-14)
    assert abs(lq_norm(s, 1.5) - 1.0) < 1e-14
    # mesh of the l_1.5 sphere
    t = np.linspace(0, 2 * np.pi, 400_001)
    c, si = np.cos(t), np.sin(t)
    pts = np.stack([np.sign(c) * np.abs(c) ** (4 / 3), np.sign(si) * np.abs(si) ** (4 / 3)], axis=1)
    vals = pts.sum(axis=1)
    assert s.sum() <= vals.min() + 1e-12
    np.testing.assert_allclose(pts[np.argmin(vals)], s, atol=1e-4)


def test_lmo_zero_gradient():
    assert np.array_equal(lmo(np.zeros(4), 1.5, 2.0), np.zeros(4))


@pytest.mark.parametrize("q,r", [(0.5, 1.0), (2.0, 0.0)])
def test_lmo_rejects_bad_args(q, r):
    with pytest.raises(ValueError):
        lmo([1.0], q, r)


@settings(max_examples=200, deadline=None)
@given(seeds, st.sampled_from([1.0, 1.25, 1.5, 2.0, 3.0]), st.integers(1, 6))
def test_lmo_on_sphere_and_optimal(seed, q, D):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(D) * 10.0 ** rng.uniform(-3, 3)
    r = rng.uniform(0.1, 3)
    s = lmo(g, q, r)
    assert abs(lq_norm(s, q) - r) <= 1e-12 * r
    # Hoelder: min <g, s> = -r ||g||_{q*}
    qs = np.inf if q == 1 else q / (q - 1)
    assert np.isclose(g @ s, -r * np.linalg.norm(g, qs), rtol=1e-12)
    X = random_ball_points(rng, D, q, r, 2000)
    assert g @ s <= (X @ g).min() + 1e-12 * abs(g @ s)


def test_lmo_extreme_scale_no_overflow():
    s = lmo(np.array([1e300, -1e300]), 3.0, 1.0)
    assert np.all(np.isfinite(s))
    assert abs(lq_norm(s, 3.0) - 1.0) < 1e-14


# --- l1 projection ---------------------------------------------------------

@pytest.mark.parametrize("x,r,expected", [([1.0, 0.5], 1.0, [0.75, 0.25]),
                                          ([0.2, 0.1], 1.0, [0.2, 0.1]),
                                          ([3.0, 0.0], 1.0, [1.0, 0.0]),
                                          ([-3.0, 1.0], 1.0, [-1.0, 0.0])])
def test_project_l1_examples(x, r, expected):
    np.testing.assert_allclose(project_l1(x, r), expected, atol=1e-15)


def test_project_l1_example_grid():
    g = np.linspace(-1, 1, 2001)
    X, Y = np.meshgrid(g, g)
    ok = np.abs(X) + np.abs(Y) <= 1 + 1e-12
    d = (X - 1.0) ** 2 + (Y - 0.5) ** 2
    d[~ok] = np.inf
    i = np.unravel_index(np.argmin(d), d.shape)
    np.testing.assert_allclose([X[i], Y[i]], [0.75, 0.25], atol=1e-3)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 6))
def test_project_l1_matches_enumeration(seed, D):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(D) * rng.uniform(0.1, 3)
    r = rng.uniform(0.05, 2)
    np.testing.assert_allclose(project_l1(x, r), project_l1_enumeration(x, r), atol=1e-9)


def test_project_l1_interior_unchanged():
    x = np.array([0.1, -0.2])
    p = project_l1(x, 1.0)
    assert np.array_equal(p, x) and p is not x


# --- objective ---------------------------------------------------------------

def test_objective_trivial_values():
    S = np.eye(4)
    y = np.full(4, 2.0)
    obj = QuadraticObjective(S, y)
    assert objective_value(obj, np.zeros(4)) == 4.0
    assert objective_value(obj, y) == 0.0


def test_objective_dimension_mismatch():
    obj = QuadraticObjective(np.ones((5, 2)), np.ones(5))
    with pytest.raises(ValueError):
        obj.value(np.zeros(3))
    with pytest.raises(ValueError):
        QuadraticObjective(np.ones((5, 2)), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_expanded_form_and_nonnegativity(seed):
    S, y = random_problem(seed, n=40, D=6)
    obj = QuadraticObjective(S, y)
    assert obj.cached
    rng = np.random.default_rng(seed + 1)
    for _ in range(5):
        th = rng.standard_normal(6) * 3
        v = obj.value(th)
        assert v >= 0
        assert abs(obj.expanded_value(th) - v) <= 1e-10 * max(v, 1e-300) + 1e-13 * obj.c


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_gradient_central_differences(seed):
    S, y = random_problem(seed, n=25, D=4)
    obj = QuadraticObjective(S, y)
    th = np.random.default_rng(seed + 7).standard_normal(4)
    g = gradient(obj, th)
    h = 1e-5
    fd = np.array([(obj.value(th + h * e) - obj.value(th - h * e)) / (2 * h) for e in np.eye(4)])
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())


def test_cached_only_when_overdetermined():
    assert not QuadraticObjective(np.ones((3, 5)), np.ones(3)).cached
    with pytest.raises(RuntimeError):
        QuadraticObjective(np.ones((3, 5)), np.ones(3)).expanded_value(np.zeros(5))


# --- fit -------------------------------------------------------------------

TIGHT = SolverOptions(gap_tol=1e-15, max_iters=200_000)
AWAY = SolverOptions(gap_tol=1e-12, max_iters=100_000, away_steps=True)


def test_fit_recovers_least_squares_when_inactive():
    n = 50
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, 2)))
    S = np.sqrt(n) * Q
    y = S @ [0.3, 0.2]
    rep = fit(QuadraticObjective(S, y), 2, 10.0, TIGHT)
    np.testing.assert_allclose(rep.coefficients.values, [0.3, 0.2], atol=1e-6)
    rep1 = fit(QuadraticObjective(S, y), 1, 10.0, TIGHT)
    np.testing.assert_allclose(rep1.coefficients.values, [0.3, 0.2], atol=1e-6)


def test_fit_active_l1_on_boundary():
    rng = np.random.default_rng(2)
    S = rng.standard_normal((60, 4))
    theta_star = np.array([1.2, -0.5, 0.3, 0.0])
    rep = fit(QuadraticObjective(S, S @ theta_star), 1, 1.0, TIGHT)
    assert abs(rep.norm_1 - 1.0) <= 1e-6
    assert rep.converged


def test_fit_zero_target():
    rep = fit(QuadraticObjective(np.random.default_rng(0).standard_normal((20, 3)), np.zeros(20)), 1.5, 1.0)
    assert np.array_equal(rep.coefficients.values, np.zeros(3))
    assert rep.objective == 0.0 and rep.converged and rep.iterations == 0


@pytest.mark.parametrize("bad", [dict(q=0.9, r=1.0), dict(q=1.0, r=-1.0)])
def test_fit_rejects_bad_args(bad):
    with pytest.raises(ValueError):
        fit(QuadraticObjective(np.eye(2), np.ones(2)), **bad)


def test_projected_gradient_q1_only():
    obj = QuadraticObjective(np.eye(2), np.ones(2))
    with pytest.raises(ValueError):
        fit(obj, 2, 1.0, SolverOptions(path="projected_gradient"))
    with pytest.raises(ValueError):
        SolverOptions(path="newton")


def test_defaults_resolved_from_problem():
    S, y = random_problem(5, n=30, D=4)
    obj = QuadraticObjective(S, y)
    rep = fit(obj, 1, 0.5)
    assert rep.gap_tol == pytest.approx(1e-8 * obj.value(np.zeros(4)), rel=1e-12)
    assert rep.iterations <= 200


def test_iteration_cap_flags_nonconvergence():
    S, y = random_problem(3, n=30, D=8)
    rep = fit(QuadraticObjective(S, y), 1.5, 1.0, SolverOptions(gap_tol=0.0, max_iters=3))
    assert rep.iterations == 3 and not rep.converged
    assert rep.coefficients.is_feasible()


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from([1.0, 1.5, 2.0, 3.0]), st.booleans())
def test_fit_invariants(seed, q, cached):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(2, 9))
    S, y = random_problem(seed, n=int(rng.integers(D + 1, 40)), D=D)
    r = rng.uniform(0.1, 3)
    rep = fit(QuadraticObjective(S, y, cache=cached), q, r, SolverOptions(max_iters=2000))
    assert rep.coefficients.is_feasible()
    assert rep.gap >= 0
    f = rep.trace[:, 0]
    assert np.all(np.diff(f) <= 1e-12 * f[0])
    assert np.all(rep.trace[:, 1] >= -1e-12 * f[0])
    assert rep.trace.shape[0] == rep.iterations + 1
    assert rep.objective == pytest.approx(QuadraticObjective(S, y).value(rep.coefficients.values))


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 15), st.booleans())
def test_l1_sparsity_at_most_k_after_k_iterations(seed, k, away):
    S, y = random_problem(seed, n=40, D=25)
    for cached in (True, False):
        opts = SolverOptions(gap_tol=0.0, max_iters=k, away_steps=away)
        rep = fit(QuadraticObjective(S, y, cache=cached), 1, 1.0, opts)
        assert np.count_nonzero(rep.coefficients.values) <= rep.iterations <= k


@settings(max_examples=40, deadline=None)
@given(seeds, st.booleans())
def test_away_steps_converge_and_match_oracle(seed, cached):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(2, 7))
    S, y = random_problem(seed, n=int(rng.integers(D + 2, 40)), D=D)
    r = rng.uniform(0.1, 2)
    rep = fit(QuadraticObjective(S, y, cache=cached), 1, r, AWAY)
    assert rep.converged and rep.coefficients.is_feasible()
    f = rep.trace[:, 0]
    assert np.all(np.diff(f) <= 1e-12 * f[0])
    f_star = l1_qp_enumeration(*normal_terms(S, y), r)[1]
    assert f_star - 1e-10 <= rep.objective <= f_star + rep.gap + 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([1.0, 1.5, 2.0]))
def test_gram_and_matrix_free_agree(seed, q):
    S, y = random_problem(seed, n=40, D=6)
    opts = SolverOptions(gap_tol=1e-13, max_iters=100_000)
    a = fit(QuadraticObjective(S, y, cache=True), q, 0.8, opts)
    b = fit(QuadraticObjective(S, y, cache=False), q, 0.8, opts)
    assert abs(a.objective - b.objective) <= 1e-9 * a.objective


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_projected_gradient_cross_check(seed):
    S, y = random_problem(seed, n=30, D=5)
    obj = QuadraticObjective(S, y)
    fw = fit(obj, 1, 1.0, AWAY)
    pg = fit(obj, 1, 1.0, SolverOptions(gap_tol=1e-12, max_iters=100_000, path="projected_gradient"))
    assert fw.converged and pg.converged
    assert abs(fw.objective - pg.objective) <= 1e-9 * obj.c
    assert pg.coefficients.is_feasible()


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from([1.0, 2.0]))
def test_fw_certificate_against_exact_oracles(seed, q):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(2, 6))
    S, y = random_problem(seed, n=int(rng.integers(D + 2, 50)), D=D)
    r = rng.uniform(0.2, 2)
    rep = fit(QuadraticObjective(S, y), q, r, SolverOptions(max_iters=100_000))
    A, b, c = normal_terms(S, y)
    f_star = (l1_qp_enumeration if q == 1 else l2_trust_region)(A, b, c, r)[1]
    assert rep.objective - f_star <= max(rep.gap, 1e-12) + 1e-12
    assert rep.objective >= f_star - 1e-10


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
def test_fw_certificate_against_2d_mesh(q):
    rng = np.random.default_rng(int(10 * q))
    for _ in range(3):
        S, y = random_problem(int(rng.integers(1 << 30)), n=12, D=2)
        r = rng.uniform(0.2, 1.5)
        rep = fit(QuadraticObjective(S, y), q, r, SolverOptions(max_iters=100_000))
        f_mesh, err = mesh_2d(*normal_terms(S, y), q, r)
        assert err <= 1e-7
        assert abs(rep.objective - f_mesh) <= max(1e-6, rep.gap) + err


# --- norms ---------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(seeds, st.sampled_from([1.5, 2.0, 3.0]), st.integers(1, 50))
def test_norm_inequality(seed, q, D):
    x = np.random.default_rng(seed).standard_normal(D) * 10.0 ** np.random.default_rng(seed).uniform(-5, 5)
    nq, n1 = lq_norm(x, q), lq_norm(x, 1)
    assert nq <= n1 * (1 + 1e-12)
    assert n1 <= D ** (1 - 1 / q) * nq * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(seeds, st.sampled_from([1.25, 1.5, 2.0, 3.0]), st.integers(1, 50))
def test_radius_nesting_on_sphere(seed, q, D):
    v = np.random.default_rng(seed).standard_normal(D)
    theta = default_radius(D, q) * v / lq_norm(v, q)
    assert lq_norm(theta, 1) <= 1 + 1e-12


def test_lq_norm_special_values():
    assert lq_norm([3.0, -4.0], 2) == 5.0
    assert lq_norm([3.0, -4.0], np.inf) == 4.0
    assert lq_norm(np.zeros(3), 1.5) == 0.0
    assert lq_norm([1e200, 1e200], 4) == pytest.approx(1e200 * 2 ** 0.25)


def test_default_radius():
    assert default_radius(861, 1) == 1.0
    assert default_radius(100, 2) == pytest.approx(0.1)
    assert default_radius(100, 2, R=3) == pytest.approx(0.3)


def test_coefficient_vector_feasibility():
    cv = CoefficientVector(np.array([0.6, 0.8]), 2, 1.0)
    assert cv.is_feasible() and cv.norm_q == pytest.approx(1.0)
    assert not CoefficientVector(np.array([0.6, 0.81]), 2, 1.0).is_feasible()
    with pytest.raises(ValueError):
        cv.values[0] = 1.0


def test_fit_unconstrained_min_norm():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((4, 8))
    y = rng.standard_normal(4)
    th = fit_unconstrained(QuadraticObjective(S, y))
    np.testing.assert_allclose(S @ th, y, atol=1e-12)
    np.testing.assert_allclose(th, np.linalg.pinv(S) @ y, atol=1e-12)
