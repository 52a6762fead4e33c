import numpy as np
import pytest

from swlq.groupqp import (
    GroupLassoQP,
    NormGroup,
    SolverSettings,
    block_soft_threshold,
    objective,
    prepare,
    solve,
)
from helpers import nonsmooth_objective, subgradient_certificate, subgradient_reference


def random_problem(seed, d=None, n_groups=None):
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(2, 11))
    n_groups = n_groups if n_groups is not None else int(rng.integers(1, 5))
    m = rng.standard_normal((d + 2, d))
    h = m.T @ m / d
    c = rng.standard_normal(d)
    groups = []
    for _ in range(n_groups):
        rows = int(rng.integers(1, 4))
        groups.append(
            NormGroup(
                rng.standard_normal((rows, d)),
                rng.standard_normal(rows),
                float(rng.uniform(0.2, 3.0)),
            )
        )
    return GroupLassoQP(h, c, tuple(groups))


# ---------------------------------------------------------------------------
# block_soft_threshold
# ---------------------------------------------------------------------------


def test_threshold_shrinks():
    np.testing.assert_allclose(block_soft_threshold([3.0, 4.0], 1.0), [2.4, 3.2], atol=1e-15)


def test_threshold_interior_maps_to_zero():
    assert np.all(block_soft_threshold([0.3, -0.4], 0.5) == 0.0)
    assert np.all(block_soft_threshold([0.3, -0.4], 5.0) == 0.0)


def test_threshold_identity_at_zero_kappa():
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(block_soft_threshold(v, 0.0), v)
    assert np.all(block_soft_threshold(np.zeros(3), 2.0) == 0.0)


def test_threshold_nonexpansive():
    rng = np.random.default_rng(8)
    for _ in range(200):
        v = rng.standard_normal(4)
        w = rng.standard_normal(4)
        kappa = float(rng.uniform(0, 2))
        lhs = np.linalg.norm(block_soft_threshold(v, kappa) - block_soft_threshold(w, kappa))
        assert lhs <= np.linalg.norm(v - w) + 1e-12


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def test_objective_at_origin():
    problem = random_problem(3)
    expected = sum(g.weight * np.linalg.norm(g.off) for g in problem.groups)
    assert objective(problem, np.zeros(problem.dim)) == pytest.approx(expected, rel=1e-12)


def test_objective_pure_quadratic_minimum():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((5, 5))
    h = m.T @ m + np.eye(5)
    c = rng.standard_normal(5)
    problem = GroupLassoQP(h, c, ())
    z_star = np.linalg.solve(h, -c)
    assert objective(problem, z_star) == pytest.approx(-0.5 * c @ np.linalg.solve(h, c), rel=1e-12)


def test_objective_midpoint_convexity():
    rng = np.random.default_rng(6)
    problem = random_problem(6)
    for _ in range(50):
        z1 = rng.standard_normal(problem.dim)
        z2 = rng.standard_normal(problem.dim)
        mid = objective(problem, 0.5 * (z1 + z2))
        assert mid <= 0.5 * objective(problem, z1) + 0.5 * objective(problem, z2) + 1e-10


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_pure_quadratic():
    b = np.array([1.0, -2.0, 0.5])
    problem = GroupLassoQP(np.eye(3), -b, ())
    z, report = solve(problem)
    np.testing.assert_allclose(z, b, atol=1e-12)
    assert report.converged and report.iterations == 1


def test_solve_scalar_lasso_threshold():
    # |c| <= tau keeps the origin optimal
    problem = GroupLassoQP([[1.0]], [-1.0], (NormGroup([[1.0]], [0.0], 2.0),))
    z, report = solve(problem)
    assert report.converged
    assert abs(z[0]) <= 1e-9


def test_solve_matches_subgradient_reference():
    for seed in range(6):
        problem = random_problem(seed)
        z, report = solve(problem)
        assert report.converged
        groups = [(g.mat, g.off, g.weight) for g in problem.groups]
        ref_obj, _ = subgradient_reference(problem.h, problem.c, groups)
        assert report.objective == pytest.approx(ref_obj, rel=1e-6, abs=1e-8)


def test_solve_optimality_certificate():
    tight = SolverSettings(abs_tol=1e-12, rel_tol=1e-10)
    for seed in (20, 21, 22, 23, 24):
        problem = random_problem(seed)
        z, report = solve(problem, tight)
        assert report.converged
        residual = subgradient_certificate(problem, z)
        assert residual <= 1e-6 * (1 + np.linalg.norm(z))


def test_solve_deterministic():
    problem = random_problem(30)
    z1, r1 = solve(problem)
    z2, r2 = solve(problem)
    assert np.array_equal(z1, z2)
    assert r1 == r2


def test_solve_reuses_prepared_factorization():
    problem = random_problem(31)
    cache = prepare(problem, 1.0)
    z1, _ = solve(problem, None, cache)
    z2, _ = solve(problem)
    np.testing.assert_allclose(z1, z2, atol=1e-12)


def test_solve_rejects_indefinite_quadratic():
    with pytest.raises(ValueError, match="semidefinite"):
        GroupLassoQP(np.diag([1.0, -1.0]), np.zeros(2), ())


def test_solve_nonconvergence_is_soft():
    problem = random_problem(32)
    z, report = solve(problem, SolverSettings(max_iters=3))
    assert not report.converged
    assert report.iterations == 3
    assert np.all(np.isfinite(z))


def test_reference_helper_agrees_with_closed_form():
    # sanity for the oracle itself: pure quadratic
    rng = np.random.default_rng(9)
    m = rng.standard_normal((4, 4))
    h = m.T @ m + np.eye(4)
    c = rng.standard_normal(4)
    ref_obj, _ = subgradient_reference(h, c, [])
    assert ref_obj == pytest.approx(-0.5 * c @ np.linalg.solve(h, c), rel=1e-6)
    assert nonsmooth_objective(h, c, [], np.zeros(4)) == 0.0
