import itertools
import math

import numpy as np
import pytest

from app.core.config import settings
from app.core.errors import InfeasibleError, IterationLimitError, LpError, UnboundedError
from app.core.lp import LpProblem
from app.core.simplex import RevisedSimplex, pick_backend, solve


def _random_problem(rng, n, m_ub, m_eq):
    """Feasible by construction: every row holds at a random point inside the box"""
    problem = LpProblem("random")
    x0 = rng.uniform(0, 5, size=n)
    cols = [problem.add_var(f"x{k}", upper=10.0, cost=float(rng.normal())) for k in range(n)]
    for r in range(m_ub):
        a = rng.normal(size=n)
        problem.add_row(f"ub{r}", dict(zip(cols, a)), "<=", float(a @ x0 + rng.uniform(0, 2)))
    for r in range(m_eq):
        a = rng.normal(size=n)
        problem.add_row(f"eq{r}", dict(zip(cols, a)), "=", float(a @ x0))
    return problem


def test_matches_highs_on_random_problems():
    rng = np.random.default_rng(3)
    for _ in range(25):
        problem = _random_problem(rng, int(rng.integers(2, 8)), int(rng.integers(1, 6)), int(rng.integers(0, 3)))
        dense = solve(problem, backend="simplex")
        highs = solve(problem, backend="highs")
        assert dense.status == highs.status == "optimal"
        assert dense.objective == pytest.approx(highs.objective, rel=1e-6, abs=1e-7)


def test_textbook_maximum():
    problem = LpProblem("max", sense="max")
    x = problem.add_var("x", upper=3.0, cost=3.0)
    y = problem.add_var("y", lower=-1.0, cost=2.0)
    problem.add_row("a", {x: 1, y: 1}, "<=", 4)
    problem.add_row("b", {x: 1, y: 3}, "<=", 6)
    problem.add_row("c", {x: 1, y: -1}, ">=", -2)
    solution = solve(problem, backend="simplex")
    assert solution.objective == pytest.approx(11.0)
    assert solution.value("x") == pytest.approx(3.0)
    assert solution.value("y") == pytest.approx(1.0)


def test_infeasible():
    problem = LpProblem("infeasible")
    x = problem.add_var("x")
    problem.add_row("lo", {x: 1}, ">=", 2)
    problem.add_row("hi", {x: 1}, "<=", 1)
    for backend in ("simplex", "highs"):
        solution = solve(problem, backend=backend)
        assert solution.status == "infeasible"
        with pytest.raises(InfeasibleError):
            solution.require_optimal()


def test_unbounded():
    problem = LpProblem("unbounded")
    x = problem.add_var("x", cost=-1.0)
    y = problem.add_var("y")
    problem.add_row("gap", {x: 1, y: -1}, "<=", 1)
    solution = solve(problem, backend="simplex")
    assert solution.status == "unbounded"
    assert solution.objective == -math.inf
    with pytest.raises(UnboundedError):
        solution.require_optimal()


def test_free_and_fixed_columns():
    problem = LpProblem("columns")
    x = problem.add_var("x", lower=-math.inf, cost=1.0)
    y = problem.add_var("y", lower=2.0, upper=2.0, cost=1.0)
    problem.add_row("floor", {x: 1, y: 1}, ">=", -1)
    solution = solve(problem, backend="simplex")
    assert solution.value("x") == pytest.approx(-3.0)
    assert solution.value("y") == 2.0
    assert solution.objective == pytest.approx(-1.0)


def test_redundant_equalities():
    problem = LpProblem("redundant")
    x = problem.add_var("x", cost=1.0)
    y = problem.add_var("y", cost=2.0)
    problem.add_row("e1", {x: 1, y: 1}, "=", 1)
    problem.add_row("e2", {x: 2, y: 2}, "=", 2)
    solution = solve(problem, backend="simplex")
    assert solution.objective == pytest.approx(1.0)


def test_iteration_cap():
    problem = LpProblem("cap")
    x = problem.add_var("x", cost=-1.0)
    problem.add_row("hi", {x: 1}, "<=", 1)
    with pytest.raises(IterationLimitError):
        RevisedSimplex(iter_cap=0).run(problem)


def test_backend_choice(monkeypatch):
    problem = LpProblem("pick")
    problem.add_var("x")
    assert pick_backend(problem) == "simplex"
    monkeypatch.setattr(settings, "LP_DENSE_LIMIT", 0)
    assert pick_backend(problem) == "highs"
    monkeypatch.setattr(settings, "LP_BACKEND", "glpk")
    with pytest.raises(LpError):
        pick_backend(problem)
    with pytest.raises(LpError):
        solve(problem, backend="glpk")


def _vertex_optimum(problem):
    """Best objective over all vertices of {lower <= x <= upper, rows}; tiny bounded problems only"""
    c, A_ub, b_ub, A_eq, b_eq, bounds = problem.matrices()
    n = problem.n_vars
    G = [A_ub.toarray(), A_eq.toarray(), -A_eq.toarray(), -np.eye(n), np.eye(n)]
    h = [b_ub, b_eq, -b_eq, -np.array([lo for lo, _ in bounds]), np.array([hi for _, hi in bounds])]
    G, h = np.vstack(G), np.concatenate(h)
    best = math.inf
    for rows in itertools.combinations(range(len(h)), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + 1e-7):
            best = min(best, float(c @ x))
    return best if problem.sense == "min" else -best


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(10):
        problem = _random_problem(rng, int(rng.integers(2, 4)), int(rng.integers(1, 5)), int(rng.integers(0, 2)))
        status, x = RevisedSimplex().run(problem)
        assert status == "optimal"
        assert problem.objective_value(x) == pytest.approx(_vertex_optimum(problem), rel=1e-6, abs=1e-7)
