import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import linprog

from app.core.config import settings
from app.core.errors import IterationLimitError, LpError
from app.core.lp import LpProblem, LpSolution

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9


@dataclass
class _Column:
    """How one original column maps onto the standard-form columns"""
    offset: float
    plus: Optional[int] = None
    minus: Optional[int] = None


class RevisedSimplex:
    """Dense two-phase revised simplex with Bland's rule.

    Works on the standard form min c'x, Ax = b, x >= 0, b >= 0. The basis is
    refactored with an LU decomposition at every iteration.
    """

    def __init__(self, iter_cap: Optional[int] = None, tol: float = PIVOT_TOL):
        self.iter_cap = settings.LP_ITER_CAP if iter_cap is None else iter_cap
        self.tol = tol
        self.iterations = 0

    def _standard_form(self, problem: LpProblem):
        columns: List[_Column] = []
        n = 0
        bound_rows = []
        for lo, hi in zip(problem.lower, problem.upper):
            if lo == hi:
                columns.append(_Column(offset=lo))
                continue
            if math.isinf(lo):
                # Free column: split into a difference of two non-negatives
                if not math.isinf(hi):
                    raise LpError("columns bounded only from above are not supported")
                columns.append(_Column(offset=0.0, plus=n, minus=n + 1))
                n += 2
                continue
            columns.append(_Column(offset=lo, plus=n))
            if not math.isinf(hi):
                bound_rows.append((n, hi - lo))
            n += 1

        rows, senses, rhs = [], [], []
        for row in problem.rows:
            coeffs = np.zeros(n)
            shift = 0.0
            for col, v in row.coeffs.items():
                mapped = columns[col]
                shift += v * mapped.offset
                if mapped.plus is not None:
                    coeffs[mapped.plus] += v
                if mapped.minus is not None:
                    coeffs[mapped.minus] -= v
            rows.append(coeffs)
            senses.append(row.sense)
            rhs.append(row.rhs - shift)
        for col, width in bound_rows:
            coeffs = np.zeros(n)
            coeffs[col] = 1.0
            rows.append(coeffs)
            senses.append("<=")
            rhs.append(width)

        cost = np.zeros(n)
        sign = -1.0 if problem.sense == "max" else 1.0
        for idx, mapped in enumerate(columns):
            if mapped.plus is not None:
                cost[mapped.plus] += sign * problem.cost[idx]
            if mapped.minus is not None:
                cost[mapped.minus] -= sign * problem.cost[idx]
        return columns, np.array(rows).reshape(len(rows), n), senses, np.array(rhs, dtype=float), cost

    def _iterate(self, A, b, c, basis, allowed) -> str:
        m, n = A.shape
        while True:
            lu = lu_factor(A[:, basis])
            x_b = np.maximum(lu_solve(lu, b), 0.0)
            y = lu_solve(lu, c[basis], trans=1)
            reduced = c - A.T @ y
            in_basis = np.zeros(n, dtype=bool)
            in_basis[basis] = True

            # Bland: lowest-index improving column enters
            entering = np.flatnonzero((reduced < -self.tol) & allowed & ~in_basis)
            if entering.size == 0:
                return "optimal"
            q = int(entering[0])
            d = lu_solve(lu, A[:, q])
            rows = np.flatnonzero(d > self.tol)
            if rows.size == 0:
                return "unbounded"
            ratios = x_b[rows] / d[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tol * max(1.0, best)]
            leave = int(min(ties, key=lambda r: basis[r]))
            basis[leave] = q

            self.iterations += 1
            if self.iterations > self.iter_cap:
                raise IterationLimitError(f"simplex passed {self.iter_cap} iterations")

    def run(self, problem: LpProblem) -> Tuple[str, np.ndarray]:
        columns, A, senses, b, cost = self._standard_form(problem)
        m, n = A.shape
        self.iterations = 0

        # 1. Slacks and surpluses, then sign-normalize so b >= 0
        slack = np.zeros((m, m))
        natural = [-1] * m
        for r, sense in enumerate(senses):
            if sense == "<=":
                slack[r, r] = 1.0
            elif sense == ">=":
                slack[r, r] = -1.0
        A = np.hstack([A, slack])
        flip = b < 0
        A[flip] *= -1
        b = np.abs(b)
        for r, sense in enumerate(senses):
            if sense != "=" and A[r, n + r] > 0:
                natural[r] = n + r

        # 2. Artificials only where no slack can start the basis
        need = [r for r in range(m) if natural[r] < 0]
        art = np.zeros((m, len(need)))
        for k, r in enumerate(need):
            art[r, k] = 1.0
        A = np.hstack([A, art])
        total = A.shape[1]
        first_art = n + m
        basis = np.array([natural[r] if natural[r] >= 0 else first_art + need.index(r) for r in range(m)],
                         dtype=int)
        allowed = np.ones(total, dtype=bool)

        if m == 0:
            x = np.zeros(n)
            if np.any(cost < -self.tol):
                return "unbounded", self._recover(columns, x)
            return "optimal", self._recover(columns, x)

        # 3. Phase I
        if need:
            phase1 = np.zeros(total)
            phase1[first_art:] = 1.0
            self._iterate(A, b, phase1, basis, allowed)
            x_b = lu_solve(lu_factor(A[:, basis]), b)
            if phase1[basis] @ x_b > settings.LP_FEAS_TOL * max(1.0, np.abs(b).max()):
                return "infeasible", np.zeros(len(columns))
            A, b, basis = self._drive_out(A, b, basis, first_art)
            allowed = np.ones(A.shape[1], dtype=bool)
            allowed[first_art:] = False

        # 4. Phase II
        c = np.zeros(A.shape[1])
        c[:n] = cost
        status = self._iterate(A, b, c, basis, allowed)
        x_full = np.zeros(A.shape[1])
        x_full[basis] = lu_solve(lu_factor(A[:, basis]), b)
        return status, self._recover(columns, x_full[:n])

    def _drive_out(self, A, b, basis, first_art):
        """Pivot zero-level artificials out of the basis; drop redundant rows"""
        r = 0
        while r < len(basis):
            if basis[r] < first_art:
                r += 1
                continue
            lu = lu_factor(A[:, basis])
            row = lu_solve(lu, np.eye(len(basis))[r], trans=1) @ A
            candidates = [j for j in np.flatnonzero(np.abs(row[:first_art]) > self.tol) if j not in basis]
            if candidates:
                basis[r] = candidates[0]
                r += 1
            else:
                A = np.delete(A, r, axis=0)
                b = np.delete(b, r)
                basis = np.delete(basis, r)
        return A, b, basis

    @staticmethod
    def _recover(columns: List[_Column], x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(columns))
        for idx, mapped in enumerate(columns):
            value = mapped.offset
            if mapped.plus is not None:
                value += x[mapped.plus]
            if mapped.minus is not None:
                value -= x[mapped.minus]
            out[idx] = value
        return out


def _solve_highs(problem: LpProblem) -> Tuple[str, np.ndarray, int]:
    c, A_ub, b_ub, A_eq, b_eq, bounds = problem.matrices()
    result = linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None, b_eq=b_eq if A_eq.shape[0] else None,
        bounds=[(lo, None if math.isinf(hi) else hi) for lo, hi in bounds],
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if result.status == 1:
        raise IterationLimitError(f"HiGHS hit its iteration limit on {problem.name}")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(result.status)
    if status is None:
        raise LpError(f"HiGHS failed on {problem.name}: {result.message}")
    x = result.x if result.x is not None else np.zeros(problem.n_vars)
    return status, np.asarray(x, dtype=float), int(result.nit)


def pick_backend(problem: LpProblem) -> str:
    backend = settings.LP_BACKEND.lower()
    if backend == "auto":
        return "simplex" if problem.n_vars * max(problem.n_rows, 1) <= settings.LP_DENSE_LIMIT else "highs"
    if backend not in ("simplex", "highs"):
        raise LpError(f"unknown LP backend {settings.LP_BACKEND!r}")
    return backend


def solve(problem: LpProblem, backend: Optional[str] = None, iter_cap: Optional[int] = None) -> LpSolution:
    """Optimize ``problem`` and re-check the returned point against every row"""
    problem.check()
    backend = backend or pick_backend(problem)

    if backend == "simplex":
        engine = RevisedSimplex(iter_cap=iter_cap)
        status, x = engine.run(problem)
        iterations = engine.iterations
    elif backend == "highs":
        status, x, iterations = _solve_highs(problem)
    else:
        raise LpError(f"unknown LP backend {backend!r}")

    objective = math.nan
    if status == "optimal":
        bad = problem.violations(x)
        if bad:
            name, gap = bad[0]
            raise LpError(f"{backend} returned a point violating {name} by {gap:.3g} ({len(bad)} rows)")
        objective = problem.objective_value(x)
    elif status == "unbounded":
        objective = -math.inf if problem.sense == "min" else math.inf

    logger.info("[LP] %s via %s: %s obj=%.6g after %d iterations",
                problem.name, backend, status, objective, iterations)
    return LpSolution(status=status, objective=objective, values=x, iterations=iterations,
                      backend=backend, problem=problem)
