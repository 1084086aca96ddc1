"""
Revised simplex - dense two-phase LP engine

Solves min c.x s.t. A x = b, x >= 0 with an explicit basis inverse updated
by pivoting. Bland's rule prevents cycling. The same code runs on float64
arrays and on object arrays of Fractions (exact mode).
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, List, Optional

import numpy as np

from .transport_base import ArithmeticMode, SolverSettings, SolveStatus, ValidationError
from .transport_utils import as_array, one, zero

logger = logging.getLogger(__name__)


@dataclass
class LPResult:
    """Outcome of solve_standard_form"""
    status: SolveStatus
    x: Optional[np.ndarray]
    value: Any
    duals: Optional[np.ndarray]      # one per row of A, sign as in the input
    basis: List[int]
    iterations: int
    redundant_rows: List[int]


class RevisedSimplex:
    """
    Two-phase revised simplex

    Phase 1 starts from an all-artificial basis. Artificials left in the basis
    after phase 1 that cannot be pivoted out mark redundant rows; they stay
    basic at zero and never re-enter in phase 2.
    """

    def __init__(self, c: Any, A: Any, b: Any, mode: ArithmeticMode,
                 settings: Optional[SolverSettings] = None) -> None:
        self.settings = settings or SolverSettings()
        self.mode = mode
        c_arr = as_array(c, mode)
        A_arr = as_array(A, mode)
        b_arr = as_array(b, mode)
        if A_arr.ndim != 2 or A_arr.shape != (b_arr.shape[0], c_arr.shape[0]):
            raise ValidationError(f"shape mismatch: A {A_arr.shape}, b {b_arr.shape}, c {c_arr.shape}")
        self.m, self.n = A_arr.shape

        # rows with negative rhs are negated so the artificial basis is feasible
        self.row_sign = np.array([-1 if v < 0 else 1 for v in b_arr], dtype=int)
        A_arr = A_arr * self.row_sign[:, None]
        b_arr = b_arr * self.row_sign
        if mode is ArithmeticMode.FLOAT:
            A_arr = A_arr.astype(float)
            b_arr = b_arr.astype(float)

        identity = self._identity(self.m)
        self.A = np.concatenate([A_arr, identity], axis=1)
        self.b = b_arr
        self.c = c_arr
        self.iterations = 0
        self._pivots_since_refactor = 0

        self.basis: List[int] = list(range(self.n, self.n + self.m))
        self.Binv = self._identity(self.m)
        self.x_B = self.b.copy()

    # --- arithmetic helpers ---

    def _identity(self, size: int) -> np.ndarray:
        if self.mode is ArithmeticMode.EXACT:
            eye = np.empty((size, size), dtype=object)
            eye[:] = Fraction(0)
            for i in range(size):
                eye[i, i] = Fraction(1)
            return eye
        return np.eye(size)

    def _positive(self, value: Any, tol: float) -> bool:
        if self.mode is ArithmeticMode.EXACT:
            return value > 0
        return value > tol

    def _negative(self, value: Any, tol: float) -> bool:
        if self.mode is ArithmeticMode.EXACT:
            return value < 0
        return value < -tol

    # --- pivoting ---

    def _refactor(self) -> None:
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.x_B = self.Binv @ self.b
        self._pivots_since_refactor = 0

    def _pivot(self, r: int, j: int, u: np.ndarray) -> None:
        """Column j enters at basis position r; u = B^-1 A_j"""
        theta = self.x_B[r] / u[r]
        pivot_row = self.Binv[r, :] / u[r]
        self.Binv = self.Binv - np.outer(u, pivot_row)
        self.Binv[r, :] = pivot_row
        self.x_B = self.x_B - theta * u
        self.x_B[r] = theta
        self.basis[r] = j
        self.iterations += 1
        self._pivots_since_refactor += 1
        if self.mode is ArithmeticMode.FLOAT:
            if self._pivots_since_refactor >= self.settings.lp_refactor_every:
                self._refactor()
            # clip round-off below zero
            self.x_B[(self.x_B < 0) & (self.x_B > -self.settings.lp_pivot_tol)] = 0.0

    def _entering(self, cost: np.ndarray, y: np.ndarray, candidates: int, tol: float) -> Optional[int]:
        """Bland: the lowest-index nonbasic column with negative reduced cost"""
        in_basis = set(self.basis)
        if self.mode is ArithmeticMode.FLOAT:
            reduced = cost[:candidates] - y @ self.A[:, :candidates]
            for j in np.flatnonzero(reduced < -tol):
                if j not in in_basis:
                    return int(j)
            return None
        for j in range(candidates):
            if j in in_basis:
                continue
            if cost[j] - y.dot(self.A[:, j]) < 0:
                return j
        return None

    def _leaving(self, u: np.ndarray, tol: float) -> Optional[int]:
        """
        Ratio test; ties broken by the lowest basic variable index

        In float mode ratios within tol of each other count as tied.
        """
        best: Optional[int] = None
        best_ratio: Any = None
        for i in range(self.m):
            if not self._positive(u[i], tol):
                continue
            ratio = self.x_B[i] / u[i]
            if best is None:
                best, best_ratio = i, ratio
            elif self._tied(ratio, best_ratio, tol):
                if self.basis[i] < self.basis[best]:
                    best = i
                best_ratio = min(ratio, best_ratio)
            elif ratio < best_ratio:
                best, best_ratio = i, ratio
        return best

    def _tied(self, ratio: Any, best_ratio: Any, tol: float) -> bool:
        if self.mode is ArithmeticMode.EXACT:
            return ratio == best_ratio
        return abs(ratio - best_ratio) <= tol

    def _run(self, cost: np.ndarray, candidates: int, phase: str) -> SolveStatus:
        tol = self.settings.lp_pivot_tol * max(1.0, float(np.max(np.abs(cost.astype(float)))) if len(cost) else 1.0)
        while True:
            if self.iterations >= self.settings.lp_max_iters:
                logger.warning(f"simplex {phase}: iteration limit {self.settings.lp_max_iters} reached")
                return SolveStatus.NOT_CONVERGED
            y = cost[self.basis].dot(self.Binv)
            j = self._entering(cost, y, candidates, tol)
            if j is None:
                logger.debug(f"simplex {phase}: optimal after {self.iterations} pivots")
                return SolveStatus.OPTIMAL
            u = self.Binv.dot(self.A[:, j])
            r = self._leaving(u, self.settings.lp_pivot_tol)
            if r is None:
                return SolveStatus.UNBOUNDED_GUARD
            self._pivot(r, j, u)

    def _drive_out_artificials(self) -> List[int]:
        """Pivots basic artificials out on any original column; returns redundant rows"""
        redundant = []
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            row = self.Binv[r, :].dot(self.A[:, :self.n])
            in_basis = set(self.basis)
            entering = None
            for j in range(self.n):
                if j not in in_basis and self._positive(abs(row[j]), self.settings.lp_pivot_tol):
                    entering = j
                    break
            if entering is None:
                redundant.append(self.basis[r] - self.n)
                continue
            u = self.Binv.dot(self.A[:, entering])
            self._pivot(r, entering, u)
        return redundant

    def solve(self) -> LPResult:
        # phase 1: minimize the sum of artificials
        phase1_cost = np.concatenate([np.full(self.n, zero(self.mode), dtype=object),
                                      np.full(self.m, one(self.mode), dtype=object)])
        if self.mode is ArithmeticMode.FLOAT:
            phase1_cost = phase1_cost.astype(float)
        status = self._run(phase1_cost, self.n + self.m, 'phase 1')
        if status is not SolveStatus.OPTIMAL:
            return self._result(status, [])

        infeasibility = phase1_cost[self.basis].dot(self.x_B)
        feas_tol = 1e-9 * max(1.0, float(np.max(np.abs(self.b.astype(float)))) if self.m else 1.0)
        if self._positive(infeasibility, feas_tol):
            logger.info(f"simplex: infeasible (phase-1 objective {float(infeasibility):.3e})")
            return self._result(SolveStatus.INFEASIBLE, [])

        redundant = self._drive_out_artificials()
        if redundant:
            logger.debug(f"simplex: {len(redundant)} redundant rows kept with artificial basics")

        # phase 2: artificials never enter
        phase2_cost = np.concatenate([self.c, np.full(self.m, zero(self.mode), dtype=object)])
        if self.mode is ArithmeticMode.FLOAT:
            phase2_cost = phase2_cost.astype(float)
        if self.mode is ArithmeticMode.FLOAT:
            self._refactor()
        status = self._run(phase2_cost, self.n, 'phase 2')
        return self._result(status, redundant, phase2_cost)

    def _result(self, status: SolveStatus, redundant: List[int],
                cost: Optional[np.ndarray] = None) -> LPResult:
        if status is not SolveStatus.OPTIMAL or cost is None:
            return LPResult(status, None, None, None, list(self.basis), self.iterations, redundant)
        x = np.empty(self.n + self.m, dtype=object if self.mode is ArithmeticMode.EXACT else float)
        x[:] = zero(self.mode)
        for r, j in enumerate(self.basis):
            x[j] = self.x_B[r]
        x = x[:self.n]
        if self.mode is ArithmeticMode.FLOAT:
            x[x < 0] = 0.0
        y = cost[self.basis].dot(self.Binv) * self.row_sign
        value = self.c.dot(x) if self.n else zero(self.mode)
        return LPResult(status, x, value, y, list(self.basis), self.iterations, redundant)


def solve_standard_form(c: Any, A: Any, b: Any, exact: bool = False,
                        settings: Optional[SolverSettings] = None) -> LPResult:
    """
    min c.x s.t. A x = b, x >= 0

    Args:
        c: Cost vector (n)
        A: Constraint matrix (m x n)
        b: Right-hand side (m)
        exact: Rational arithmetic on Fractions
        settings: Solver tolerances and limits

    Returns:
        LPResult with primal x, duals y (b.y = c.x at optimum) and status
    """
    mode = ArithmeticMode.EXACT if exact else ArithmeticMode.FLOAT
    return RevisedSimplex(c, A, b, mode, settings).solve()
