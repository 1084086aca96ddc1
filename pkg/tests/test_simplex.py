"""
Unit Tests for simplex
=======================

Revised simplex in float and rational arithmetic.
"""
import pytest
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from modules.simplex import RevisedSimplex, solve_standard_form
from modules.transport_base import ArithmeticMode, SolverSettings, SolveStatus, ValidationError


def assignment_lp(cost):
    """Transport LP with uniform marginals on an n x n cost matrix"""
    n = cost.shape[0]
    A = np.zeros((2 * n, n * n))
    for i in range(n):
        A[i, i * n:(i + 1) * n] = 1
        A[n + i, i::n] = 1
    b = np.full(2 * n, 1 / n)
    return cost.ravel(), A, b


class TestRevisedSimplex:
    """Tests for solve_standard_form"""

    @pytest.mark.parametrize("exact", [False, True])
    def test_single_row(self, exact):
        """min x1 + 2 x2 s.t. x1 + x2 = 1"""
        result = solve_standard_form([1, 2], [[1, 1]], [1], exact=exact)

        assert result.status is SolveStatus.OPTIMAL
        assert result.value == 1
        assert list(result.x) == [1, 0]
        assert result.duals[0] == 1

    def test_exact_fractions(self):
        """max x1 s.t. 3 x1 + x2 = 1 gives exactly 1/3"""
        result = solve_standard_form([-1, 0], [[3, 1]], [1], exact=True)
        assert result.value == Fraction(-1, 3)
        assert isinstance(result.value, Fraction)

    def test_negative_rhs_duals(self):
        """Duals keep the sign of the original rows"""
        result = solve_standard_form([1, 2], [[-1, -1]], [-1], exact=True)
        assert result.value == 1
        assert result.duals[0] == -1
        assert result.duals[0] * -1 == result.value

    def test_redundant_rows(self):
        """A duplicated row is detected and the optimum is unaffected"""
        result = solve_standard_form([1, 2], [[1, 1], [2, 2]], [1, 2], exact=True)
        assert result.status is SolveStatus.OPTIMAL
        assert result.value == 1
        assert len(result.redundant_rows) == 1
        assert np.dot([1, 2], result.duals) == result.value

    def test_infeasible(self):
        """x = 1 and x = 2 cannot both hold"""
        result = solve_standard_form([1], [[1], [1]], [1, 2], exact=True)
        assert result.status is SolveStatus.INFEASIBLE
        assert result.x is None

    def test_unbounded(self):
        """min -x1 with x1 = x2 has no lower bound"""
        result = solve_standard_form([-1, 0], [[1, -1]], [0])
        assert result.status is SolveStatus.UNBOUNDED_GUARD

    def test_iteration_limit(self):
        """Exhausting the pivot budget reports NOT_CONVERGED"""
        c, A, b = assignment_lp(np.arange(16, dtype=float).reshape(4, 4) % 5)
        result = solve_standard_form(c, A, b, settings=SolverSettings(lp_max_iters=1))
        assert result.status is SolveStatus.NOT_CONVERGED

    def test_shape_mismatch(self):
        """A, b and c must agree"""
        with pytest.raises(ValidationError, match="shape"):
            solve_standard_form([1, 2, 3], [[1, 1]], [1])

    @pytest.mark.parametrize("seed", range(5))
    def test_assignment_with_refactorization(self, seed):
        """Float LP with frequent refactorization matches the assignment optimum"""
        rng = np.random.default_rng(seed)
        cost = rng.integers(0, 10, size=(5, 5)).astype(float)
        c, A, b = assignment_lp(cost)
        rows, cols = linear_sum_assignment(cost)

        result = solve_standard_form(c, A, b, settings=SolverSettings(lp_refactor_every=2))

        assert result.status is SolveStatus.OPTIMAL
        assert result.value == pytest.approx(cost[rows, cols].sum() / 5, abs=1e-9)
        assert b.dot(result.duals) == pytest.approx(result.value, abs=1e-9)

    def test_exact_and_float_agree(self):
        """Rational and float engines find the same value"""
        cost = np.array([[3, 1, 4], [1, 5, 9], [2, 6, 5]])
        c, A, _ = assignment_lp(cost.astype(float))
        b_exact = [Fraction(1, 3)] * 6
        exact = solve_standard_form(cost.ravel().tolist(), A.astype(int).tolist(), b_exact, exact=True)
        floating = solve_standard_form(c, A, np.full(6, 1 / 3))
        assert exact.value == Fraction(7, 3)
        assert floating.value == pytest.approx(7 / 3)


class TestRatioTest:
    """Tests for the leaving-variable choice"""

    @staticmethod
    def _engine(x_B, basis, exact=False):
        mode = ArithmeticMode.EXACT if exact else ArithmeticMode.FLOAT
        engine = RevisedSimplex([0, 0], [[1, 0], [0, 1]], [1, 1], mode)
        engine.x_B = np.array(x_B, dtype=object if exact else float)
        engine.basis = list(basis)
        return engine

    def test_float_near_tie_uses_lowest_index(self):
        """Ratios within the pivot tolerance count as tied"""
        u = np.array([1.0, 1.0])
        assert self._engine([1.0, 1.0 - 1e-13], [2, 3])._leaving(u, 1e-11) == 0
        assert self._engine([1.0, 1.0 - 1e-13], [3, 2])._leaving(u, 1e-11) == 1

    def test_float_clear_minimum(self):
        """A ratio smaller by more than the tolerance wins"""
        u = np.array([1.0, 1.0])
        assert self._engine([1.0, 0.5], [2, 3])._leaving(u, 1e-11) == 1

    def test_exact_ties_are_exact(self):
        """Fractions compare without tolerance"""
        u = np.array([Fraction(1), Fraction(1)], dtype=object)
        engine = self._engine([Fraction(1), Fraction(1) - Fraction(1, 10 ** 13)], [2, 3], exact=True)
        assert engine._leaving(u, 1e-11) == 1

    def test_near_degenerate_lp(self):
        """Right-hand sides one rounding apart still solve"""
        result = solve_standard_form([-1, 0, 0], [[1, 1, 0], [1, 0, 1]], [1.0, 1.0 + 1e-13])
        assert result.status is SolveStatus.OPTIMAL
        assert result.value == pytest.approx(-1.0, abs=1e-12)
