"""
Unit Tests for transport_solver
================================

Classic and causal Monge-Kantorovich LPs, certificates and Monge
enumeration.
"""
import pytest
from fractions import Fraction

import numpy as np

from modules.causality import is_causal
from modules.instances import mismatch_cost, random_instance
from modules.path_space import FilteredPathSpace, PathMeasure
from modules.transport_base import (
    ArithmeticMode,
    SizeGuardError,
    SolveMode,
    SolveStatus,
    SolverSettings,
    ValidationError,
)
from modules.transport_solver import (
    TransportProblem,
    as_cost_matrix,
    solve,
    solve_causal_mk,
    solve_causal_monge_bruteforce,
    solve_classic_mk,
    solve_classic_monge_bruteforce,
    value_S,
    value_T,
    verify_dual_feasibility,
)


def certificate_ok(solution, tol=1e-8):
    scale = max(1.0, abs(float(solution.value)))
    return abs(float(solution.gap)) <= tol * scale and solution.dual.max_violation <= tol * scale


class TestAnticipationInstance:
    """The instance where the classic plan looks ahead"""

    def test_exact_values(self, anticipation):
        """Causal value 1/2, classic value 0, in rational arithmetic"""
        causal = solve_causal_mk(anticipation.eta, anticipation.nu, anticipation.cost, exact=True)
        classic = solve_classic_mk(anticipation.eta, anticipation.nu, anticipation.cost, exact=True)

        assert causal.value == Fraction(1, 2)
        assert classic.value == 0
        assert causal.mode is ArithmeticMode.EXACT
        assert causal.gap == 0

    def test_float_values(self, anticipation):
        """Float LP agrees within 1e-9"""
        causal = solve_causal_mk(anticipation.eta.as_float(), anticipation.nu.as_float(), anticipation.cost)
        classic = solve_classic_mk(anticipation.eta.as_float(), anticipation.nu.as_float(), anticipation.cost)
        assert causal.value == pytest.approx(0.5, abs=1e-9)
        assert classic.value == pytest.approx(0.0, abs=1e-9)

    def test_plans(self, anticipation):
        """Causal optimum is causal, the classic one is not"""
        causal = solve_causal_mk(anticipation.eta, anticipation.nu, anticipation.cost, exact=True)
        classic = solve_classic_mk(anticipation.eta, anticipation.nu, anticipation.cost, exact=True)
        assert is_causal(causal.plan)
        assert not is_causal(classic.plan)
        assert causal.plan.first_marginal() == anticipation.eta
        assert causal.plan.second_marginal() == anticipation.nu

    def test_certificates(self, anticipation):
        """Gap and independent dual check"""
        causal = solve_causal_mk(anticipation.eta, anticipation.nu, anticipation.cost, exact=True)
        problem = TransportProblem.build(anticipation.eta, anticipation.nu, anticipation.cost, True, exact=True)
        assert verify_dual_feasibility(problem, causal) == 0.0
        assert len(causal.dual.causality_multipliers) == 2
        assert causal.residuals['causality'] == 0.0

    def test_monge(self, anticipation):
        """No adapted map pushes eta to nu; the look-ahead map costs 0"""
        value, mapping = solve_causal_monge_bruteforce(anticipation.eta, anticipation.nu, anticipation.cost)
        assert value is None and mapping is None

        value, mapping = solve_classic_monge_bruteforce(anticipation.eta, anticipation.nu, anticipation.cost)
        assert value == 0
        assert mapping == {(0, 0): (0, 0), (0, 1): (1, 1)}


class TestRandomInstances:
    """Ordering and certificates on random instances"""

    @pytest.mark.parametrize("k", range(25))
    def test_causal_above_classic(self, k):
        """S >= T, both certified, causal plan causal"""
        inst = random_instance(3, k)
        causal = solve_causal_mk(inst.eta, inst.nu, inst.cost)
        classic = solve_classic_mk(inst.eta, inst.nu, inst.cost)

        assert causal.is_optimal and classic.is_optimal
        assert causal.value >= classic.value - 1e-9
        assert certificate_ok(causal) and certificate_ok(classic)
        assert is_causal(causal.plan)

    @pytest.mark.parametrize("k", range(10))
    def test_exact_matches_float(self, k):
        """Rational LP and float LP agree"""
        inst = random_instance(5, k)
        exact = value_S(inst.eta, inst.nu, inst.cost, exact=True)
        assert isinstance(exact, Fraction)
        assert float(exact) == pytest.approx(value_S(inst.eta, inst.nu, inst.cost), abs=1e-9)

    @pytest.mark.parametrize("k", range(10))
    def test_degenerate_filtrations(self, k):
        """With discrete partitions every coupling is causal: S = T"""
        inst = random_instance(11, k, filtration='degenerate')
        assert value_S(inst.eta, inst.nu, inst.cost) == pytest.approx(value_T(inst.eta, inst.nu, inst.cost),
                                                                     abs=1e-9)

    @pytest.mark.parametrize("k", range(10))
    def test_monge_above_kantorovich(self, k):
        """Adapted maps are causal plans"""
        inst = random_instance(13, k, max_steps=2, max_alphabet=2)
        value, mapping = solve_causal_monge_bruteforce(inst.eta, inst.nu, inst.cost)
        if value is not None:
            assert float(value) >= float(value_S(inst.eta, inst.nu, inst.cost)) - 1e-9


class TestEdgeCases:
    """Infinite costs, guards and mode checks"""

    def test_identity_is_free(self, uniform_binary, binary_space):
        """Mismatch cost between equal laws has value 0"""
        cost = mismatch_cost(binary_space, binary_space)
        assert value_S(uniform_binary, uniform_binary, cost, exact=True) == 0

    def test_all_infinite_cost(self, uniform_binary):
        """No finite-cost plan: INFEASIBLE with value +inf"""
        cost = np.full((4, 4), np.inf)
        solution = solve_causal_mk(uniform_binary, uniform_binary, cost)
        assert solution.status is SolveStatus.INFEASIBLE
        assert solution.value == float('inf')
        assert value_T(uniform_binary, uniform_binary, cost) == float('inf')

    def test_infinite_entries_avoided(self, uniform_binary):
        """Plans route around +inf entries"""
        cost = np.where(np.eye(4) == 1, 1.0, np.inf)
        assert value_T(uniform_binary, uniform_binary, cost) == pytest.approx(1.0)

    def test_negative_infinite_cost(self, binary_space):
        """-inf costs are rejected"""
        with pytest.raises(ValidationError):
            as_cost_matrix(np.full((4, 4), -np.inf), (4, 4))

    def test_cost_shape(self, uniform_binary):
        """Cost must be |E| x |S|"""
        with pytest.raises(ValidationError):
            solve_classic_mk(uniform_binary, uniform_binary, np.zeros((3, 4)))

    def test_exact_needs_rational(self, binary_space):
        """Float measures cannot run in rational mode"""
        eta = PathMeasure(binary_space, [0.25] * 4)
        with pytest.raises(ValidationError, match="exact"):
            solve_causal_mk(eta, eta, np.zeros((4, 4)), exact=True)

    def test_step_mismatch(self, uniform_binary):
        """Causal problems need equal horizons"""
        nu = PathMeasure.uniform(FilteredPathSpace([2]))
        with pytest.raises(ValidationError, match="steps"):
            solve_causal_mk(uniform_binary, nu, np.zeros((4, 2)))

    def test_monge_size_guard(self):
        """Enumeration is limited to monge_max_paths"""
        space = FilteredPathSpace([3, 3])
        eta = PathMeasure.uniform(space)
        with pytest.raises(SizeGuardError):
            solve_causal_monge_bruteforce(eta, eta, np.zeros((9, 9)), SolverSettings(monge_max_paths=8))


class TestDispatch:
    """Tests for solve()"""

    def test_modes(self, anticipation):
        """Each mode reaches its solver"""
        inst = anticipation
        assert solve(inst.eta, inst.nu, inst.cost, SolveMode.CAUSAL, exact=True).value == Fraction(1, 2)
        assert solve(inst.eta, inst.nu, inst.cost, SolveMode.CLASSIC, exact=True).value == 0

    def test_entropic_needs_epsilon(self, anticipation):
        """causal-entropic without epsilon names the flag"""
        with pytest.raises(ValidationError, match="--epsilon"):
            solve(anticipation.eta, anticipation.nu, anticipation.cost, SolveMode.CAUSAL_ENTROPIC)

    def test_entropic_is_float_only(self, anticipation):
        """causal-entropic rejects --exact"""
        with pytest.raises(ValidationError, match="--exact"):
            solve(anticipation.eta, anticipation.nu, anticipation.cost, SolveMode.CAUSAL_ENTROPIC,
                  epsilon=0.1, exact=True)
