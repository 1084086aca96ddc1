"""
Unit Tests for causality
=========================

Both causality characterizations, the chain equalities and causal
kernel couplings.
"""
import pytest
from fractions import Fraction

import numpy as np

from modules.causality import (
    causal_kernel_coupling,
    causality_constraints,
    constraint_residuals,
    generated_filtration,
    is_causal,
    is_causal_via_conditional_laws,
    kernel_tolerance,
)
from modules.instances import (
    instance_rng,
    random_causal_coupling,
    random_coupling,
    random_measure,
    random_space,
)
from modules.path_space import Coupling, FilteredPathSpace, PathMeasure, graph_coupling, product_coupling
from modules.transport_base import ArithmeticMode, ValidationError


def look_ahead(path):
    """Sends omega to (omega_2, omega_2): uses the second coordinate at time 1"""
    return (path[1], path[1])


class TestIsCausal:
    """Tests for is_causal and is_causal_via_conditional_laws"""

    def test_product_plan_is_causal(self, anticipation):
        """eta (x) nu is always causal"""
        gamma = product_coupling(anticipation.eta, anticipation.nu)
        assert is_causal(gamma)
        assert is_causal_via_conditional_laws(gamma)

    def test_anticipating_graph(self, anticipation):
        """Copying omega_2 into sigma_1 looks ahead"""
        gamma = graph_coupling(look_ahead, anticipation.eta, anticipation.nu.space)
        verdict = is_causal(gamma)

        assert not verdict
        assert verdict.witness.t == 1
        assert {verdict.witness.omega, verdict.witness.omega_prime} == {0, 1}
        assert not is_causal_via_conditional_laws(gamma)

    def test_witness_as_dict(self, anticipation):
        """Witness reports the paths and the S-atom"""
        gamma = graph_coupling(look_ahead, anticipation.eta, anticipation.nu.space)
        data = is_causal(gamma).witness.as_dict(gamma.first_space, gamma.second_space)
        assert data['t'] == 1
        assert sorted(data['values']) == [0, 1]
        assert all(len(p) == 2 for p in data['atom'])

    def test_adapted_graph_is_causal(self, uniform_binary):
        """Graph couplings of adapted maps are causal"""
        gamma = graph_coupling(lambda p: (p[0], 1 - p[1]), uniform_binary)
        assert is_causal(gamma)
        assert is_causal_via_conditional_laws(gamma)

    def test_null_paths_ignored(self, binary_space):
        """Only the eta-positive part of an atom must agree"""
        eta = PathMeasure(binary_space, [Fraction(1, 2), 0, Fraction(1, 2), 0])
        gamma = graph_coupling(lambda p: (p[1], p[0]), eta)
        assert is_causal(gamma)
        assert is_causal_via_conditional_laws(gamma)

    def test_float_tolerance(self, binary_space):
        """Float noise below 1e-9 * max(1, 1/eta_min) is ignored"""
        eta = PathMeasure.uniform(binary_space, ArithmeticMode.FLOAT)
        w = np.full((4, 4), 1 / 16)
        w[0, 0] += 1e-12
        w[0, 2] -= 1e-12
        gamma = Coupling(binary_space, binary_space, w)
        assert kernel_tolerance(eta) == pytest.approx(4e-9)
        assert is_causal(gamma)
        assert is_causal_via_conditional_laws(gamma)

    def test_generated_filtration(self, anticipation):
        """Anticipating plan separates the two E-paths at t=1"""
        gamma = graph_coupling(look_ahead, anticipation.eta, anticipation.nu.space)
        assert generated_filtration(gamma, 1) == ((0,), (1,))
        product = product_coupling(anticipation.eta, anticipation.nu)
        assert generated_filtration(product, 1) == ((0, 1),)


class TestEquivalence:
    """Both characterizations agree on random instances"""

    @pytest.mark.parametrize("k", range(40))
    def test_random_couplings(self, k):
        """Causal-by-construction and arbitrary couplings"""
        rng = instance_rng(7, k)
        E = random_space(rng)
        S = random_space(rng, [int(a) for a in rng.integers(1, 4, size=E.steps)], 'coordinate')
        eta = random_measure(rng, E)

        causal = random_causal_coupling(rng, eta, S)
        assert is_causal(causal)
        assert is_causal_via_conditional_laws(causal)

        other = random_coupling(rng, eta, S)
        assert bool(is_causal(other)) == is_causal_via_conditional_laws(other)


class TestConstraints:
    """Tests for the chain equalities"""

    def test_anticipation_constraints(self, anticipation):
        """One E-atom at t=1, two informative S-atoms: two equalities"""
        constraints = causality_constraints(anticipation.first_space, anticipation.second_space, anticipation.eta)
        assert len(constraints) == 2
        assert {c['t'] for c in constraints.describe()} == {1}

    def test_residuals(self, anticipation):
        """Causal plans satisfy the equalities, the anticipating one does not"""
        constraints = causality_constraints(anticipation.first_space, anticipation.second_space, anticipation.eta)
        product = product_coupling(anticipation.eta, anticipation.nu)
        anticipating = graph_coupling(look_ahead, anticipation.eta, anticipation.nu.space)

        assert constraint_residuals(product, constraints) == 0.0
        assert constraint_residuals(anticipating, constraints) == pytest.approx(0.25)

    def test_matrix_matches_evaluate(self, anticipation):
        """Dense rows reproduce the residuals"""
        constraints = causality_constraints(anticipation.first_space, anticipation.second_space, anticipation.eta)
        gamma = graph_coupling(look_ahead, anticipation.eta, anticipation.nu.space)
        dense = constraints.matrix(ArithmeticMode.FLOAT) @ gamma.weights.astype(float).ravel()
        assert np.allclose(dense, constraints.residuals(gamma))

    def test_eta_on_wrong_space(self, anticipation, uniform_binary):
        """eta must live on E"""
        with pytest.raises(ValidationError):
            causality_constraints(anticipation.first_space, anticipation.second_space, uniform_binary)


class TestCausalKernelCoupling:
    """Tests for causal_kernel_coupling"""

    def test_marginal_and_causality(self, uniform_binary, binary_space):
        """First marginal is eta and the plan is causal"""
        def factor(t, e_atom, prefix, children):
            return [e_atom + 1 + c for c in children]

        gamma = causal_kernel_coupling(uniform_binary, binary_space, factor)
        assert gamma.first_marginal() == uniform_binary
        assert is_causal(gamma)

    def test_needs_coordinate_target(self, uniform_binary):
        """S must carry the coordinate filtration"""
        S = FilteredPathSpace.trivial_until_end([2, 2])
        with pytest.raises(ValidationError, match="coordinate"):
            causal_kernel_coupling(uniform_binary, S, lambda t, a, p, c: [1] * len(c))
