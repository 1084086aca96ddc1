"""
Unit Tests for path_space
==========================

Filtered path spaces, measures, couplings and kernels.
"""
import pytest
from fractions import Fraction

import numpy as np

from modules.path_space import (
    Coupling,
    FilteredPathSpace,
    PathMeasure,
    conditional_kernel,
    graph_coupling,
    is_adapted_map,
    marginals,
    mix_couplings,
    product_coupling,
    pushforward,
)
from modules.transport_base import ArithmeticMode, KernelUndefinedError, RangeError, ValidationError


class TestFilteredPathSpace:
    """Tests for FilteredPathSpace"""

    def test_coordinate_partitions(self, binary_space):
        """Coordinate filtration groups paths by prefix"""
        assert binary_space.n_paths == 4
        assert binary_space.paths == ((0, 0), (0, 1), (1, 0), (1, 1))
        assert binary_space.partition(1) == ((0, 1), (2, 3))
        assert binary_space.partition(2) == ((0,), (1,), (2,), (3,))
        assert binary_space.is_full_at_end()
        assert not binary_space.is_degenerate()

    def test_named_filtrations(self):
        """Degenerate is discrete everywhere, trivial only at T"""
        degenerate = FilteredPathSpace.degenerate([2, 2])
        trivial = FilteredPathSpace.trivial_until_end([2, 2])

        assert degenerate.is_degenerate()
        assert trivial.partition(1) == ((0, 1, 2, 3),)
        assert trivial.is_full_at_end()

    def test_explicit_subset(self):
        """Explicit path lists are kept sorted"""
        space = FilteredPathSpace([2, 3], paths=[(1, 2), (0, 0)])
        assert space.paths == ((0, 0), (1, 2))
        assert space.partition(1) == ((0,), (1,))

    def test_path_outside_alphabet(self):
        """Paths must fit the alphabets"""
        with pytest.raises(ValidationError):
            FilteredPathSpace([2, 2], paths=[(0, 2)])

    def test_non_refining_filtration(self):
        """Later partitions must refine earlier ones"""
        with pytest.raises(ValidationError, match="refine"):
            FilteredPathSpace([2, 2], filtration=[[[0, 1], [2, 3]], [[0, 2], [1, 3]]])

    def test_partition_must_cover(self):
        """Each partition covers every path exactly once"""
        with pytest.raises(ValidationError):
            FilteredPathSpace([2, 2], filtration=[[[0, 1], [2]], [[0], [1], [2], [3]]])

    def test_index_and_range(self, binary_space):
        """Paths and indices map both ways"""
        assert binary_space.index((1, 0)) == 2
        assert binary_space.index(3) == 3
        with pytest.raises(RangeError):
            binary_space.index((2, 0))

    def test_dict_round_trip(self):
        """to_dict/from_dict keep paths and filtration"""
        space = FilteredPathSpace([2, 2], paths=[(0, 0), (0, 1), (1, 1)])
        again = FilteredPathSpace.from_dict(space.to_dict())
        assert again == space
        assert 'paths' in space.to_dict()

    def test_steps_mismatch(self):
        """A stated step count must match the alphabets"""
        with pytest.raises(ValidationError, match="steps"):
            FilteredPathSpace.from_dict({'steps': 3, 'alphabets': [2, 2]}, 'space.json')


class TestPathMeasure:
    """Tests for PathMeasure"""

    def test_exact_mode_for_rationals(self, skewed_binary):
        """Rational weights select exact mode"""
        assert skewed_binary.mode is ArithmeticMode.EXACT
        assert skewed_binary[(0, 0)] == Fraction(1, 2)
        assert list(skewed_binary.positive()) == [0, 1, 2]

    def test_string_weights(self, binary_space):
        """Fraction strings like 1/3 parse exactly"""
        measure = PathMeasure(binary_space, ["1/3", "1/3", "1/6", "1/6"])
        assert measure.mode is ArithmeticMode.EXACT
        assert sum(measure.weights) == 1

    def test_float_weights(self, binary_space):
        """Float weights stay floats"""
        measure = PathMeasure(binary_space, [0.1, 0.2, 0.3, 0.4])
        assert measure.mode is ArithmeticMode.FLOAT
        assert measure.weights.dtype == float

    def test_mass_must_be_one(self, binary_space):
        """Weights must sum to one"""
        with pytest.raises(ValidationError, match="sum"):
            PathMeasure(binary_space, [Fraction(1, 2)] * 4)

    def test_negative_weight(self, binary_space):
        """Negative weights are rejected"""
        with pytest.raises(ValidationError, match="nonnegative"):
            PathMeasure(binary_space, [Fraction(1), Fraction(1), Fraction(-1), Fraction(0)])

    def test_exact_size_guard(self):
        """Exact mode is limited to 64 paths"""
        space = FilteredPathSpace([5, 5, 5])
        with pytest.raises(ValidationError, match="exact mode"):
            PathMeasure.uniform(space, ArithmeticMode.EXACT)
        assert PathMeasure.uniform(space).mode is ArithmeticMode.FLOAT


class TestCoupling:
    """Tests for Coupling and ConditionalKernel"""

    def test_product_marginals(self, skewed_binary, uniform_binary):
        """Marginals of eta (x) nu are eta and nu"""
        gamma = product_coupling(skewed_binary, uniform_binary)
        first, second = marginals(gamma)
        assert first == skewed_binary
        assert second == uniform_binary

    def test_kernel_reconstruction(self, skewed_binary, uniform_binary):
        """eta(omega) Theta^omega rebuilds gamma exactly"""
        gamma = product_coupling(skewed_binary, uniform_binary)
        kernel = conditional_kernel(gamma)
        assert kernel.defined_on == [0, 1, 2]
        assert kernel.reconstruct(skewed_binary).allclose(gamma, tol=0.0)
        assert kernel.mass((0, 1), [0, 1]) == Fraction(1, 2)

    def test_kernel_undefined_on_null_path(self, skewed_binary, uniform_binary):
        """Null paths carry no kernel row"""
        kernel = conditional_kernel(product_coupling(skewed_binary, uniform_binary))
        with pytest.raises(KernelUndefinedError):
            kernel.row((1, 1))

    def test_shape_mismatch(self, binary_space):
        """The weight matrix must be |E| x |S|"""
        with pytest.raises(ValidationError, match="shape"):
            Coupling(binary_space, binary_space, np.full((2, 4), Fraction(1, 8)))

    def test_cost_ignores_infinite_cost_on_null_entries(self, uniform_binary):
        """0 * inf counts as 0"""
        gamma = graph_coupling(lambda p: p, uniform_binary)
        cost = np.where(np.eye(4) == 1, 0, np.inf)
        assert gamma.cost(cost) == 0

    def test_mixture(self, skewed_binary, uniform_binary):
        """Mixtures keep the marginals"""
        first = product_coupling(skewed_binary, uniform_binary)
        second = graph_coupling(lambda p: (p[0], 0), skewed_binary, uniform_binary.space)
        mixed = mix_couplings(first, second, Fraction(1, 3))
        assert mixed.first_marginal() == skewed_binary
        with pytest.raises(ValidationError):
            mix_couplings(first, second, 2)


class TestMaps:
    """Tests for pushforward, graph couplings and adaptedness"""

    def test_pushforward(self, uniform_binary, binary_space):
        """U_* eta adds the mass of merged paths"""
        nu = pushforward(lambda p: (p[0], 0), uniform_binary, binary_space)
        assert list(nu.weights) == [Fraction(1, 2), 0, Fraction(1, 2), 0]

    def test_graph_coupling_marginals(self, uniform_binary, binary_space):
        """(I x U)_* eta has marginals eta and U_* eta"""
        U = {(0, 0): (1, 1), (0, 1): (1, 0), (1, 0): (0, 1), (1, 1): (0, 0)}
        gamma = graph_coupling(U, uniform_binary)
        assert gamma.first_marginal() == uniform_binary
        assert gamma.second_marginal() == pushforward(U, uniform_binary, binary_space)

    def test_map_out_of_range(self, uniform_binary):
        """Images must lie in the target path set"""
        target = FilteredPathSpace([2, 2], paths=[(0, 0), (1, 1)])
        with pytest.raises(RangeError):
            graph_coupling(lambda p: p, uniform_binary, target)

    def test_adapted_and_anticipating_maps(self, uniform_binary, binary_space):
        """Identity is adapted; swapping the coordinates looks ahead"""
        assert is_adapted_map(lambda p: p, binary_space, binary_space, uniform_binary)
        assert not is_adapted_map(lambda p: (p[1], p[0]), binary_space, binary_space, uniform_binary)

    def test_adaptedness_ignores_null_paths(self, binary_space):
        """Only eta-positive paths of an atom need to agree"""
        eta = PathMeasure(binary_space, [Fraction(1, 2), 0, Fraction(1, 2), 0])
        U = {(0, 0): (0, 0), (0, 1): (1, 1), (1, 0): (1, 0), (1, 1): (0, 0)}
        assert is_adapted_map(U, binary_space, binary_space, eta)

    def test_adaptedness_needs_equal_steps(self, uniform_binary, binary_space):
        """E and S must share the time index"""
        longer = FilteredPathSpace.coordinate([2, 2, 2])
        with pytest.raises(ValidationError, match="2 steps, S has 3"):
            is_adapted_map(lambda p: p + (0,), binary_space, longer, uniform_binary)
