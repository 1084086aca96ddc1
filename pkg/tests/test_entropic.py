"""
Unit Tests for entropic_solver
===============================

Log-domain Bregman projections for entropic causal transport.
"""
import pytest

import numpy as np

from modules.causality import is_causal
from modules.entropic_solver import causal_blocks, project_causal_block, solve_causal_entropic
from modules.instances import random_instance
from modules.path_space import product_coupling
from modules.transport_base import SolveStatus, SolverSettings, ValidationError
from modules.transport_solver import value_S


class TestEntropicSolver:
    """Tests for solve_causal_entropic"""

    def test_zero_cost_gives_product(self, skewed_binary, uniform_binary):
        """Without cost the reference eta x nu is already optimal"""
        solution = solve_causal_entropic(skewed_binary, uniform_binary, np.zeros((4, 4)), 0.1)

        assert solution.status is SolveStatus.OPTIMAL
        assert solution.iterations == 1
        assert solution.value == 0.0
        assert solution.regularized_value == pytest.approx(0.0, abs=1e-14)
        assert solution.plan.allclose(product_coupling(skewed_binary, uniform_binary).as_float(), tol=1e-14)

    def test_anticipation_value(self, anticipation):
        """Every causal plan of the instance costs 1/2"""
        solution = solve_causal_entropic(anticipation.eta, anticipation.nu, anticipation.cost, 1e-3)

        assert solution.status is SolveStatus.OPTIMAL
        assert solution.value == pytest.approx(0.5, abs=1e-6)
        assert solution.residuals['causality'] <= 1e-9
        assert is_causal(solution.plan)

    def test_marginals_exact(self, anticipation):
        """The plan ends on a column projection"""
        solution = solve_causal_entropic(anticipation.eta, anticipation.nu, anticipation.cost, 0.05)
        assert solution.residuals['second_marginal'] <= 1e-12
        assert solution.residuals['first_marginal'] <= 1e-9

    @pytest.mark.parametrize("k", range(3))
    def test_close_to_lp(self, k):
        """Small epsilon approaches the causal LP value"""
        inst = random_instance(17, k, max_steps=2, max_alphabet=2)
        solution = solve_causal_entropic(inst.eta, inst.nu, inst.cost, 1e-3)
        assert solution.value == pytest.approx(float(value_S(inst.eta, inst.nu, inst.cost)), abs=5e-3)

    def test_iteration_limit(self, anticipation):
        """An exhausted budget is reported, not raised"""
        solution = solve_causal_entropic(anticipation.eta, anticipation.nu, anticipation.cost, 1e-3,
                                         SolverSettings(entropic_max_iters=1, entropic_kl_tol=0.0))
        assert solution.status is SolveStatus.NOT_CONVERGED
        assert solution.iterations == 1

    def test_bad_epsilon(self, anticipation):
        """epsilon must be positive"""
        with pytest.raises(ValidationError, match="epsilon"):
            solve_causal_entropic(anticipation.eta, anticipation.nu, anticipation.cost, 0.0)

    def test_infinite_cost_on_support(self, uniform_binary):
        """Costs must be finite where eta x nu charges"""
        cost = np.zeros((4, 4))
        cost[0, 0] = np.inf
        with pytest.raises(ValidationError, match="finite"):
            solve_causal_entropic(uniform_binary, uniform_binary, cost, 0.1)


class TestCausalBlocks:
    """Tests for the causality projections"""

    def test_blocks_of_anticipation(self, anticipation):
        """One E-atom with two positive paths, two informative S-atoms"""
        blocks = causal_blocks(anticipation.eta, anticipation.nu)
        assert len(blocks) == 2
        assert all(list(b.rows) == [0, 1] for b in blocks)

    def test_projection_equalizes_kernels(self, anticipation):
        """After projection both rows put the same kernel mass on the block"""
        block = causal_blocks(anticipation.eta, anticipation.nu)[0]
        log_gamma = np.log(np.array([[0.3, 0.1, 0.05, 0.05], [0.05, 0.05, 0.2, 0.2]]))
        project_causal_block(log_gamma, block)

        masses = np.exp(log_gamma[:, block.cols]).sum(axis=1) / block.eta
        assert masses[0] == pytest.approx(masses[1])

    @staticmethod
    def _kl(p, q):
        return float(np.sum(p * np.log(p / q) - p + q))

    def test_projection_is_kl_minimal(self, anticipation):
        """No feasible perturbation of the projection lowers KL to the input"""
        block = causal_blocks(anticipation.eta, anticipation.nu)[0]
        q = np.array([[0.3, 0.1, 0.05, 0.05], [0.05, 0.05, 0.2, 0.2]])
        log_p = np.log(q)
        project_causal_block(log_p, block)
        p = np.exp(log_p)

        # stationarity: log(p/q) is one scale per row on the block, zero elsewhere
        ratio = np.log(p / q)
        scales = ratio[np.ix_(block.rows, block.cols)]
        assert np.ptp(scales, axis=1) == pytest.approx([0.0, 0.0], abs=1e-12)
        others = np.setdiff1d(np.arange(4), block.cols)
        assert np.abs(ratio[:, others]).max() <= 1e-12
        assert np.dot(block.eta, scales[:, 0]) == pytest.approx(0.0, abs=1e-12)

        rng = np.random.default_rng(3)
        base = self._kl(p, q)
        for _ in range(20):
            direction = rng.normal(size=q.shape)
            kernel = direction[:, block.cols].sum(axis=1) / block.eta
            # keep equal kernel masses on the block
            direction[block.rows, block.cols[0]] += (kernel.mean() - kernel) * block.eta
            h = 1e-5
            slope = (self._kl(p + h * direction, q) - self._kl(p - h * direction, q)) / (2 * h)
            assert slope == pytest.approx(0.0, abs=1e-5)
            assert self._kl(p + 1e-3 * direction, q) >= base
            assert self._kl(p - 1e-3 * direction, q) >= base
