"""
Entropic causal solver - cyclic Bregman projections in the log domain

Minimizes <c, gamma> + eps * KL(gamma | eta x nu) over couplings of (eta, nu)
satisfying the causality equalities. Every constraint set is affine, so
plain cyclic KL projections (rows, columns, then one causality block per
time, E-atom and S-atom) converge without Dykstra corrections.
"""
import logging
from dataclasses import dataclass
from typing import Any, List, Optional

import numpy as np
from scipy.special import logsumexp

from .causality import causality_constraints, constraint_residuals
from .path_space import Coupling, PathMeasure
from .transport_base import (
    ArithmeticMode,
    SolverSettings,
    SolveStatus,
    TransportSolution,
    ValidationError,
)
from .transport_solver import as_cost_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CausalBlock:
    """Rows of one eta-positive E-atom against the columns of one S-atom"""
    t: int
    rows: np.ndarray
    cols: np.ndarray
    log_eta: np.ndarray
    eta: np.ndarray


def causal_blocks(eta: PathMeasure, nu: PathMeasure) -> List[CausalBlock]:
    """Projection blocks, ordered by t so each cycle sweeps times in order"""
    E, S = eta.space, nu.space
    w = eta.weights.astype(float)
    blocks = []
    for t in range(1, E.steps + 1):
        for atom in E.partition(t):
            rows = np.array([i for i in atom if w[i] > 0], dtype=int)
            if len(rows) < 2:
                continue
            for s_atom in S.partition(t):
                if len(s_atom) == S.n_paths:
                    continue
                blocks.append(CausalBlock(t, rows, np.array(s_atom, dtype=int), np.log(w[rows]), w[rows]))
    return blocks


def project_causal_block(log_gamma: np.ndarray, block: CausalBlock) -> None:
    """
    KL projection onto {gamma(omega, A) / eta(omega) equal over the block rows}

    Scales each row of the block so its kernel mass becomes the eta-weighted
    geometric mean of the current kernel masses. A row with zero mass on A
    forces the common value to zero.
    """
    sub = log_gamma[np.ix_(block.rows, block.cols)]
    masses = logsumexp(sub, axis=1)
    if np.any(np.isneginf(masses)):
        log_gamma[np.ix_(block.rows, block.cols)] = -np.inf
        return
    log_kernel = masses - block.log_eta
    target = np.dot(block.eta, log_kernel) / block.eta.sum()
    shift = target - log_kernel
    log_gamma[np.ix_(block.rows, block.cols)] = sub + shift[:, None]


def _kl(log_new: np.ndarray, log_old: np.ndarray) -> float:
    """Generalized KL(new | old) over the common support"""
    finite = np.isfinite(log_new)
    new = np.exp(log_new[finite])
    old = np.exp(log_old[finite])
    return float(np.sum(new * (log_new[finite] - log_old[finite]) - new + old))


def solve_causal_entropic(eta: PathMeasure, nu: PathMeasure, cost: Any, epsilon: float,
                          settings: Optional[SolverSettings] = None) -> TransportSolution:
    """
    Entropic causal transport

    Args:
        eta: First marginal
        nu: Second marginal
        cost: Cost matrix, finite on the support of eta x nu
        epsilon: Regularization strength, > 0
        settings: Iteration limit and KL stopping threshold

    Returns:
        TransportSolution (float mode); value = <c, gamma>, regularized_value
        adds eps * KL(gamma | eta x nu); residuals hold marginal and
        causality errors. Non-convergence is reported in the status.
    """
    settings = settings or SolverSettings()
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}", '--epsilon')
    E, S = eta.space, nu.space
    if E.steps != S.steps:
        raise ValidationError(f"E has {E.steps} steps, S has {S.steps}")
    c = as_cost_matrix(cost, (E.n_paths, S.n_paths)).astype(float)

    a = eta.weights.astype(float)
    b = nu.weights.astype(float)
    with np.errstate(divide='ignore'):
        log_a = np.log(a)
        log_b = np.log(b)
        log_ref = log_a[:, None] + log_b[None, :]
    support = np.isfinite(log_ref)
    if np.any(np.isinf(c[support])):
        raise ValidationError("entropic solver needs finite costs on the support of eta x nu", '--cost')

    log_gamma = np.full(c.shape, -np.inf)
    log_gamma[support] = log_ref[support] - c[support] / epsilon
    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    blocks = causal_blocks(eta, nu)
    logger.info(f"entropic solve: eps={epsilon:g}, {len(blocks)} causality blocks")

    status = SolveStatus.NOT_CONVERGED
    iteration = 0
    change = float('inf')
    for iteration in range(1, settings.entropic_max_iters + 1):
        previous = log_gamma.copy()

        row_mass = logsumexp(log_gamma[rows], axis=1)
        if np.any(np.isneginf(row_mass)):
            logger.warning("entropic solve: a positive row lost all its mass")
            status = SolveStatus.INFEASIBLE
            break
        log_gamma[rows] += (log_a[rows] - row_mass)[:, None]

        col_mass = logsumexp(log_gamma[:, cols], axis=0)
        if np.any(np.isneginf(col_mass)):
            logger.warning("entropic solve: a positive column lost all its mass")
            status = SolveStatus.INFEASIBLE
            break
        log_gamma[:, cols] += (log_b[cols] - col_mass)[None, :]

        for block in blocks:
            project_causal_block(log_gamma, block)

        change = _kl(log_gamma, previous)
        if iteration % 1000 == 0:
            logger.debug(f"entropic iteration {iteration}: KL change {change:.3e}")
        if change <= settings.entropic_kl_tol:
            status = SolveStatus.OPTIMAL
            break

    if status is SolveStatus.INFEASIBLE:
        return TransportSolution(value=float('inf'), plan=None, status=status,
                                 iterations=iteration, mode=ArithmeticMode.FLOAT)
    if status is SolveStatus.NOT_CONVERGED:
        logger.warning(f"entropic solve: no convergence after {iteration} iterations (KL change {change:.3e})")

    # end on the column projection so the plan is an exact probability matrix
    col_mass = logsumexp(log_gamma[:, cols], axis=0)
    log_gamma[:, cols] += (log_b[cols] - col_mass)[None, :]
    weights = np.exp(log_gamma)
    weights /= weights.sum()
    plan = Coupling(E, S, weights, ArithmeticMode.FLOAT)

    finite = weights > 0
    value = float(np.sum(weights[finite] * c[finite]))
    kl_ref = float(np.sum(weights[finite] * (np.log(weights[finite]) - log_ref[finite])))
    constraints = causality_constraints(E, S, eta)
    residuals = {
        'first_marginal': float(np.max(np.abs(weights.sum(axis=1) - a))),
        'second_marginal': float(np.max(np.abs(weights.sum(axis=0) - b))),
        'causality': constraint_residuals(plan, constraints),
        'kl_change': change,
    }
    logger.info(f"entropic solve: {status.value} after {iteration} iterations, value={value:.12g}")
    return TransportSolution(
        value=value, plan=plan, status=status, iterations=iteration, mode=ArithmeticMode.FLOAT,
        residuals=residuals, regularized_value=value + epsilon * kl_ref,
    )
