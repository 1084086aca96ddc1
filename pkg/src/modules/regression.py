"""
Conditional expectations by least squares on path-prefix features
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .transport_base import ValidationError

logger = logging.getLogger(__name__)

BASIS = ('const', 'x', 'x2', 'running_max', 'running_integral')


def prefix_features(X: np.ndarray, k: int, dt: float, basis: Sequence[str] = BASIS) -> np.ndarray:
    """
    Features of the prefix X_0..X_k

    Args:
        X: (m, N+1, d) paths
        k: Last visible index
        dt: Step size (for the running integral)
        basis: Subset of const, x, x2, running_max, running_integral

    Returns:
        (m, p) design matrix; non-constant features come per component
    """
    unknown = set(basis) - set(BASIS)
    if unknown:
        raise ValidationError(f"unknown regression features {sorted(unknown)}", 'regression_basis')
    m = X.shape[0]
    x_k = X[:, k, :]
    columns: List[np.ndarray] = []
    for name in basis:
        if name == 'const':
            columns.append(np.ones((m, 1)))
        elif name == 'x':
            columns.append(x_k)
        elif name == 'x2':
            columns.append(x_k ** 2)
        elif name == 'running_max':
            columns.append(np.max(X[:, :k + 1, :], axis=1))
        elif name == 'running_integral':
            columns.append(np.sum(X[:, :k, :], axis=1) * dt)
    return np.concatenate(columns, axis=1)


def drop_degenerate(F: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """
    Column indices kept after dropping constant and collinear columns

    The intercept (first constant column) is kept; columns are added
    greedily while the design keeps full rank.
    """
    scale = np.maximum(np.max(np.abs(F), axis=0), 1.0)
    Fn = F / scale
    keep: List[int] = []
    const_kept = False
    for j in range(F.shape[1]):
        column = Fn[:, j]
        if np.ptp(column) <= tol:
            if not const_kept and np.max(np.abs(column)) > tol:
                keep.append(j)
                const_kept = True
            continue
        trial = Fn[:, keep + [j]]
        if np.linalg.matrix_rank(trial, tol=1e-10 * np.sqrt(F.shape[0])) == len(keep) + 1:
            keep.append(j)
    return np.array(keep, dtype=int)


@dataclass
class RegressionFit:
    """OLS fit of one target on a design matrix"""
    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    columns: np.ndarray
    condition_number: float
    wald_statistic: float
    p_value: float


def fit(F: np.ndarray, y: np.ndarray, tol: float = 1e-10) -> RegressionFit:
    """
    OLS with a Wald test of all coefficients = 0

    Uses the heteroskedasticity-robust (HC0) covariance. A target that is
    identically zero (below tol) gets p = 1.
    """
    columns = drop_degenerate(F)
    design = F[:, columns]
    m, p = design.shape
    if p == 0:
        return RegressionFit(np.zeros(0), np.zeros(m), y.copy(), columns, 1.0, 0.0, 1.0)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    resid = y - fitted
    cond = float(np.linalg.cond(design))
    if np.max(np.abs(y)) <= tol:
        return RegressionFit(coef, fitted, resid, columns, cond, 0.0, 1.0)
    gram_inv = np.linalg.pinv(design.T @ design)
    meat = (design * resid[:, None] ** 2).T @ design
    cov = gram_inv @ meat @ gram_inv
    try:
        wald = float(coef @ np.linalg.solve(cov, coef))
    except np.linalg.LinAlgError:
        wald = float(coef @ np.linalg.pinv(cov) @ coef)
    exact = np.max(np.abs(resid)) <= tol * max(1.0, float(np.max(np.abs(y))))
    if exact or not np.isfinite(wald) or wald < 0:
        # zero residual variance: any nonzero coefficient is significant
        wald = float('inf') if np.max(np.abs(coef)) > tol else 0.0
    p_value = float(stats.chi2.sf(wald, df=p)) if np.isfinite(wald) else 0.0
    return RegressionFit(coef, fitted, resid, columns, cond, wald, p_value)


def conditional_expectation(X: np.ndarray, k: int, dt: float, target: np.ndarray,
                            basis: Sequence[str] = BASIS) -> List[RegressionFit]:
    """E[target | X_0..X_k] per component of a (m, d) target"""
    F = prefix_features(X, k, dt, basis)
    target = target.reshape(target.shape[0], -1)
    return [fit(F, target[:, j]) for j in range(target.shape[1])]


def bonferroni(p_values: Sequence[float], alpha: float) -> bool:
    """True when no test rejects at family level alpha"""
    p_values = list(p_values)
    if not p_values:
        return True
    return min(p_values) * len(p_values) >= alpha


def warn_ill_conditioned(condition_numbers: Sequence[float], limit: float = 1e10,
                         what: Optional[str] = None) -> None:
    worst = max(condition_numbers, default=1.0)
    if worst > limit:
        logger.warning(f"{what or 'regression'}: ill-conditioned design (condition number {worst:.2e})")
