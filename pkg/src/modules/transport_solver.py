"""
Transport solver - classic and causal Monge-Kantorovich problems

LP formulation over coupling entries: row sums = eta (eta-positive rows only),
column sums = nu, plus the causality chain equalities in causal mode. Entries
with infinite cost or on eta-null rows are eliminated before the simplex.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .causality import CausalityConstraintSet, causality_constraints, constraint_residuals
from .path_space import Coupling, PathMeasure, common_mode
from .simplex import LPResult, solve_standard_form
from .transport_base import (
    ArithmeticMode,
    DualCertificate,
    NonConvergenceError,
    SizeGuardError,
    SolverSettings,
    SolveMode,
    SolveStatus,
    TransportSolution,
    ValidationError,
)
from .transport_utils import parse_weight, zero

logger = logging.getLogger(__name__)

Path = Tuple[int, ...]


# ============================================================================
# COST MATRIX / PROBLEM
# ============================================================================

def as_cost_matrix(cost: Any, shape: Tuple[int, int], source: Optional[str] = None) -> np.ndarray:
    """
    Validates a cost matrix: no NaN, no -inf, +inf allowed

    Returns an object array of Fractions / floats.
    """
    raw = np.asarray(cost, dtype=object)
    if raw.shape != shape:
        raise ValidationError(f"cost shape {raw.shape} != {shape}", source)
    out = np.empty(shape, dtype=object)
    for idx, value in np.ndenumerate(raw):
        entry = parse_weight(value, source)
        if isinstance(entry, float):
            if np.isnan(entry):
                raise ValidationError(f"cost entry {idx} is NaN", source)
            if entry == float('-inf'):
                raise ValidationError(f"cost entry {idx} is -inf", source)
        out[idx] = entry
    return out


@dataclass
class TransportProblem:
    """
    LP data of one Monge-Kantorovich instance

    `variables` lists the kept coupling entries (i, j); rows are ordered as
    eta-positive row sums, column sums, causality equalities.
    """
    eta: PathMeasure
    nu: PathMeasure
    cost: np.ndarray
    mode: ArithmeticMode
    constraints: Optional[CausalityConstraintSet] = None
    variables: List[Tuple[int, int]] = field(default_factory=list)
    row_index: List[int] = field(default_factory=list)

    @classmethod
    def build(cls, eta: PathMeasure, nu: PathMeasure, cost: Any, causal: bool,
              exact: bool = False, settings: Optional[SolverSettings] = None) -> 'TransportProblem':
        settings = settings or SolverSettings()
        shape = (eta.space.n_paths, nu.space.n_paths)
        c = as_cost_matrix(cost, shape)
        if exact:
            if common_mode(eta.mode, nu.mode) is not ArithmeticMode.EXACT:
                raise ValidationError("exact mode needs rational eta and nu", '--exact')
            if max(shape) > settings.exact_max_paths:
                raise ValidationError(
                    f"exact mode limited to {settings.exact_max_paths} paths per side", '--exact')
            for value in c.ravel():
                if isinstance(value, float) and np.isfinite(value):
                    raise ValidationError("exact mode needs rational cost entries", '--exact')
            mode = ArithmeticMode.EXACT
        else:
            mode = ArithmeticMode.FLOAT
        constraints = causality_constraints(eta.space, nu.space, eta) if causal else None
        problem = cls(eta=eta, nu=nu, cost=c, mode=mode, constraints=constraints)
        problem.row_index = [int(i) for i in eta.positive()]
        problem.variables = [
            (i, j) for i in problem.row_index for j in range(shape[1])
            if not (isinstance(c[i, j], float) and np.isinf(c[i, j]))
        ]
        return problem

    def _convert(self, value: Any) -> Any:
        return float(value) if self.mode is ArithmeticMode.FLOAT else value

    def standard_form(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(c, A, b) over the kept variables"""
        n_rows = len(self.row_index)
        n_cols = self.nu.space.n_paths
        n_con = len(self.constraints) if self.constraints is not None else 0
        position = {var: k for k, var in enumerate(self.variables)}
        row_of = {i: r for r, i in enumerate(self.row_index)}

        A = np.empty((n_rows + n_cols + n_con, len(self.variables)), dtype=object)
        A[:] = zero(self.mode)
        b = np.empty(n_rows + n_cols + n_con, dtype=object)
        b[:] = zero(self.mode)
        c = np.array([self._convert(self.cost[i, j]) for i, j in self.variables], dtype=object)

        for k, (i, j) in enumerate(self.variables):
            A[row_of[i], k] = self._convert(1)
            A[n_rows + j, k] = self._convert(1)
        for r, i in enumerate(self.row_index):
            b[r] = self._convert(self.eta.weights[i])
        for j in range(n_cols):
            b[n_rows + j] = self._convert(self.nu.weights[j])
        if self.constraints is not None:
            for r, con in enumerate(self.constraints):
                for var, value in con.coefficients().items():
                    if var in position:
                        A[n_rows + n_cols + r, position[var]] = self._convert(value)

        if self.mode is ArithmeticMode.FLOAT:
            return c.astype(float), A.astype(float), b.astype(float)
        return c, A, b

    def plan_from(self, x: np.ndarray) -> Coupling:
        matrix = np.empty((self.eta.space.n_paths, self.nu.space.n_paths), dtype=object)
        matrix[:] = zero(self.mode)
        for k, (i, j) in enumerate(self.variables):
            matrix[i, j] = x[k]
        if self.mode is ArithmeticMode.FLOAT:
            matrix = matrix.astype(float)
            matrix /= matrix.sum()
        return Coupling(self.eta.space, self.nu.space, matrix, self.mode)

    def dual_from(self, y: np.ndarray) -> DualCertificate:
        n_rows = len(self.row_index)
        n_cols = self.nu.space.n_paths
        return DualCertificate(
            first_potentials={i: y[r] for r, i in enumerate(self.row_index)},
            second_potentials={j: y[n_rows + j] for j in range(n_cols)},
            causality_multipliers=list(y[n_rows + n_cols:]),
        )


# ============================================================================
# LP SOLVERS
# ============================================================================

def _solve_lp(eta: PathMeasure, nu: PathMeasure, cost: Any, causal: bool, exact: bool,
              settings: Optional[SolverSettings]) -> TransportSolution:
    settings = settings or SolverSettings()
    if eta.space.steps != nu.space.steps and causal:
        raise ValidationError(f"E has {eta.space.steps} steps, S has {nu.space.steps}")
    problem = TransportProblem.build(eta, nu, cost, causal, exact, settings)
    c, A, b = problem.standard_form()
    kind = 'causal' if causal else 'classic'
    logger.info(f"{kind} LP: {len(problem.variables)} variables, {A.shape[0]} rows, mode={problem.mode.value}")

    result: LPResult = solve_standard_form(c, A, b, exact=problem.mode is ArithmeticMode.EXACT, settings=settings)
    if result.status is not SolveStatus.OPTIMAL:
        logger.warning(f"{kind} LP ended with status {result.status.value}")
        value = float('inf') if result.status is SolveStatus.INFEASIBLE else None
        return TransportSolution(value=value, plan=None, status=result.status,
                                 iterations=result.iterations, mode=problem.mode)

    plan = problem.plan_from(result.x)
    dual = problem.dual_from(result.duals)
    value = result.value
    dual_value = b.dot(result.duals)
    gap = value - dual_value
    solution = TransportSolution(
        value=value, plan=plan, status=SolveStatus.OPTIMAL, dual=dual, gap=gap,
        iterations=result.iterations, mode=problem.mode,
    )
    dual.max_violation = verify_dual_feasibility(problem, solution)
    solution.residuals = _plan_residuals(problem, plan)
    logger.info(f"{kind} LP optimal: value={float(value):.12g}, gap={float(gap):.2e}, pivots={result.iterations}")
    return solution


def _plan_residuals(problem: TransportProblem, plan: Coupling) -> Dict[str, float]:
    w = plan.weights.astype(float)
    residuals = {
        'first_marginal': float(np.max(np.abs(w.sum(axis=1) - problem.eta.weights.astype(float)))),
        'second_marginal': float(np.max(np.abs(w.sum(axis=0) - problem.nu.weights.astype(float)))),
    }
    if problem.constraints is not None:
        residuals['causality'] = constraint_residuals(plan, problem.constraints)
    return residuals


def verify_dual_feasibility(problem: TransportProblem, solution: TransportSolution) -> float:
    """
    Independent dual check

    Recomputes every reduced cost c_ij - phi_i - psi_j - sum_k lambda_k a_k,ij
    from the constraint data and returns max(0, -min reduced cost).
    """
    dual = solution.dual
    if dual is None:
        raise ValidationError("solution carries no dual certificate")
    reduced: Dict[Tuple[int, int], Any] = {
        (i, j): problem.cost[i, j] - dual.first_potentials[i] - dual.second_potentials[j]
        for i, j in problem.variables
    }
    if problem.constraints is not None:
        for lam, con in zip(dual.causality_multipliers, problem.constraints):
            for var, coef in con.coefficients().items():
                if var in reduced:
                    reduced[var] = reduced[var] - lam * coef
    if not reduced:
        return 0.0
    worst = min(float(v) for v in reduced.values())
    return max(0.0, -worst)


def solve_classic_mk(eta: PathMeasure, nu: PathMeasure, cost: Any, exact: bool = False,
                     settings: Optional[SolverSettings] = None) -> TransportSolution:
    """T(nu | eta): min <c, gamma> over all couplings of (eta, nu)"""
    return _solve_lp(eta, nu, cost, False, exact, settings)


def solve_causal_mk(eta: PathMeasure, nu: PathMeasure, cost: Any, exact: bool = False,
                    settings: Optional[SolverSettings] = None) -> TransportSolution:
    """S(nu | eta): min <c, gamma> over causal couplings of (eta, nu)"""
    return _solve_lp(eta, nu, cost, True, exact, settings)


def _value(solution: TransportSolution) -> Any:
    if solution.status is SolveStatus.NOT_CONVERGED:
        raise NonConvergenceError("LP did not converge within the iteration limit")
    if solution.status is SolveStatus.UNBOUNDED_GUARD:
        raise NonConvergenceError("LP reported an unbounded direction")
    return solution.value


def value_S(eta: PathMeasure, nu: PathMeasure, cost: Any, exact: bool = False,
            settings: Optional[SolverSettings] = None) -> Any:
    """Causal value; +inf when no causal plan has finite cost"""
    return _value(solve_causal_mk(eta, nu, cost, exact, settings))


def value_T(eta: PathMeasure, nu: PathMeasure, cost: Any, exact: bool = False,
            settings: Optional[SolverSettings] = None) -> Any:
    """Classic value; +inf when no plan has finite cost"""
    return _value(solve_classic_mk(eta, nu, cost, exact, settings))


# ============================================================================
# MONGE BRUTE FORCE
# ============================================================================

def _monge_search(eta: PathMeasure, nu: PathMeasure, cost: Any, adapted: bool,
                  settings: Optional[SolverSettings]) -> Tuple[Optional[Any], Optional[Dict[Path, Path]]]:
    settings = settings or SolverSettings()
    E, S = eta.space, nu.space
    if E.n_paths > settings.monge_max_paths or S.n_paths > settings.monge_max_paths:
        raise SizeGuardError(
            f"Monge enumeration limited to {settings.monge_max_paths} paths per side "
            f"(got {E.n_paths}x{S.n_paths})"
        )
    if adapted and E.steps != S.steps:
        raise ValidationError(f"E has {E.steps} steps, S has {S.steps}")
    c = as_cost_matrix(cost, (E.n_paths, S.n_paths))
    mode = common_mode(eta.mode, nu.mode)
    tol = 0.0 if mode is ArithmeticMode.EXACT else settings.float_eq_tol * 10
    sources = [int(i) for i in eta.positive()]
    residual = list(nu.weights)
    row_min = [min(c[i, :]) for i in sources]
    # optimistic bound of the unassigned tail
    tail = [zero(mode)] * (len(sources) + 1)
    for k in range(len(sources) - 1, -1, -1):
        tail[k] = tail[k + 1] + eta.weights[sources[k]] * row_min[k]

    best: Dict[str, Any] = {'value': None, 'map': None}
    assignment: Dict[int, int] = {}
    atom_target: Dict[Tuple[int, int], int] = {}

    def consistent(i: int, j: int) -> List[Tuple[int, int]]:
        """Adaptedness bookkeeping; returns the keys newly fixed or raises StopIteration"""
        fixed = []
        for t in range(1, E.steps + 1):
            key = (t, int(E.atom_ids(t)[i]))
            s_atom = int(S.atom_ids(t)[j])
            if key in atom_target:
                if atom_target[key] != s_atom:
                    for k in fixed:
                        del atom_target[k]
                    raise StopIteration
            else:
                atom_target[key] = s_atom
                fixed.append(key)
        return fixed

    def search(k: int, running: Any) -> None:
        if best['value'] is not None and running + tail[k] >= best['value']:
            return
        if k == len(sources):
            if all(abs(r) <= tol for r in residual):
                best['value'] = running
                best['map'] = dict(assignment)
            return
        i = sources[k]
        mass = eta.weights[i]
        for j in range(S.n_paths):
            if residual[j] - mass < -tol or (isinstance(c[i, j], float) and np.isinf(c[i, j])):
                continue
            fixed: List[Tuple[int, int]] = []
            if adapted:
                try:
                    fixed = consistent(i, j)
                except StopIteration:
                    continue
            residual[j] = residual[j] - mass
            assignment[i] = j
            search(k + 1, running + mass * c[i, j])
            del assignment[i]
            residual[j] = residual[j] + mass
            for key in fixed:
                del atom_target[key]

    search(0, zero(mode))
    if best['map'] is None:
        logger.info("Monge brute force: no admissible map")
        return None, None
    mapping = {E.paths[i]: S.paths[j] for i, j in best['map'].items()}
    return best['value'], mapping


def solve_causal_monge_bruteforce(eta: PathMeasure, nu: PathMeasure, cost: Any,
                                  settings: Optional[SolverSettings] = None
                                  ) -> Tuple[Optional[Any], Optional[Dict[Path, Path]]]:
    """
    Best adapted map U with U_* eta = nu, by enumeration

    Returns:
        (value, map on eta-positive paths) or (None, None) when no such map exists
    """
    return _monge_search(eta, nu, cost, True, settings)


def solve_classic_monge_bruteforce(eta: PathMeasure, nu: PathMeasure, cost: Any,
                                   settings: Optional[SolverSettings] = None
                                   ) -> Tuple[Optional[Any], Optional[Dict[Path, Path]]]:
    """Best map U with U_* eta = nu, adaptedness not required"""
    return _monge_search(eta, nu, cost, False, settings)


def solve(eta: PathMeasure, nu: PathMeasure, cost: Any, mode: SolveMode, epsilon: Optional[float] = None,
          exact: bool = False, settings: Optional[SolverSettings] = None) -> TransportSolution:
    """Dispatch on SolveMode (the `solve --mode` flag)"""
    if mode is SolveMode.CLASSIC:
        return solve_classic_mk(eta, nu, cost, exact, settings)
    if mode is SolveMode.CAUSAL:
        return solve_causal_mk(eta, nu, cost, exact, settings)
    from .entropic_solver import solve_causal_entropic
    if epsilon is None:
        raise ValidationError("causal-entropic mode needs an epsilon", '--epsilon')
    if exact:
        raise ValidationError("causal-entropic mode runs in float arithmetic only", '--exact')
    return solve_causal_entropic(eta, nu, cost, epsilon, settings)
