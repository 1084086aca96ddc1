"""
Causality - filtration-respecting couplings

A coupling gamma with first marginal eta is causal when, for every t, the
kernel values Theta^omega(A) on the time-t atoms A of S are measurable with
respect to the eta-augmented time-t partition of E. Two independent checks
are provided (generated-filtration inclusion and conditional laws), plus the
linearization used by the LP and entropic solvers.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .path_space import (
    Coupling,
    FilteredPathSpace,
    Partition,
    PathMeasure,
    conditional_kernel,
)
from .transport_base import ArithmeticMode, SolverSettings, ValidationError
from .transport_utils import values_equal, zero

logger = logging.getLogger(__name__)


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class CausalityWitness:
    """Two eta-positive paths in one E-atom with different kernel mass on an S-atom"""
    t: int
    omega: int
    omega_prime: int
    s_atom: Tuple[int, ...]
    values: Tuple[Any, Any]

    def as_dict(self, first: FilteredPathSpace, second: FilteredPathSpace) -> Dict[str, Any]:
        return {
            't': self.t,
            'omega': list(first.paths[self.omega]),
            'omega_prime': list(first.paths[self.omega_prime]),
            'atom': [list(second.paths[j]) for j in self.s_atom],
            'values': list(self.values),
        }


@dataclass(frozen=True)
class CausalityCheck:
    """Outcome of is_causal; truthy when causal"""
    causal: bool
    witness: Optional[CausalityWitness] = None

    def __bool__(self) -> bool:
        return self.causal


@dataclass(frozen=True)
class CausalityConstraint:
    """
    gamma({omega} x A) * eta(omega') - gamma({omega'} x A) * eta(omega) = 0

    Tagged with the time, the E-atom id and the S-atom id it comes from.
    """
    t: int
    e_atom: int
    s_atom: int
    omega: int
    omega_prime: int
    targets: Tuple[int, ...]
    eta_omega: Any
    eta_omega_prime: Any

    def coefficients(self) -> Dict[Tuple[int, int], Any]:
        coef: Dict[Tuple[int, int], Any] = {}
        for j in self.targets:
            coef[(self.omega, j)] = self.eta_omega_prime
            coef[(self.omega_prime, j)] = -self.eta_omega
        return coef

    def evaluate(self, weights: np.ndarray) -> Any:
        cols = list(self.targets)
        return (sum(weights[self.omega, cols]) * self.eta_omega_prime
                - sum(weights[self.omega_prime, cols]) * self.eta_omega)


@dataclass
class CausalityConstraintSet:
    """Linear equalities equivalent to causality for couplings with first marginal eta"""
    first_space: FilteredPathSpace
    second_space: FilteredPathSpace
    eta: PathMeasure
    constraints: List[CausalityConstraint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def matrix(self, mode: Optional[ArithmeticMode] = None) -> np.ndarray:
        """Dense rows over the row-major flattened coupling entries"""
        mode = mode or self.eta.mode
        n_s = self.second_space.n_paths
        rows = np.empty((len(self.constraints), self.first_space.n_paths * n_s), dtype=object)
        rows[:] = zero(mode)
        for r, con in enumerate(self.constraints):
            for (i, j), value in con.coefficients().items():
                rows[r, i * n_s + j] = value
        if mode is ArithmeticMode.FLOAT:
            rows = rows.astype(float)
        return rows

    def residuals(self, gamma: Coupling) -> np.ndarray:
        return np.array([float(con.evaluate(gamma.weights)) for con in self.constraints], dtype=float)

    def describe(self) -> List[Dict[str, Any]]:
        return [
            {'t': c.t, 'e_atom': c.e_atom, 's_atom': c.s_atom,
             'omega': c.omega, 'omega_prime': c.omega_prime}
            for c in self.constraints
        ]


# ============================================================================
# HELPERS
# ============================================================================

def kernel_tolerance(eta: PathMeasure, settings: Optional[SolverSettings] = None) -> float:
    """Float kernel-equality tolerance 1e-9 * max(1, 1/eta_min)"""
    settings = settings or SolverSettings()
    positive = [float(w) for w in eta.weights if w > 0]
    return settings.kernel_rel_tol * max(1.0, 1.0 / min(positive))


def _informative_atoms(space: FilteredPathSpace, t: int) -> Partition:
    """Time-t atoms of S, without the whole set (its kernel mass is always 1)"""
    return tuple(atom for atom in space.partition(t) if len(atom) < space.n_paths)


def _kernel_masses(gamma: Coupling, eta: PathMeasure, t: int) -> Tuple[Partition, Dict[int, List[Any]]]:
    kernel = conditional_kernel(gamma)
    atoms = _informative_atoms(gamma.second_space, t)
    masses = {i: [kernel.mass(i, atom) for atom in atoms] for i in kernel.defined_on}
    return atoms, masses


# ============================================================================
# OPERATIONS
# ============================================================================

def generated_filtration(gamma: Coupling, t: int, tol: Optional[float] = None) -> Partition:
    """
    Partition of eta-positive paths induced by omega -> (Theta^omega(A))_A

    Two paths share a cell iff all their kernel values on time-t S-atoms agree
    (exactly in rational mode, within `tol` in float mode).

    Args:
        gamma: Coupling
        t: Time 1..T
        tol: Float tolerance (default 1e-12)
    """
    tol = SolverSettings().float_eq_tol if tol is None else tol
    eta = gamma.first_marginal()
    atoms, masses = _kernel_masses(gamma, eta, t)
    cells: List[List[int]] = []
    keys: List[List[Any]] = []
    for i in sorted(masses):
        vector = masses[i]
        for cell, key in zip(cells, keys):
            if all(values_equal(a, b, gamma.mode, tol) for a, b in zip(vector, key)):
                cell.append(i)
                break
        else:
            cells.append([i])
            keys.append(vector)
    return tuple(tuple(c) for c in cells)


def is_causal(gamma: Coupling, settings: Optional[SolverSettings] = None) -> CausalityCheck:
    """
    Causality by inclusion of the generated filtration

    For every t, each eta-positive part of a time-t E-atom must fall inside
    one cell of generated_filtration(gamma, t).

    Returns:
        CausalityCheck with a witness (t, omega, omega', A) on failure
    """
    eta = gamma.first_marginal()
    tol = kernel_tolerance(eta, settings)
    first = gamma.first_space
    for t in range(1, first.steps + 1):
        atoms, masses = _kernel_masses(gamma, eta, t)
        if not atoms:
            continue
        cells = generated_filtration(gamma, t, tol)
        cell_of = {i: c for c, cell in enumerate(cells) for i in cell}
        for atom in first.partition(t):
            positive = [i for i in atom if i in masses]
            for i in positive[1:]:
                if cell_of[i] == cell_of[positive[0]]:
                    continue
                ref = positive[0]
                for a, s_atom in enumerate(atoms):
                    if not values_equal(masses[ref][a], masses[i][a], gamma.mode, tol):
                        witness = CausalityWitness(t, ref, i, s_atom, (masses[ref][a], masses[i][a]))
                        logger.debug(f"not causal at t={t}: paths {ref} and {i} differ on S-atom {s_atom}")
                        return CausalityCheck(False, witness)
    return CausalityCheck(True)


def is_causal_via_conditional_laws(gamma: Coupling, settings: Optional[SolverSettings] = None) -> bool:
    """
    Causality by conditional laws

    For every t and S-atom A, omega -> gamma({omega} x A) / eta(omega) must
    equal its eta-weighted average over each E-atom, i.e. the conditional
    law of the target given the whole source path agrees with the one given
    the time-t source information.
    """
    eta = gamma.first_marginal()
    tol = kernel_tolerance(eta, settings)
    first, second = gamma.first_space, gamma.second_space
    w = gamma.weights
    eta_w = eta.weights
    for t in range(1, first.steps + 1):
        s_atoms = _informative_atoms(second, t)
        for atom in first.partition(t):
            positive = [i for i in atom if eta_w[i] > 0]
            if len(positive) < 2:
                continue
            atom_mass = sum((eta_w[i] for i in positive), zero(gamma.mode))
            for s_atom in s_atoms:
                cols = list(s_atom)
                joint = {i: sum(w[i, cols]) for i in positive}
                conditional = sum(joint.values(), zero(gamma.mode)) / atom_mass
                for i in positive:
                    if not values_equal(joint[i] / eta_w[i], conditional, gamma.mode, tol):
                        return False
    return True


def causality_constraints(E: FilteredPathSpace, S: FilteredPathSpace, eta: PathMeasure) -> CausalityConstraintSet:
    """
    Chain equalities equivalent to causality for fixed first marginal eta

    For each t, E-atom and informative S-atom A, consecutive eta-positive
    paths (omega, omega') of the atom give one equality. Atoms with a single
    positive path give none.
    """
    if eta.space != E:
        raise ValidationError("eta does not live on E")
    constraints: List[CausalityConstraint] = []
    eta_w = eta.weights
    for t in range(1, E.steps + 1):
        s_atoms = S.partition(t)
        for e_id, atom in enumerate(E.partition(t)):
            positive = [i for i in atom if eta_w[i] > 0]
            if len(positive) < 2:
                continue
            for s_id, s_atom in enumerate(s_atoms):
                if len(s_atom) == S.n_paths:
                    continue
                for a, b in zip(positive, positive[1:]):
                    constraints.append(CausalityConstraint(
                        t=t, e_atom=e_id, s_atom=s_id, omega=a, omega_prime=b,
                        targets=tuple(s_atom), eta_omega=eta_w[a], eta_omega_prime=eta_w[b],
                    ))
    logger.debug(f"{len(constraints)} causality equalities for {E.n_paths}x{S.n_paths} paths")
    return CausalityConstraintSet(E, S, eta, constraints)


def constraint_residuals(gamma: Coupling, constraints: CausalityConstraintSet) -> float:
    """Max |equality| over the set (0.0 for an empty set)"""
    if not len(constraints):
        return 0.0
    return float(np.max(np.abs(constraints.residuals(gamma))))


KernelFactor = Callable[[int, int, Tuple[int, ...], Sequence[int]], Sequence[Any]]


def causal_kernel_coupling(eta: PathMeasure, S: FilteredPathSpace, factor: KernelFactor) -> Coupling:
    """
    Causal coupling from step-wise kernels

    Theta^omega(sigma) = prod_t q_t(sigma_t | sigma_<t, atom_t(omega)), where
    `factor(t, e_atom, prefix, children)` returns the (unnormalized) weights
    of the next symbols. S must carry the coordinate filtration of its paths.

    Args:
        eta: First marginal on E
        S: Target space
        factor: Step kernel, depends on omega only through its time-t E-atom
    """
    if FilteredPathSpace(S.alphabets, S.paths, 'coordinate') != S:
        raise ValidationError("causal_kernel_coupling needs S with the coordinate filtration")
    E = eta.space
    if E.steps != S.steps:
        raise ValidationError(f"E has {E.steps} steps, S has {S.steps}")

    children: Dict[Tuple[int, ...], List[int]] = {}
    for path in S.paths:
        for t in range(S.steps):
            bucket = children.setdefault(path[:t], [])
            if path[t] not in bucket:
                bucket.append(path[t])

    mode = eta.mode
    matrix = np.empty((E.n_paths, S.n_paths), dtype=object)
    matrix[:] = zero(mode)
    for i in eta.positive():
        for j, path in enumerate(S.paths):
            prob: Any = eta.weights[i]
            for t in range(S.steps):
                options = children[path[:t]]
                raw = list(factor(t + 1, int(E.atom_ids(t + 1)[i]), path[:t], options))
                total = sum(raw)
                if total <= 0:
                    raise ValidationError(f"kernel factor at t={t + 1} has no mass")
                prob = prob * raw[options.index(path[t])] / total
            matrix[i, j] = prob
    if mode is ArithmeticMode.FLOAT:
        matrix = matrix.astype(float)
    return Coupling(E, S, matrix, mode)
