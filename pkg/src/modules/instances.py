"""
Canonical and random finite instances

Shared by the CLI suite and the tests. Random instances draw from the
instance stream, one generator per instance index, so instance i is the
same whatever the batch size.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from .causality import causal_kernel_coupling
from .path_space import Coupling, FilteredPathSpace, PathMeasure
from .rng import STREAM_INSTANCES, chunk_rng
from .transport_base import ArithmeticMode

logger = logging.getLogger(__name__)

PLUS, MINUS = 0, 1


@dataclass
class TransportInstance:
    """eta on E, nu on S and a cost matrix"""
    name: str
    eta: PathMeasure
    nu: PathMeasure
    cost: np.ndarray

    @property
    def first_space(self) -> FilteredPathSpace:
        return self.eta.space

    @property
    def second_space(self) -> FilteredPathSpace:
        return self.nu.space


def anticipation_instance() -> TransportInstance:
    """
    E = {(0,+), (0,-)} uniform, S = all two-step sign paths, nu uniform on
    {(+,+), (-,-)}, c = 1{sigma_1 != omega_2}

    A plan may match sigma_1 to omega_2 only by looking ahead, so the
    causal value is 1/2 and the classic value 0.
    """
    E = FilteredPathSpace.coordinate([1, 2])
    S = FilteredPathSpace.coordinate([2, 2])
    eta = PathMeasure.uniform(E)
    nu = PathMeasure.from_mapping(S, {(PLUS, PLUS): Fraction(1, 2), (MINUS, MINUS): Fraction(1, 2)})
    cost = np.array([[Fraction(int(sigma[0] != omega[1])) for sigma in S.paths] for omega in E.paths],
                    dtype=object)
    return TransportInstance('anticipation', eta, nu, cost)


def mismatch_cost(E: FilteredPathSpace, S: FilteredPathSpace) -> np.ndarray:
    """c(omega, sigma) = 1{omega != sigma} on a shared path set"""
    return np.array([[Fraction(int(omega != sigma)) for sigma in S.paths] for omega in E.paths], dtype=object)


# ============================================================================
# RANDOM INSTANCES
# ============================================================================

def instance_rng(seed: int, index: int) -> np.random.Generator:
    return chunk_rng(seed, STREAM_INSTANCES, index)


def random_alphabets(rng: np.random.Generator, max_steps: int = 3, max_alphabet: int = 3) -> List[int]:
    steps = int(rng.integers(1, max_steps + 1))
    return [int(k) for k in rng.integers(1, max_alphabet + 1, size=steps)]


def random_filtration(rng: np.random.Generator, space: FilteredPathSpace, merge_p: float = 0.3) -> List[List[List[int]]]:
    """
    Random refining partitions below the coordinate filtration

    Built backwards from the discrete partition at T: the atoms of time t are
    unions of time-(t+1) atoms, grouped by prefix and then merged at random.
    """
    coordinate = FilteredPathSpace(space.alphabets, space.paths, 'coordinate')
    finer: List[List[int]] = [[i] for i in range(space.n_paths)]
    partitions = [finer]
    for t in range(space.steps - 1, 0, -1):
        prefix_ids = coordinate.atom_ids(t)
        labels = [int(min(prefix_ids[atom])) for atom in finer]
        for a in range(len(labels)):
            if rng.random() < merge_p:
                labels[a] = labels[int(rng.integers(len(labels)))]
        groups: dict = {}
        for atom, label in zip(finer, labels):
            groups.setdefault(label, []).extend(atom)
        finer = [sorted(g) for g in groups.values()]
        partitions.append(finer)
    return list(reversed(partitions))


def random_space(rng: np.random.Generator, alphabets: Optional[Sequence[int]] = None,
                 filtration: Optional[str] = None, subset_p: float = 0.0) -> FilteredPathSpace:
    """
    Random path space

    Args:
        alphabets: Alphabet sizes (random when None)
        filtration: "coordinate", "degenerate", "trivial", "random" or None
                    for a random choice among coordinate and random
        subset_p: Probability of dropping each path (one always stays)
    """
    alphabets = list(alphabets) if alphabets is not None else random_alphabets(rng)
    full = FilteredPathSpace(alphabets)
    paths = [p for p in full.paths if rng.random() >= subset_p] or [full.paths[int(rng.integers(full.n_paths))]]
    kind = filtration or ('coordinate' if rng.random() < 0.5 else 'random')
    if kind != 'random':
        return FilteredPathSpace(alphabets, paths, kind)
    base = FilteredPathSpace(alphabets, paths, 'coordinate')
    return FilteredPathSpace(alphabets, paths, random_filtration(rng, base))


def random_weights(rng: np.random.Generator, size: int, zero_p: float = 0.2, scale: int = 4) -> List[Fraction]:
    """Rational probability vector with some null entries"""
    raw = [0 if rng.random() < zero_p else int(rng.integers(1, scale + 1)) for _ in range(size)]
    if not any(raw):
        raw[int(rng.integers(size))] = 1
    total = sum(raw)
    return [Fraction(r, total) for r in raw]


def random_measure(rng: np.random.Generator, space: FilteredPathSpace,
                   mode: Optional[ArithmeticMode] = None, zero_p: float = 0.2) -> PathMeasure:
    return PathMeasure(space, random_weights(rng, space.n_paths, zero_p), mode)


def random_coupling(rng: np.random.Generator, eta: PathMeasure, S: FilteredPathSpace) -> Coupling:
    """Coupling with first marginal eta and arbitrary rational rows (usually not causal)"""
    rows = np.empty((eta.space.n_paths, S.n_paths), dtype=object)
    for i, mass in enumerate(eta.weights):
        rows[i] = [mass * w for w in random_weights(rng, S.n_paths, zero_p=0.3)]
    return Coupling(eta.space, S, rows, eta.mode)


def random_causal_coupling(rng: np.random.Generator, eta: PathMeasure, S: FilteredPathSpace) -> Coupling:
    """Causal coupling from random step kernels depending on omega through its E-atom"""
    table: dict = {}

    def factor(t: int, e_atom: int, prefix: Tuple[int, ...], children: Sequence[int]) -> List[Fraction]:
        key = (t, e_atom, prefix)
        if key not in table:
            table[key] = random_weights(rng, len(children), zero_p=0.3)
        return table[key]

    return causal_kernel_coupling(eta, S, factor)


def random_cost(rng: np.random.Generator, E: FilteredPathSpace, S: FilteredPathSpace,
                high: int = 5, inf_p: float = 0.0) -> np.ndarray:
    """Integer costs in [0, high], each entry +inf with probability inf_p"""
    cost = np.empty((E.n_paths, S.n_paths), dtype=object)
    for i in range(E.n_paths):
        for j in range(S.n_paths):
            cost[i, j] = float('inf') if rng.random() < inf_p else Fraction(int(rng.integers(0, high + 1)))
    return cost


def random_instance(seed: int, index: int, filtration: Optional[str] = None,
                    max_steps: int = 3, max_alphabet: int = 3) -> TransportInstance:
    """Instance `index` of the random family; both spaces share the step count"""
    rng = instance_rng(seed, index)
    steps = int(rng.integers(1, max_steps + 1))
    E = random_space(rng, [int(k) for k in rng.integers(1, max_alphabet + 1, size=steps)], filtration)
    S = random_space(rng, [int(k) for k in rng.integers(1, max_alphabet + 1, size=steps)], filtration)
    eta = random_measure(rng, E)
    nu = random_measure(rng, S)
    return TransportInstance(f"random-{seed}-{index}", eta, nu, random_cost(rng, E, S))
