"""
Path spaces - finite filtered path spaces, measures and couplings

A FilteredPathSpace is a finite set of discrete-time paths with a filtration
given as a refining sequence of partitions. PathMeasure and Coupling carry
weights in exact (Fraction) or float mode; ConditionalKernel is the
disintegration of a coupling against its first marginal.
"""
import logging
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .transport_base import (
    ArithmeticMode,
    KernelUndefinedError,
    RangeError,
    ValidationError,
)
from .transport_utils import (
    as_array,
    lexicographic_paths,
    parse_weight,
    resolve_mode,
    zero,
)

logger = logging.getLogger(__name__)

Path = Tuple[int, ...]
Partition = Tuple[Tuple[int, ...], ...]
PathMap = Union[Callable[[Path], Path], Mapping[Path, Path]]

MEASURE_TOL = 1e-12


def _canonical(partition: Iterable[Iterable[int]]) -> Partition:
    atoms = [tuple(sorted(int(i) for i in atom)) for atom in partition]
    atoms = [a for a in atoms if a]
    return tuple(sorted(atoms, key=lambda a: a[0]))


def common_mode(*modes: ArithmeticMode) -> ArithmeticMode:
    if all(m is ArithmeticMode.EXACT for m in modes):
        return ArithmeticMode.EXACT
    return ArithmeticMode.FLOAT


# ============================================================================
# FilteredPathSpace
# ============================================================================

class FilteredPathSpace:
    """
    Finite set of paths with a filtration of partitions

    Paths are tuples of symbol indices, kept in lexicographic order. The
    filtration holds one partition per time t = 1..T (stored at index t-1);
    partitions must refine with t.
    """

    def __init__(
        self,
        alphabets: Sequence[int],
        paths: Optional[Iterable[Sequence[int]]] = None,
        filtration: Union[str, Sequence[Iterable[Iterable[int]]]] = 'coordinate',
        source: Optional[str] = None,
    ) -> None:
        """
        Args:
            alphabets: Alphabet size k_t per step
            paths: Explicit subset of the alphabet product (default: all of it)
            filtration: "coordinate", "degenerate", "trivial" or explicit
                        partitions (lists of path-index atoms per t)
            source: File name for error messages
        """
        self._alphabets = tuple(int(k) for k in alphabets)
        if not self._alphabets or any(k < 1 for k in self._alphabets):
            raise ValidationError(f"alphabets must be a non-empty list of positive sizes: {alphabets!r}", source)
        steps = len(self._alphabets)

        if paths is None:
            all_paths = lexicographic_paths(self._alphabets)
        else:
            all_paths = sorted({tuple(int(s) for s in p) for p in paths})
            for p in all_paths:
                if len(p) != steps or any(not 0 <= s < k for s, k in zip(p, self._alphabets)):
                    raise ValidationError(f"path {p} does not fit alphabets {self._alphabets}", source)
        if not all_paths:
            raise ValidationError("path set is empty", source)
        self._paths: Tuple[Path, ...] = tuple(all_paths)
        self._index: Dict[Path, int] = {p: i for i, p in enumerate(self._paths)}

        if isinstance(filtration, str):
            partitions = self._named_filtration(filtration, source)
        else:
            partitions = [_canonical(atoms) for atoms in filtration]
        self._filtration: Tuple[Partition, ...] = tuple(partitions)
        self._validate_filtration(source)

        self._atom_ids = np.zeros((steps, len(self._paths)), dtype=int)
        for t, partition in enumerate(self._filtration):
            for a, atom in enumerate(partition):
                self._atom_ids[t, list(atom)] = a
        self._atom_ids.setflags(write=False)

    # --- constructors ---

    @classmethod
    def coordinate(cls, alphabets: Sequence[int], paths=None) -> 'FilteredPathSpace':
        return cls(alphabets, paths, 'coordinate')

    @classmethod
    def degenerate(cls, alphabets: Sequence[int], paths=None) -> 'FilteredPathSpace':
        """Every partition discrete: B_t = B for all t"""
        return cls(alphabets, paths, 'degenerate')

    @classmethod
    def trivial_until_end(cls, alphabets: Sequence[int], paths=None) -> 'FilteredPathSpace':
        """One atom before T, discrete at T"""
        return cls(alphabets, paths, 'trivial')

    def _named_filtration(self, name: str, source: Optional[str]) -> List[Partition]:
        n = len(self._paths)
        steps = len(self._alphabets)
        if name == 'coordinate':
            partitions = []
            for t in range(1, steps + 1):
                groups: Dict[Path, List[int]] = {}
                for i, p in enumerate(self._paths):
                    groups.setdefault(p[:t], []).append(i)
                partitions.append(_canonical(groups.values()))
            return partitions
        if name == 'degenerate':
            return [_canonical([[i] for i in range(n)]) for _ in range(steps)]
        if name == 'trivial':
            return [_canonical([range(n)]) for _ in range(steps - 1)] + [_canonical([[i] for i in range(n)])]
        raise ValidationError(f"unknown filtration {name!r}", source)

    def _validate_filtration(self, source: Optional[str]) -> None:
        n = len(self._paths)
        if len(self._filtration) != len(self._alphabets):
            raise ValidationError(
                f"filtration has {len(self._filtration)} partitions, expected {len(self._alphabets)}", source
            )
        for t, partition in enumerate(self._filtration, start=1):
            members = sorted(i for atom in partition for i in atom)
            if members != list(range(n)):
                raise ValidationError(f"time-{t} partition does not cover the {n} paths exactly once", source)
        for t in range(1, len(self._filtration)):
            coarse = {i: a for a, atom in enumerate(self._filtration[t - 1]) for i in atom}
            for atom in self._filtration[t]:
                if len({coarse[i] for i in atom}) != 1:
                    raise ValidationError(
                        f"time-{t + 1} atom {list(atom)} is not inside a time-{t} atom (partitions must refine)",
                        source,
                    )

    # --- accessors ---

    @property
    def steps(self) -> int:
        return len(self._alphabets)

    @property
    def alphabets(self) -> Tuple[int, ...]:
        return self._alphabets

    @property
    def paths(self) -> Tuple[Path, ...]:
        return self._paths

    @property
    def n_paths(self) -> int:
        return len(self._paths)

    @property
    def filtration(self) -> Tuple[Partition, ...]:
        return self._filtration

    def partition(self, t: int) -> Partition:
        """Partition at time t (1-based)"""
        self._check_time(t)
        return self._filtration[t - 1]

    def atom_ids(self, t: int) -> np.ndarray:
        """Atom id of every path at time t"""
        self._check_time(t)
        return self._atom_ids[t - 1]

    def index(self, path: Union[int, Sequence[int]]) -> int:
        if isinstance(path, (int, np.integer)):
            if not 0 <= path < self.n_paths:
                raise RangeError(f"path index {path} out of range")
            return int(path)
        try:
            return self._index[tuple(int(s) for s in path)]
        except KeyError:
            raise RangeError(f"path {tuple(path)} is not in the path set") from None

    def contains(self, path: Sequence[int]) -> bool:
        return tuple(int(s) for s in path) in self._index

    def is_full_at_end(self) -> bool:
        """Time-T partition is discrete (B_T = B)"""
        return len(self._filtration[-1]) == self.n_paths

    def is_degenerate(self) -> bool:
        return all(len(p) == self.n_paths for p in self._filtration)

    def _check_time(self, t: int) -> None:
        if not 1 <= t <= self.steps:
            raise ValidationError(f"time {t} outside 1..{self.steps}")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'steps': self.steps,
            'alphabets': list(self._alphabets),
            'filtration': [[list(atom) for atom in partition] for partition in self._filtration],
        }
        if self.n_paths != int(np.prod(self._alphabets)):
            data['paths'] = [list(p) for p in self._paths]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], source: Optional[str] = None) -> 'FilteredPathSpace':
        if 'alphabets' not in data:
            raise ValidationError("space description needs 'alphabets'", source)
        space = cls(data['alphabets'], data.get('paths'), data.get('filtration', 'coordinate'), source)
        steps = data.get('steps')
        if steps is not None and int(steps) != space.steps:
            raise ValidationError(f"'steps'={steps} disagrees with {space.steps} alphabets", source)
        return space

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FilteredPathSpace):
            return NotImplemented
        return (self._alphabets == other._alphabets and self._paths == other._paths
                and self._filtration == other._filtration)

    def __hash__(self) -> int:
        return hash((self._alphabets, self._paths, self._filtration))

    def __repr__(self) -> str:
        return f"FilteredPathSpace(alphabets={list(self._alphabets)}, n_paths={self.n_paths})"


# ============================================================================
# PathMeasure
# ============================================================================

class PathMeasure:
    """Probability vector over the paths of a space"""

    def __init__(
        self,
        space: FilteredPathSpace,
        weights: Sequence[Any],
        mode: Optional[ArithmeticMode] = None,
        max_exact: int = 64,
        source: Optional[str] = None,
    ) -> None:
        values = [parse_weight(w, source) for w in np.asarray(weights, dtype=object).ravel()]
        if len(values) != space.n_paths:
            raise ValidationError(f"{len(values)} weights for {space.n_paths} paths", source)
        self._space = space
        self._mode = resolve_mode(values, space.n_paths, mode, max_exact, source)
        self._weights = as_array(values, self._mode)
        self._weights.setflags(write=False)
        self._validate(source)

    def _validate(self, source: Optional[str]) -> None:
        w = self._weights
        if self._mode is ArithmeticMode.FLOAT and not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite", source)
        if any(v < 0 for v in w):
            raise ValidationError("weights must be nonnegative", source)
        total = sum(w, zero(self._mode))
        if self._mode is ArithmeticMode.EXACT:
            if total != 1:
                raise ValidationError(f"weights sum to {total}, not 1", source)
        elif abs(float(total) - 1.0) > MEASURE_TOL * max(1, len(w)):
            raise ValidationError(f"weights sum to {float(total)!r}, not 1", source)

    @classmethod
    def uniform(cls, space: FilteredPathSpace, mode: Optional[ArithmeticMode] = None) -> 'PathMeasure':
        return cls(space, [Fraction(1, space.n_paths)] * space.n_paths, mode)

    @classmethod
    def point_mass(cls, space: FilteredPathSpace, path: Union[int, Sequence[int]],
                   mode: Optional[ArithmeticMode] = None) -> 'PathMeasure':
        weights = [Fraction(0)] * space.n_paths
        weights[space.index(path)] = Fraction(1)
        return cls(space, weights, mode)

    @classmethod
    def from_mapping(cls, space: FilteredPathSpace, masses: Mapping[Path, Any],
                     mode: Optional[ArithmeticMode] = None) -> 'PathMeasure':
        weights: List[Any] = [Fraction(0)] * space.n_paths
        for path, mass in masses.items():
            weights[space.index(path)] = mass
        return cls(space, weights, mode)

    @property
    def space(self) -> FilteredPathSpace:
        return self._space

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def mode(self) -> ArithmeticMode:
        return self._mode

    def __getitem__(self, path: Union[int, Sequence[int]]) -> Any:
        return self._weights[self._space.index(path)]

    def positive(self) -> np.ndarray:
        """Indices of eta-positive paths"""
        return np.array([i for i, w in enumerate(self._weights) if w > 0], dtype=int)

    def as_float(self) -> 'PathMeasure':
        if self._mode is ArithmeticMode.FLOAT:
            return self
        return PathMeasure(self._space, self._weights.astype(float), ArithmeticMode.FLOAT)

    def allclose(self, other: 'PathMeasure', tol: float = 1e-12) -> bool:
        if self._space != other._space:
            return False
        if self._mode is ArithmeticMode.EXACT and other._mode is ArithmeticMode.EXACT:
            return bool(np.all(self._weights == other._weights))
        return bool(np.max(np.abs(self._weights.astype(float) - other._weights.astype(float))) <= tol)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PathMeasure):
            return NotImplemented
        return self.allclose(other, tol=0.0)

    def __repr__(self) -> str:
        return f"PathMeasure(n_paths={self._space.n_paths}, mode={self._mode.value})"


# ============================================================================
# Coupling and ConditionalKernel
# ============================================================================

class Coupling:
    """Transference plan: a probability matrix over (path in E, path in S)"""

    def __init__(
        self,
        first_space: FilteredPathSpace,
        second_space: FilteredPathSpace,
        weights: Any,
        mode: Optional[ArithmeticMode] = None,
        max_exact: int = 64,
        source: Optional[str] = None,
    ) -> None:
        matrix = np.asarray(weights, dtype=object)
        if matrix.shape != (first_space.n_paths, second_space.n_paths):
            raise ValidationError(
                f"coupling shape {matrix.shape} != ({first_space.n_paths}, {second_space.n_paths})", source
            )
        values = [parse_weight(w, source) for w in matrix.ravel()]
        n_max = max(first_space.n_paths, second_space.n_paths)
        self._mode = resolve_mode(values, n_max, mode, max_exact, source)
        self._weights = as_array(values, self._mode).reshape(matrix.shape)
        self._weights.setflags(write=False)
        self._first = first_space
        self._second = second_space
        self._validate(source)

    def _validate(self, source: Optional[str]) -> None:
        w = self._weights
        if self._mode is ArithmeticMode.FLOAT and not np.all(np.isfinite(w)):
            raise ValidationError("coupling entries must be finite", source)
        if any(v < 0 for v in w.ravel()):
            raise ValidationError("coupling entries must be nonnegative", source)
        total = sum(w.ravel(), zero(self._mode))
        if self._mode is ArithmeticMode.EXACT:
            if total != 1:
                raise ValidationError(f"coupling mass is {total}, not 1", source)
        elif abs(float(total) - 1.0) > MEASURE_TOL * max(1, w.size):
            raise ValidationError(f"coupling mass is {float(total)!r}, not 1", source)

    @property
    def first_space(self) -> FilteredPathSpace:
        return self._first

    @property
    def second_space(self) -> FilteredPathSpace:
        return self._second

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def mode(self) -> ArithmeticMode:
        return self._mode

    def first_marginal(self) -> PathMeasure:
        return PathMeasure(self._first, self._weights.sum(axis=1), self._mode)

    def second_marginal(self) -> PathMeasure:
        return PathMeasure(self._second, self._weights.sum(axis=0), self._mode)

    def marginals(self) -> Tuple[PathMeasure, PathMeasure]:
        return self.first_marginal(), self.second_marginal()

    def cost(self, cost_matrix: Any) -> Any:
        """<c, gamma>, with 0 * inf = 0"""
        c = np.asarray(cost_matrix, dtype=object)
        total = zero(self._mode)
        for (i, j), w in np.ndenumerate(self._weights):
            if w != 0:
                total = total + w * c[i, j]
        return total

    def as_float(self) -> 'Coupling':
        if self._mode is ArithmeticMode.FLOAT:
            return self
        return Coupling(self._first, self._second, self._weights.astype(float), ArithmeticMode.FLOAT)

    def allclose(self, other: 'Coupling', tol: float = 1e-12) -> bool:
        if self._first != other._first or self._second != other._second:
            return False
        if self._mode is ArithmeticMode.EXACT and other._mode is ArithmeticMode.EXACT:
            return bool(np.all(self._weights == other._weights))
        diff = np.abs(self._weights.astype(float) - other._weights.astype(float))
        return bool(diff.max() <= tol)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'first': self._first.to_dict(),
            'second': self._second.to_dict(),
            'weights': self._weights.tolist(),
        }

    def __repr__(self) -> str:
        return f"Coupling({self._first.n_paths}x{self._second.n_paths}, mode={self._mode.value})"


class ConditionalKernel:
    """
    Disintegration Theta^omega of a coupling against its first marginal

    Rows exist only for eta-positive paths; the kernel is defined eta-a.s.
    """

    def __init__(self, first_space: FilteredPathSpace, second_space: FilteredPathSpace,
                 rows: Dict[int, np.ndarray], mode: ArithmeticMode) -> None:
        self.first_space = first_space
        self.second_space = second_space
        self.mode = mode
        self._rows = dict(rows)

    @property
    def defined_on(self) -> List[int]:
        return sorted(self._rows)

    def row_weights(self, path: Union[int, Sequence[int]]) -> np.ndarray:
        i = self.first_space.index(path)
        if i not in self._rows:
            raise KernelUndefinedError(f"kernel undefined on null atom {self.first_space.paths[i]}")
        return self._rows[i]

    def row(self, path: Union[int, Sequence[int]]) -> PathMeasure:
        return PathMeasure(self.second_space, self.row_weights(path), self.mode)

    def mass(self, path: Union[int, Sequence[int]], target_set: Iterable[int]) -> Any:
        """Theta^omega(B) for a set B of S-path indices"""
        row = self.row_weights(path)
        return sum((row[j] for j in target_set), zero(self.mode))

    def reconstruct(self, eta: PathMeasure) -> Coupling:
        """gamma(A x B) = sum over omega in A of eta(omega) Theta^omega(B)"""
        mode = common_mode(self.mode, eta.mode)
        matrix = np.empty((self.first_space.n_paths, self.second_space.n_paths), dtype=object)
        matrix[:] = zero(mode)
        for i, row in self._rows.items():
            matrix[i, :] = eta.weights[i] * row
        if mode is ArithmeticMode.FLOAT:
            matrix = matrix.astype(float)
        return Coupling(self.first_space, self.second_space, matrix, mode)


# ============================================================================
# OPERATIONS
# ============================================================================

def marginals(gamma: Coupling) -> Tuple[PathMeasure, PathMeasure]:
    """(pi_* gamma, pi~_* gamma) as row and column sums"""
    return gamma.marginals()


def conditional_kernel(gamma: Coupling) -> ConditionalKernel:
    """
    Kernel of gamma with respect to its first marginal

    Theta^omega(B) = gamma({omega} x B) / eta(omega) for eta-positive omega.
    """
    eta = gamma.weights.sum(axis=1)
    rows = {}
    for i, mass in enumerate(eta):
        if mass > 0:
            rows[i] = gamma.weights[i, :] / mass
    return ConditionalKernel(gamma.first_space, gamma.second_space, rows, gamma.mode)


def product_coupling(eta: PathMeasure, nu: PathMeasure) -> Coupling:
    """eta (x) nu"""
    mode = common_mode(eta.mode, nu.mode)
    matrix = np.outer(eta.weights, nu.weights)
    if mode is ArithmeticMode.FLOAT:
        matrix = matrix.astype(float)
    return Coupling(eta.space, nu.space, matrix, mode)


def _as_callable(U: PathMap) -> Callable[[Path], Path]:
    if isinstance(U, Mapping):
        def lookup(path: Path) -> Path:
            try:
                return tuple(U[path])
            except KeyError:
                raise RangeError(f"map undefined on path {path}") from None
        return lookup
    return lambda path: tuple(U(path))


def map_images(U: PathMap, eta: PathMeasure, target: FilteredPathSpace) -> Dict[int, int]:
    """S-index of U(omega) for every eta-positive omega"""
    call = _as_callable(U)
    images = {}
    for i in eta.positive():
        image = call(eta.space.paths[i])
        if not target.contains(image):
            raise RangeError(f"U{eta.space.paths[i]} = {image} is outside the target path set")
        images[int(i)] = target.index(image)
    return images


def pushforward(U: PathMap, eta: PathMeasure, target: FilteredPathSpace) -> PathMeasure:
    """U_* eta"""
    weights = np.empty(target.n_paths, dtype=object)
    weights[:] = zero(eta.mode)
    for i, j in map_images(U, eta, target).items():
        weights[j] = weights[j] + eta.weights[i]
    return PathMeasure(target, weights, eta.mode)


def graph_coupling(U: PathMap, eta: PathMeasure, target: Optional[FilteredPathSpace] = None) -> Coupling:
    """
    gamma_U = (I x U)_* eta

    Args:
        U: Path map (callable or mapping), total on eta-positive paths
        eta: First marginal
        target: Target space S (default: eta's own space)
    """
    target = target or eta.space
    matrix = np.empty((eta.space.n_paths, target.n_paths), dtype=object)
    matrix[:] = zero(eta.mode)
    for i, j in map_images(U, eta, target).items():
        matrix[i, j] = eta.weights[i]
    if eta.mode is ArithmeticMode.FLOAT:
        matrix = matrix.astype(float)
    return Coupling(eta.space, target, matrix, eta.mode)


def is_adapted_map(U: PathMap, E: FilteredPathSpace, S: FilteredPathSpace, eta: PathMeasure) -> bool:
    """
    Adaptedness of U against the eta-augmented filtration of E

    True iff for every t, eta-positive paths sharing a time-t atom of E are
    sent into a common time-t atom of S (so U^{-1}(A) is a union of
    eta-positive parts of E-atoms).
    """
    if eta.space != E:
        raise ValidationError("eta does not live on E")
    if E.steps != S.steps:
        raise ValidationError(f"adaptedness needs a common time index: E has {E.steps} steps, S has {S.steps}")
    images = map_images(U, eta, S)
    for t in range(1, E.steps + 1):
        s_atoms = S.atom_ids(t)
        for atom in E.partition(t):
            targets = {s_atoms[images[i]] for i in atom if i in images}
            if len(targets) > 1:
                logger.debug(f"map not adapted at t={t}: E-atom {atom} hits S-atoms {sorted(targets)}")
                return False
    return True


def mix_couplings(first: Coupling, second: Coupling, lam: Any) -> Coupling:
    """lam * first + (1 - lam) * second"""
    if first.first_space != second.first_space or first.second_space != second.second_space:
        raise ValidationError("mixture needs couplings on the same spaces")
    lam = parse_weight(lam)
    if not 0 <= lam <= 1:
        raise ValidationError(f"mixture weight {lam} outside [0, 1]")
    mode = common_mode(first.mode, second.mode)
    if mode is ArithmeticMode.FLOAT:
        lam = float(lam)
        matrix = lam * first.weights.astype(float) + (1 - lam) * second.weights.astype(float)
    else:
        matrix = lam * first.weights + (1 - lam) * second.weights
    return Coupling(first.first_space, first.second_space, matrix, mode)
