"""
Discretized Wiener model - increments, adapted drifts, Girsanov tilting

Time grid k*dt, k = 0..N, with N*dt = 1. A drift is a predictable family
b_k(x_0..x_k); the tilted law nu is the law of the forward recursion
X_{k+1} = X_k + dB_k - b_k(X) dt, X_0 = 0.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .rng import STREAM_NOISE, Chunk, map_chunks
from .transport_base import IncrementModel, MCEstimate, MonteCarloSettings, ValidationError

logger = logging.getLogger(__name__)

DriftFunction = Callable[[int, np.ndarray], np.ndarray]


# ============================================================================
# MODEL
# ============================================================================

@dataclass(frozen=True)
class GaussianPathModel:
    """N steps of size dt on [0, 1] in dimension d"""
    n_steps: int
    dt: float
    dim: int = 1
    increment_model: IncrementModel = IncrementModel.GAUSSIAN

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValidationError(f"N must be >= 1, got {self.n_steps}")
        if self.dim < 1:
            raise ValidationError(f"d must be >= 1, got {self.dim}")
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if abs(self.n_steps * self.dt - 1.0) > 1e-12:
            raise ValidationError(f"N*dt must equal 1 (got {self.n_steps}*{self.dt})")

    @classmethod
    def unit(cls, n_steps: int, dim: int = 1,
             increment_model: IncrementModel = IncrementModel.GAUSSIAN) -> 'GaussianPathModel':
        return cls(n_steps, 1.0 / n_steps, dim, increment_model)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], source: Optional[str] = None) -> 'GaussianPathModel':
        try:
            n_steps = int(data['N'])
            dt = float(data.get('dt', 1.0 / n_steps))
            dim = int(data.get('d', 1))
            kind = IncrementModel(data.get('increment_model', 'gaussian'))
        except KeyError as e:
            raise ValidationError(f"model file misses {e}", source) from e
        except ValueError as e:
            raise ValidationError(f"bad model file: {e}", source) from e
        try:
            return cls(n_steps, dt, dim, kind)
        except ValidationError as e:
            raise ValidationError(str(e), source) from e

    def to_dict(self) -> Dict[str, Any]:
        return {'N': self.n_steps, 'dt': self.dt, 'd': self.dim, 'increment_model': self.increment_model.value}

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.dt))

    def draw_increments(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Increments of shape (count, N, d)"""
        shape = (count, self.n_steps, self.dim)
        if self.increment_model is IncrementModel.GAUSSIAN:
            return rng.standard_normal(shape) * self.sqrt_dt
        return np.where(rng.integers(0, 2, size=shape) == 1, 1.0, -1.0) * self.sqrt_dt

    def require_gaussian(self, what: str) -> None:
        if self.increment_model is not IncrementModel.GAUSSIAN:
            raise ValidationError(f"{what} needs the gaussian increment model", '--increment-model')


def path_from_increments(increments: np.ndarray) -> np.ndarray:
    """(m, N, d) increments -> (m, N+1, d) paths starting at 0"""
    m, _, d = increments.shape
    return np.concatenate([np.zeros((m, 1, d)), np.cumsum(increments, axis=1)], axis=1)


# ============================================================================
# DRIFTS
# ============================================================================

@dataclass(frozen=True)
class DriftSpec:
    """
    Predictable drift b_k(x_0..x_k)

    Builtin kinds: zero, constant (a), ou (lam: b_k = lam * x_k) and tanh
    (a, scale: b_k = a * tanh(x_k / scale)). `custom` wraps a function
    f(k, prefix) with prefix of shape (m, k+1, d).
    """
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    function: Optional[DriftFunction] = None

    KINDS = ('zero', 'constant', 'ou', 'tanh', 'custom')

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown drift kind {self.kind!r} (expected one of {', '.join(self.KINDS)})",
                                  '--drift')
        if self.kind == 'custom' and self.function is None:
            raise ValidationError("custom drift needs a function", '--drift')

    @classmethod
    def zero(cls) -> 'DriftSpec':
        return cls('zero')

    @classmethod
    def constant(cls, a: Any = 1.0) -> 'DriftSpec':
        return cls('constant', {'a': a})

    @classmethod
    def ou(cls, lam: float = 1.0) -> 'DriftSpec':
        return cls('ou', {'lam': float(lam)})

    @classmethod
    def tanh(cls, a: float = 1.0, scale: float = 1.0) -> 'DriftSpec':
        if not scale > 0:
            raise ValidationError(f"tanh scale must be > 0, got {scale}", '--drift')
        return cls('tanh', {'a': float(a), 'scale': float(scale)})

    @classmethod
    def custom(cls, function: DriftFunction, label: str = 'custom') -> 'DriftSpec':
        return cls('custom', {'label': label}, function)

    @classmethod
    def parse(cls, tokens: Sequence[str]) -> 'DriftSpec':
        """
        Parses `kind=ou lam=1` style tokens (commas also separate)

        Example: ["kind=constant", "a=1"] -> DriftSpec.constant(1.0)
        """
        pairs: Dict[str, str] = {}
        for token in (t for raw in tokens for t in raw.split(',')):
            token = token.strip()
            if not token:
                continue
            if '=' not in token:
                raise ValidationError(f"drift token {token!r} is not key=value", '--drift')
            key, value = token.split('=', 1)
            pairs[key.strip()] = value.strip()
        kind = pairs.pop('kind', None)
        if kind is None:
            raise ValidationError("drift needs kind=...", '--drift')
        try:
            values = {k: float(v) for k, v in pairs.items()}
        except ValueError as e:
            raise ValidationError(f"bad drift parameter: {e}", '--drift') from e
        allowed = {'zero': set(), 'constant': {'a'}, 'ou': {'lam'}, 'tanh': {'a', 'scale'}}
        if kind not in allowed:
            raise ValidationError(f"unknown drift kind {kind!r}", '--drift')
        unknown = set(values) - allowed[kind]
        if unknown:
            raise ValidationError(f"unknown {kind} drift parameters: {sorted(unknown)}", '--drift')
        if kind == 'zero':
            return cls.zero()
        if kind == 'constant':
            return cls.constant(values.get('a', 1.0))
        if kind == 'ou':
            return cls.ou(values.get('lam', 1.0))
        return cls.tanh(values.get('a', 1.0), values.get('scale', 1.0))

    # --- properties ---

    @property
    def deterministic(self) -> bool:
        """b_k does not depend on the path"""
        return self.kind in ('zero', 'constant')

    @property
    def markov(self) -> bool:
        """b_k reads only x_k"""
        return self.kind != 'custom'

    def growth_bound(self) -> Tuple[float, float]:
        """(M, L) with |b_k(x)| <= M + L * max_j |x_j|"""
        if self.kind == 'zero':
            return 0.0, 0.0
        if self.kind == 'constant':
            return float(np.max(np.abs(np.atleast_1d(self.params['a'])))), 0.0
        if self.kind == 'ou':
            return 0.0, abs(self.params['lam'])
        if self.kind == 'tanh':
            return abs(self.params['a']), 0.0
        return float('inf'), float('inf')

    def describe(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind}
        for key, value in self.params.items():
            data[key] = np.asarray(value).tolist() if not isinstance(value, str) else value
        return data

    # --- evaluation ---

    def evaluate(self, k: int, prefix: np.ndarray) -> np.ndarray:
        """
        b_k on a batch of path prefixes

        Args:
            k: Step index 0..N-1
            prefix: (m, k+1, d) values x_0..x_k

        Returns:
            (m, d) drift values
        """
        m, _, d = prefix.shape
        if self.kind == 'zero':
            return np.zeros((m, d))
        if self.kind == 'constant':
            return np.broadcast_to(np.asarray(self.params['a'], dtype=float), (m, d)).copy()
        x_k = prefix[:, k, :]
        if self.kind == 'ou':
            return self.params['lam'] * x_k
        if self.kind == 'tanh':
            return self.params['a'] * np.tanh(x_k / self.params['scale'])
        return np.asarray(self.function(k, prefix), dtype=float).reshape(m, d)

    def along(self, paths: np.ndarray) -> np.ndarray:
        """(m, N+1, d) paths -> (m, N, d) drift values b_k(path_0..k)"""
        n_steps = paths.shape[1] - 1
        return np.stack([self.evaluate(k, paths[:, :k + 1]) for k in range(n_steps)], axis=1)


# ============================================================================
# SIMULATION
# ============================================================================

@dataclass
class SDESample:
    """Paired paths: X under nu and the driving noise B (both start at 0)"""
    X: np.ndarray             # (n, N+1, d)
    B: np.ndarray             # (n, N+1, d)
    drift: np.ndarray         # (n, N, d) values b_k(X)
    aborted: np.ndarray       # (n,) bool, drift overflow
    diagnostics: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def kept(self) -> np.ndarray:
        return ~self.aborted


def forward_recursion(model: GaussianPathModel, drift: DriftSpec, increments: np.ndarray,
                      overflow: float = 1e12) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[Dict[str, Any]]]:
    """
    X_{k+1} = X_k + dB_k - b_k(X_0..X_k) dt

    Samples whose drift leaves [-overflow, overflow] (or turns non-finite)
    are aborted: their drift is zeroed from that step on and a diagnostics
    record is kept.
    """
    m, n_steps, d = increments.shape
    X = np.zeros((m, n_steps + 1, d))
    b = np.zeros((m, n_steps, d))
    aborted = np.zeros(m, dtype=bool)
    diagnostics: List[Dict[str, Any]] = []
    for k in range(n_steps):
        bk = drift.evaluate(k, X[:, :k + 1])
        with np.errstate(invalid='ignore'):
            bad = ~np.all(np.isfinite(bk), axis=1) | (np.max(np.abs(bk), axis=1) > overflow)
        fresh = bad & ~aborted
        for i in np.flatnonzero(fresh):
            diagnostics.append({'sample': int(i), 'step': k, 'value': float(np.max(np.abs(bk[i])))})
        aborted |= bad
        bk[aborted] = 0.0
        b[:, k] = bk
        X[:, k + 1] = X[:, k] + increments[:, k] - bk * model.dt
    return X, b, aborted, diagnostics


def simulate_sde(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                 settings: Optional[MonteCarloSettings] = None, stream: int = STREAM_NOISE) -> SDESample:
    """
    n paired samples (X, B) of the forward recursion

    Increments come from the counter-based stream, chunk by chunk.
    """
    settings = settings or MonteCarloSettings()

    def run(chunk: Chunk, rng: np.random.Generator):
        dB = model.draw_increments(rng, chunk.size)
        X, b, aborted, diag = forward_recursion(model, drift, dB, settings.drift_overflow)
        for record in diag:
            record['sample'] += chunk.start
        return X, path_from_increments(dB), b, aborted, diag

    parts = map_chunks(run, n, seed, stream, settings)
    sample = SDESample(
        X=np.concatenate([p[0] for p in parts]),
        B=np.concatenate([p[1] for p in parts]),
        drift=np.concatenate([p[2] for p in parts]),
        aborted=np.concatenate([p[3] for p in parts]),
        diagnostics=[r for p in parts for r in p[4]],
    )
    if sample.diagnostics:
        logger.warning(f"{len(sample.diagnostics)} samples aborted on drift overflow")
    return sample


# ============================================================================
# GIRSANOV DENSITY
# ============================================================================

def girsanov_log_density(increments: np.ndarray, drift: DriftSpec, dt: Optional[float] = None) -> Any:
    """
    log d(nu)/d(mu) = -sum_k <b_k, dw_k> - 1/2 sum_k |b_k|^2 dt along the path

    Args:
        increments: (N, d) or (N,) for one path, (m, N, d) for a batch
        drift: Drift defining nu
        dt: Step size (default 1/N)

    Returns:
        float for one path, (m,) array for a batch
    """
    dw = np.asarray(increments, dtype=float)
    single = dw.ndim < 3
    if dw.ndim == 1:
        dw = dw[:, None]
    if single:
        dw = dw[None]
    dt = 1.0 / dw.shape[1] if dt is None else dt
    b = drift.along(path_from_increments(dw))
    value = -np.sum(b * dw, axis=(1, 2)) - 0.5 * np.sum(b * b, axis=(1, 2)) * dt
    return float(value[0]) if single else value


@dataclass(frozen=True)
class TiltedMeasure:
    """nu = law of the forward recursion; density against mu by girsanov_log_density"""
    model: GaussianPathModel
    drift: DriftSpec

    def log_density(self, increments: np.ndarray) -> Any:
        return girsanov_log_density(increments, self.drift, self.model.dt)

    def sample(self, seed: int, n: int, settings: Optional[MonteCarloSettings] = None) -> SDESample:
        return simulate_sde(self.model, self.drift, seed, n, settings)


# ============================================================================
# ESTIMATES
# ============================================================================

def estimate(values: np.ndarray, seed: int) -> MCEstimate:
    """Sample mean with SE = std / sqrt(n)"""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise ValidationError("no samples left to estimate from")
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else float('inf')
    return MCEstimate(value=float(np.mean(values)), standard_error=se, n_samples=n, seed=seed)
