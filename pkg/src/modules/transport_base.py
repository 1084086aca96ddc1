"""
Base types for kausal

Enums, exceptions and result dataclasses shared by every module.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional


# ============================================================================
# ENUMS
# ============================================================================

class ArithmeticMode(Enum):
    """Weight arithmetic"""
    EXACT = "exact"    # fractions.Fraction in object arrays
    FLOAT = "float"    # float64


class SolveStatus(Enum):
    """Outcome of a solver run"""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED_GUARD = "unbounded-guard"
    NOT_CONVERGED = "not-converged"


class SolveMode(Enum):
    """Transport problem flavour (the `--mode` flag)"""
    CLASSIC = "classic"
    CAUSAL = "causal"
    CAUSAL_ENTROPIC = "causal-entropic"


class IncrementModel(Enum):
    """Increment law of the discretized Wiener model"""
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"   # ±sqrt(dt) per component


# ============================================================================
# EXCEPTIONS
# ============================================================================

class KausalError(Exception):
    """Base error of the toolkit"""


class ValidationError(KausalError, ValueError):
    """Invariant violation, malformed input file or bad flag.

    `source` names the offending file or flag when known.
    """

    def __init__(self, message: str, source: Optional[str] = None) -> None:
        self.source = source
        if source:
            message = f"{source}: {message}"
        super().__init__(message)


class KernelUndefinedError(ValidationError):
    """Kernel row requested on an eta-null path"""


class RangeError(ValidationError):
    """Path map leaves the target path set"""


class SizeGuardError(ValidationError):
    """Enumeration would exceed the configured size guard"""


class NonConvergenceError(KausalError):
    """Iterative solver exhausted its budget"""


class VerificationError(KausalError):
    """A verification check failed"""


# ============================================================================
# DATA CLASSES - results
# ============================================================================

@dataclass
class DualCertificate:
    """
    Dual variables of a transport LP

    first_potentials is indexed like the eta-positive rows of the plan,
    second_potentials like the columns, causality_multipliers like the
    chain equalities of the CausalityConstraintSet.
    """
    first_potentials: Dict[int, Any] = field(default_factory=dict)
    second_potentials: Dict[int, Any] = field(default_factory=dict)
    causality_multipliers: List[Any] = field(default_factory=list)
    max_violation: Optional[float] = None   # filled by verify_dual_feasibility


@dataclass
class TransportSolution:
    """Result of a Monge-Kantorovich solve"""
    value: Any                       # Fraction in exact mode, float otherwise
    plan: Optional[Any]              # path_space.Coupling
    status: SolveStatus
    dual: Optional[DualCertificate] = None
    gap: Optional[Any] = None
    iterations: int = 0
    mode: ArithmeticMode = ArithmeticMode.FLOAT
    residuals: Dict[str, float] = field(default_factory=dict)
    regularized_value: Optional[float] = None   # entropic objective

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass
class MCEstimate:
    """Monte Carlo estimate with its standard error"""
    value: float
    standard_error: float
    n_samples: int
    seed: int
    details: Dict[str, Any] = field(default_factory=dict)

    def within(self, oracle: float, n_se: float = 3.0, rel: float = 0.0, other_se: float = 0.0) -> bool:
        """
        Checks |value - oracle| <= n_se * joint SE + rel * |oracle|

        Args:
            oracle: Reference value
            n_se: Number of standard errors allowed
            rel: Relative allowance (discretization bias)
            other_se: SE of the oracle when it is itself estimated
        """
        joint = (self.standard_error ** 2 + other_se ** 2) ** 0.5
        return abs(self.value - oracle) <= n_se * joint + rel * abs(oracle) + 1e-12 * max(1.0, abs(oracle))


@dataclass
class CheckResult:
    """One verification check, as it appears in reports"""
    name: str
    estimate: Optional[float]
    oracle: Optional[float]
    standard_error: Optional[float]
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'estimate': self.estimate,
            'oracle': self.oracle,
            'standard_error': self.standard_error,
            'pass': self.passed,
            'details': self.details,
        }


# ============================================================================
# SETTINGS
# ============================================================================

@dataclass
class SolverSettings:
    """
    Settings of the finite solvers

    Built from KausalConfig; library code receives these instead of
    reading the environment.
    """
    exact_max_paths: int = 64
    float_eq_tol: float = 1e-12
    kernel_rel_tol: float = 1e-9
    lp_gap_rel_tol: float = 1e-8
    lp_pivot_tol: float = 1e-11
    lp_max_iters: int = 200_000
    lp_refactor_every: int = 64
    entropic_max_iters: int = 50_000
    entropic_kl_tol: float = 1e-12
    monge_max_paths: int = 8


@dataclass
class MonteCarloSettings:
    """Settings of the Monte Carlo lab"""
    chunk_size: int = 4096
    threads: int = 1
    fd_step: float = 1e-5
    regression_basis: List[str] = field(
        default_factory=lambda: ['const', 'x', 'x2', 'running_max', 'running_integral']
    )
    normality_alpha: float = 1e-4
    drift_overflow: float = 1e12
    clark_ocone_max_bits: int = 16
    cloud_max_size: int = 64
    bridge_tol: float = 1e-10
    bridge_max_iters: int = 100_000
