"""
kausal modules - causal optimal transport toolkit

Layers:
- Finite path spaces: path_space, causality, simplex, entropic_solver, transport_solver
- Gaussian path space: rng, gaussian_model, regression, malliavin, gaussian_lab
- Endpoint bridges: bridge
- Batteries and I/O: instances, checks, report_io
"""

# ============================================================================
# SHARED TYPES
# ============================================================================

from .transport_base import (
    ArithmeticMode,
    SolveStatus,
    SolveMode,
    IncrementModel,
    KausalError,
    ValidationError,
    KernelUndefinedError,
    RangeError,
    SizeGuardError,
    NonConvergenceError,
    VerificationError,
    DualCertificate,
    TransportSolution,
    MCEstimate,
    CheckResult,
    SolverSettings,
    MonteCarloSettings,
)

# ============================================================================
# FINITE PATH SPACES
# ============================================================================

from .path_space import (
    FilteredPathSpace,
    PathMeasure,
    Coupling,
    ConditionalKernel,
    marginals,
    conditional_kernel,
    product_coupling,
    pushforward,
    graph_coupling,
    is_adapted_map,
    mix_couplings,
)
from .causality import (
    CausalityCheck,
    CausalityConstraintSet,
    generated_filtration,
    is_causal,
    is_causal_via_conditional_laws,
    causality_constraints,
    causal_kernel_coupling,
)
from .entropic_solver import solve_causal_entropic
from .transport_solver import (
    TransportProblem,
    solve,
    solve_classic_mk,
    solve_causal_mk,
    value_S,
    value_T,
    solve_causal_monge_bruteforce,
    solve_classic_monge_bruteforce,
    verify_dual_feasibility,
)

# ============================================================================
# GAUSSIAN PATH SPACE
# ============================================================================

from .gaussian_model import (
    GaussianPathModel,
    DriftSpec,
    SDESample,
    TiltedMeasure,
    simulate_sde,
    forward_recursion,
    girsanov_log_density,
)
from .gaussian_lab import (
    closed_form_energy,
    continuous_energy,
    relative_entropy,
    follmer_energy,
    girsanov_martingale,
    optimal_plan_cost,
    reverse_plan_cost,
    hybrid_coupling_cost,
    coupling_samples,
    orthogonality_residual,
    strong_solution_gap,
    drift_from_density,
    dual_certificate,
    talagrand_log_sobolev,
)
from .malliavin import malliavin_gradient, clark_ocone_residual

# ============================================================================
# BRIDGES
# ============================================================================

from .bridge import (
    EndpointMarginals,
    BridgeSolution,
    HTransform,
    solve_schrodinger_bridge,
    feasible_tiltings,
    pinned_mixture_path_entropy,
    mikami_value_check,
)

# ============================================================================
# BATTERIES
# ============================================================================

from .checks import (
    GAUSSIAN_CHECKS,
    DEFAULT_CHECKS,
    SuiteSizes,
    SuiteReport,
    parse_checks,
    run_gaussian_checks,
    run_suite,
)

__all__ = [
    # Shared types
    'ArithmeticMode',
    'SolveStatus',
    'SolveMode',
    'IncrementModel',
    'KausalError',
    'ValidationError',
    'KernelUndefinedError',
    'RangeError',
    'SizeGuardError',
    'NonConvergenceError',
    'VerificationError',
    'DualCertificate',
    'TransportSolution',
    'MCEstimate',
    'CheckResult',
    'SolverSettings',
    'MonteCarloSettings',

    # Finite path spaces
    'FilteredPathSpace',
    'PathMeasure',
    'Coupling',
    'ConditionalKernel',
    'marginals',
    'conditional_kernel',
    'product_coupling',
    'pushforward',
    'graph_coupling',
    'is_adapted_map',
    'mix_couplings',
    'CausalityCheck',
    'CausalityConstraintSet',
    'generated_filtration',
    'is_causal',
    'is_causal_via_conditional_laws',
    'causality_constraints',
    'causal_kernel_coupling',
    'solve_causal_entropic',
    'TransportProblem',
    'solve',
    'solve_classic_mk',
    'solve_causal_mk',
    'value_S',
    'value_T',
    'solve_causal_monge_bruteforce',
    'solve_classic_monge_bruteforce',
    'verify_dual_feasibility',

    # Gaussian path space
    'GaussianPathModel',
    'DriftSpec',
    'SDESample',
    'TiltedMeasure',
    'simulate_sde',
    'forward_recursion',
    'girsanov_log_density',
    'closed_form_energy',
    'continuous_energy',
    'relative_entropy',
    'follmer_energy',
    'girsanov_martingale',
    'optimal_plan_cost',
    'reverse_plan_cost',
    'hybrid_coupling_cost',
    'coupling_samples',
    'orthogonality_residual',
    'strong_solution_gap',
    'drift_from_density',
    'dual_certificate',
    'talagrand_log_sobolev',
    'malliavin_gradient',
    'clark_ocone_residual',

    # Bridges
    'EndpointMarginals',
    'BridgeSolution',
    'HTransform',
    'solve_schrodinger_bridge',
    'feasible_tiltings',
    'pinned_mixture_path_entropy',
    'mikami_value_check',

    # Batteries
    'GAUSSIAN_CHECKS',
    'DEFAULT_CHECKS',
    'SuiteSizes',
    'SuiteReport',
    'parse_checks',
    'run_gaussian_checks',
    'run_suite',
]
