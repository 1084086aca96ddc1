"""
Verification batteries

Maps check names to CheckResults for `gaussian verify`, and runs the
acceptance suite over finite instances, the Gaussian lab and the bridge.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import gaussian_lab as lab
from .bridge import (
    EndpointMarginals,
    endpoint_entropy,
    feasible_tiltings,
    gaussian_on_grid,
    mikami_value_check,
    pinned_mixture_path_entropy,
    solve_schrodinger_bridge,
    two_atom_minimum,
)
from .causality import is_causal, is_causal_via_conditional_laws
from .entropic_solver import solve_causal_entropic
from .gaussian_model import DriftSpec, GaussianPathModel
from .instances import (
    anticipation_instance,
    instance_rng,
    random_causal_coupling,
    random_coupling,
    random_cost,
    random_instance,
    random_measure,
    random_space,
)
from .malliavin import FUNCTIONALS, clark_ocone_residual
from .path_space import PathMeasure, product_coupling
from .transport_base import (
    CheckResult,
    IncrementModel,
    MonteCarloSettings,
    SolverSettings,
    SolveStatus,
    ValidationError,
)
from .transport_solver import (
    solve_causal_mk,
    solve_causal_monge_bruteforce,
    solve_classic_mk,
)

logger = logging.getLogger(__name__)

GAUSSIAN_CHECKS = ('entropy', 'follmer', 'optimal', 'hybrid', 'strong', 'dual',
                   'talagrand', 'clark-ocone', 'drift-recovery')
DEFAULT_CHECKS = ('follmer', 'optimal', 'hybrid', 'strong', 'dual')
CLARK_OCONE_FUNCTIONALS = ('terminal_squared', 'exp_terminal', 'running_max')
CONTINUOUS_MIN_STEPS = 200
CONTINUOUS_REL_TOL = 0.02


@dataclass
class GaussianContext:
    """Inputs shared by the checks of one `gaussian verify` run"""
    model: GaussianPathModel
    drift: DriftSpec
    seed: int
    n: int
    settings: MonteCarloSettings
    hybrid_m: Optional[Sequence[int]] = None
    cache: Dict[str, Any] = field(default_factory=dict)

    def oracle(self) -> Optional[float]:
        """Exact discrete-time 2H when known"""
        return lab.closed_form_energy(self.model, self.drift)

    def continuous_oracle(self) -> Optional[float]:
        return lab.continuous_energy(self.drift, self.model.dim)

    def two_h(self):
        if 'two_h' not in self.cache:
            self.cache['two_h'] = lab.follmer_energy(self.model, self.drift, self.seed, self.n, self.settings)
        return self.cache['two_h']


def _estimate_check(name: str, estimate, oracle: Optional[float], extra: bool = True,
                    details: Optional[Dict[str, Any]] = None) -> CheckResult:
    passed = bool(extra) and (oracle is None or estimate.within(oracle, n_se=3.0))
    payload = dict(estimate.details)
    payload.update(details or {})
    payload['n_samples'] = estimate.n_samples
    return CheckResult(name, estimate.value, oracle, estimate.standard_error, passed, payload)


# ============================================================================
# GAUSSIAN CHECKS
# ============================================================================

def check_entropy(ctx: GaussianContext) -> CheckResult:
    estimate = lab.relative_entropy(ctx.model, ctx.drift, ctx.seed, ctx.n, ctx.settings)
    oracle = ctx.oracle()
    return _estimate_check('entropy', estimate, None if oracle is None else oracle / 2.0,
                           estimate.details['estimators_agree'])


def _continuous_agreement(ctx: GaussianContext, estimate) -> Dict[str, Any]:
    """From N >= 200 the estimate must sit within 2% of the continuous-time energy"""
    continuous = ctx.continuous_oracle()
    details: Dict[str, Any] = {'continuous_oracle': continuous}
    if continuous is not None and ctx.model.n_steps >= CONTINUOUS_MIN_STEPS:
        details['continuous_within_2pct'] = bool(
            abs(estimate.value - continuous) <= CONTINUOUS_REL_TOL * abs(continuous) + 1e-12)
    return details


def check_follmer(ctx: GaussianContext) -> CheckResult:
    estimate = ctx.two_h()
    details = _continuous_agreement(ctx, estimate)
    return _estimate_check('follmer', estimate, ctx.oracle(),
                           estimate.details['identity_holds'] and details.get('continuous_within_2pct', True),
                           details)


def check_optimal(ctx: GaussianContext) -> CheckResult:
    estimate = lab.optimal_plan_cost(ctx.model, ctx.drift, ctx.seed, ctx.n, ctx.settings)
    details = _continuous_agreement(ctx, estimate)
    return _estimate_check('optimal', estimate, ctx.oracle(),
                           not estimate.details['flagged'] and details.get('continuous_within_2pct', True),
                           details)


def check_hybrid(ctx: GaussianContext) -> CheckResult:
    """Costs 2H + 2d(N - m) for several m; decreasing in m"""
    N, d = ctx.model.n_steps, ctx.model.dim
    ms = sorted(set(ctx.hybrid_m or (0, N // 2, N)))
    two_h = ctx.two_h()
    exact = lab.closed_form_energy(ctx.model, ctx.drift)
    rows, passed = [], True
    for m in ms:
        est = lab.hybrid_coupling_cost(ctx.model, ctx.drift, m, ctx.seed, ctx.n, ctx.settings)
        if exact is not None:
            oracle = exact + 2.0 * d * (N - m)
            ok = est.within(oracle, n_se=3.0)
        else:
            oracle = two_h.value + 2.0 * d * (N - m)
            ok = est.within(oracle, n_se=3.0, other_se=two_h.standard_error)
        rows.append({'m': m, 'estimate': est.value, 'standard_error': est.standard_error,
                     'oracle': oracle, 'pass': ok})
        passed &= ok
    values = [r['estimate'] for r in rows]
    decreasing = all(a >= b for a, b in zip(values, values[1:]))
    last = rows[-1]
    return CheckResult('hybrid', last['estimate'], last['oracle'], last['standard_error'],
                       passed and decreasing, {'plans': rows, 'decreasing_in_m': decreasing})


def check_strong(ctx: GaussianContext) -> CheckResult:
    estimate = lab.strong_solution_gap(ctx.model, ctx.drift, ctx.seed, ctx.n, ctx.settings)
    inverse_ok = estimate.details['inverse_residual'] <= 1e-9
    lower_ok = estimate.value >= -3.0 * estimate.standard_error - 1e-12
    return _estimate_check('strong', estimate, 0.0, inverse_ok and lower_ok)


def check_dual(ctx: GaussianContext) -> CheckResult:
    m = max(ctx.hybrid_m) if ctx.hybrid_m else None
    estimate = lab.dual_certificate(ctx.model, ctx.drift, ctx.seed, ctx.n, m, ctx.settings)
    attainment = estimate.details['attainment_difference']
    attained = abs(attainment['value']) <= 3.0 * attainment['standard_error'] + 1e-12
    return _estimate_check('dual', estimate, ctx.oracle(),
                           estimate.details['slack_nonnegative'] and attained,
                           {'continuous_oracle': ctx.continuous_oracle()})


def check_talagrand(ctx: GaussianContext) -> CheckResult:
    report = lab.talagrand_log_sobolev(ctx.model, ctx.drift, ctx.seed, ctx.n, settings=ctx.settings)
    reverse = lab.reverse_plan_cost(ctx.model, ctx.drift, ctx.seed, ctx.n, ctx.settings)
    details = report.as_dict()
    details['reverse_plan_cost'] = {'value': reverse.value, 'standard_error': reverse.standard_error}
    return CheckResult('talagrand', report.d2_lower.value, report.two_h.value, report.d2_lower.standard_error,
                       report.passed, details)


def check_clark_ocone(ctx: GaussianContext) -> CheckResult:
    """Exact enumeration on the rademacher twin of the model (at most 10 steps)"""
    if ctx.model.increment_model is IncrementModel.RADEMACHER:
        model = ctx.model
    else:
        steps = max(1, min(ctx.model.n_steps, 10) // ctx.model.dim)
        model = GaussianPathModel.unit(steps, ctx.model.dim, IncrementModel.RADEMACHER)
    residuals = {name: clark_ocone_residual(model, FUNCTIONALS[name], ctx.settings)
                 for name in CLARK_OCONE_FUNCTIONALS}
    worst = max(residuals.values())
    return CheckResult('clark-ocone', worst, 0.0, None, worst <= 1e-12,
                       {'residuals': residuals, 'n_steps': model.n_steps, 'dim': model.dim})


def check_drift_recovery(ctx: GaussianContext) -> CheckResult:
    recovery = lab.drift_from_density(ctx.model, ctx.drift, ctx.seed, ctx.n, ctx.settings)
    if ctx.drift.deterministic:
        estimate, passed = recovery.max_abs_error, recovery.max_abs_error <= 1e-6
    else:
        estimate = recovery.relative_l2_error
        passed = estimate is not None and estimate <= 0.05
    return CheckResult('drift-recovery', estimate, 0.0, None, passed, recovery.as_dict())


CHECKS: Dict[str, Callable[[GaussianContext], CheckResult]] = {
    'entropy': check_entropy,
    'follmer': check_follmer,
    'optimal': check_optimal,
    'hybrid': check_hybrid,
    'strong': check_strong,
    'dual': check_dual,
    'talagrand': check_talagrand,
    'clark-ocone': check_clark_ocone,
    'drift-recovery': check_drift_recovery,
}


def parse_checks(text: Optional[str]) -> List[str]:
    names = [c.strip() for c in (text or ','.join(DEFAULT_CHECKS)).split(',') if c.strip()]
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise ValidationError(f"unknown checks {unknown}; choose from {', '.join(GAUSSIAN_CHECKS)}", '--checks')
    return names


def run_gaussian_checks(model: GaussianPathModel, drift: DriftSpec, checks: Sequence[str], seed: int, n: int,
                        settings: Optional[MonteCarloSettings] = None,
                        hybrid_m: Optional[Sequence[int]] = None) -> List[CheckResult]:
    ctx = GaussianContext(model, drift, seed, n, settings or MonteCarloSettings(), hybrid_m)
    results = []
    for name in checks:
        logger.info(f"gaussian check {name} ({drift.kind}, N={model.n_steps}, n={n})")
        result = CHECKS[name](ctx)
        if not result.passed:
            logger.warning(f"check {name} failed: estimate={result.estimate} oracle={result.oracle}")
        results.append(result)
    return results


# ============================================================================
# FINITE BATTERY
# ============================================================================

def causality_equivalence(seed: int, count: int, settings: Optional[SolverSettings] = None) -> CheckResult:
    """Both causality tests agree on random couplings (half built causal)"""
    disagreements, causal_seen = [], 0
    for k in range(count):
        rng = instance_rng(seed, k)
        E = random_space(rng)
        S = random_space(rng, [int(a) for a in rng.integers(1, 4, size=E.steps)], 'coordinate')
        eta = random_measure(rng, E)
        gamma = random_causal_coupling(rng, eta, S) if k % 2 == 0 else random_coupling(rng, eta, S)
        first = bool(is_causal(gamma, settings))
        second = is_causal_via_conditional_laws(gamma, settings)
        causal_seen += first
        if first != second or (k % 2 == 0 and not first):
            disagreements.append(k)
    return CheckResult('causality-equivalence', float(len(disagreements)), 0.0, None, not disagreements,
                       {'instances': count, 'causal': causal_seen, 'disagreements': disagreements[:20]})


def _certificate_ok(solution, settings: SolverSettings) -> bool:
    scale = max(1.0, abs(float(solution.value)))
    return (abs(float(solution.gap)) <= settings.lp_gap_rel_tol * scale
            and solution.dual.max_violation <= settings.lp_gap_rel_tol * scale)


def ordering_and_certificates(seed: int, count: int, settings: Optional[SolverSettings] = None) -> List[CheckResult]:
    """Product plan causal, S >= T, LP certificates and Monge >= Kantorovich"""
    settings = settings or SolverSettings()
    product_fail, order_fail, cert_fail, monge_fail, causal_fail = [], [], [], [], []
    for k in range(count):
        inst = random_instance(seed, k)
        if not is_causal(product_coupling(inst.eta, inst.nu), settings):
            product_fail.append(k)
        S = solve_causal_mk(inst.eta, inst.nu, inst.cost, settings=settings)
        T = solve_classic_mk(inst.eta, inst.nu, inst.cost, settings=settings)
        if float(S.value) < float(T.value) - 1e-9:
            order_fail.append(k)
        for sol in (S, T):
            if sol.is_optimal and not _certificate_ok(sol, settings):
                cert_fail.append(k)
        if S.is_optimal and not is_causal(S.plan, settings):
            causal_fail.append(k)
        if max(inst.eta.space.n_paths, inst.nu.space.n_paths) <= settings.monge_max_paths:
            value, _ = solve_causal_monge_bruteforce(inst.eta, inst.nu, inst.cost, settings)
            if value is not None and float(value) < float(S.value) - 1e-9:
                monge_fail.append(k)
    return [
        CheckResult('product-plan-causal', float(len(product_fail)), 0.0, None, not product_fail,
                    {'instances': count, 'failures': product_fail[:20]}),
        CheckResult('causal-above-classic', float(len(order_fail)), 0.0, None, not order_fail,
                    {'instances': count, 'failures': order_fail[:20]}),
        CheckResult('lp-certificates', float(len(cert_fail)), 0.0, None, not cert_fail,
                    {'instances': count, 'failures': cert_fail[:20]}),
        CheckResult('causal-plan-causal', float(len(causal_fail)), 0.0, None, not causal_fail,
                    {'instances': count, 'failures': causal_fail[:20]}),
        CheckResult('monge-above-kantorovich', float(len(monge_fail)), 0.0, None, not monge_fail,
                    {'instances': count, 'failures': monge_fail[:20]}),
    ]


def degenerate_agreement(seed: int, count: int, settings: Optional[SolverSettings] = None) -> CheckResult:
    worst = 0.0
    for k in range(count):
        inst = random_instance(seed, 10_000 + k, filtration='degenerate')
        S = solve_causal_mk(inst.eta, inst.nu, inst.cost, settings=settings)
        T = solve_classic_mk(inst.eta, inst.nu, inst.cost, settings=settings)
        worst = max(worst, abs(float(S.value) - float(T.value)))
    return CheckResult('degenerate-filtrations', worst, 0.0, None, worst <= 1e-9, {'instances': count})


def anticipation_values(settings: Optional[SolverSettings] = None) -> CheckResult:
    inst = anticipation_instance()
    exact_S = solve_causal_mk(inst.eta, inst.nu, inst.cost, exact=True, settings=settings)
    exact_T = solve_classic_mk(inst.eta, inst.nu, inst.cost, exact=True, settings=settings)
    float_S = solve_causal_mk(inst.eta.as_float(), inst.nu.as_float(), inst.cost, settings=settings)
    float_T = solve_classic_mk(inst.eta.as_float(), inst.nu.as_float(), inst.cost, settings=settings)
    passed = (exact_S.value == Fraction(1, 2) and exact_T.value == 0
              and abs(float_S.value - 0.5) <= 1e-9 and abs(float_T.value) <= 1e-9)
    return CheckResult('anticipation', float(exact_S.value), 0.5, None, passed, {
        'causal_exact': exact_S.value, 'classic_exact': exact_T.value,
        'causal_float': float_S.value, 'classic_float': float_T.value,
    })


def entropic_agreement(seed: int, count: int, epsilon: float = 1e-3,
                       settings: Optional[SolverSettings] = None) -> CheckResult:
    """Entropic values within 5e-3 of the causal LP on small instances"""
    worst, worst_residual, statuses = 0.0, 0.0, []
    for k in range(count):
        inst = random_instance(seed, 20_000 + k, max_steps=2, max_alphabet=2)
        lp = solve_causal_mk(inst.eta, inst.nu, inst.cost, settings=settings)
        ent = solve_causal_entropic(inst.eta, inst.nu, inst.cost, epsilon, settings)
        statuses.append(ent.status.value)
        worst = max(worst, abs(float(ent.value) - float(lp.value)))
        worst_residual = max(worst_residual, ent.residuals.get('causality', 0.0))
    converged = all(s == SolveStatus.OPTIMAL.value for s in statuses)
    return CheckResult('entropic-vs-lp', worst, 0.0, None, converged and worst <= 5e-3,
                       {'instances': count, 'epsilon': epsilon, 'max_causality_residual': worst_residual})


def convexity(seed: int, count: int, settings: Optional[SolverSettings] = None) -> CheckResult:
    """S(lam nu1 + (1-lam) nu2 | eta) <= lam S(nu1|eta) + (1-lam) S(nu2|eta)"""
    worst = -np.inf
    for k in range(count):
        rng = instance_rng(seed, 30_000 + k)
        E = random_space(rng)
        S = random_space(rng, [int(a) for a in rng.integers(1, 4, size=E.steps)])
        eta = random_measure(rng, E)
        nu1, nu2 = random_measure(rng, S), random_measure(rng, S)
        lam = Fraction(int(rng.integers(1, 10)), 10)
        cost = random_cost(rng, E, S)
        mixed = PathMeasure(S, [lam * a + (1 - lam) * b for a, b in zip(nu1.weights, nu2.weights)])
        lhs = float(solve_causal_mk(eta, mixed, cost, settings=settings).value)
        rhs = float(lam) * float(solve_causal_mk(eta, nu1, cost, settings=settings).value) + \
            float(1 - lam) * float(solve_causal_mk(eta, nu2, cost, settings=settings).value)
        worst = max(worst, lhs - rhs)
    return CheckResult('convexity', float(worst), 0.0, None, worst <= 1e-9, {'triples': count})


# ============================================================================
# BRIDGE BATTERY
# ============================================================================

def bridge_cases() -> Dict[str, EndpointMarginals]:
    return {
        'standard-normal': gaussian_on_grid(0.0, [np.linspace(-4.0, 4.0, 33)]),
        'pinned-shift': gaussian_on_grid(1.0, [np.linspace(-6.0, 6.0, 241)]),
        'two-point': EndpointMarginals([np.array([-1.0, 1.0])], np.array([0.5, 0.5])),
    }


BRIDGE_ORACLES = {'standard-normal': (0.0, 1e-3), 'pinned-shift': (0.5, 1e-3)}
BRIDGE_SUBSTITUTIONS = {
    'pinned-shift': {
        'target': 'N(1, 1) binned on a 241-node grid over [-6, 6]',
        'replaces': 'point mass at a = 1, which owns every cell and has entropy 0 under the cell reference',
        'oracle': 'a^2 / 2 = 0.5',
    },
}


def bridge_battery(seed: int, n: int, n_steps: int, settings: Optional[MonteCarloSettings] = None,
                   verify: bool = True) -> List[CheckResult]:
    settings = settings or MonteCarloSettings()
    results = []
    for name, marginals in bridge_cases().items():
        model = GaussianPathModel.unit(n_steps, marginals.dim)
        solution = solve_schrodinger_bridge(marginals, settings=settings, model=model)
        errors = solution.errors
        monotone = all(b <= a + 1e-15 for a, b in zip(errors, errors[1:]))
        tiltings = {k: endpoint_entropy(v, solution.reference) for k, v in feasible_tiltings(marginals).items()}
        below = all(solution.entropy <= v + 1e-12 for v in tiltings.values())
        details: Dict[str, Any] = {'solution': solution.as_dict(), 'tiltings': tiltings,
                                   'monotone_errors': monotone}
        if name in BRIDGE_SUBSTITUTIONS:
            details['substitution'] = BRIDGE_SUBSTITUTIONS[name]
        oracle, tol = BRIDGE_ORACLES.get(name, (None, None))
        passed = solution.status is SolveStatus.OPTIMAL and monotone and below \
            and max(solution.marginal_errors()) <= 1e-9
        if oracle is not None:
            passed &= abs(solution.entropy - oracle) <= tol
        else:
            brute = two_atom_minimum(marginals)
            details['two_atom_minimum'] = brute
            oracle = brute
            passed &= abs(solution.entropy - brute) <= 1e-9
            weights = solution.h_weights
            details['symmetric_potentials'] = bool(np.allclose(weights, weights[::-1], atol=1e-12))
            passed &= details['symmetric_potentials']
        if verify:
            check = mikami_value_check(model, marginals, seed, n, solution, settings=settings)
            details['control'] = check.as_dict()
            passed &= check.passed
        results.append(CheckResult(f"bridge-{name}", solution.entropy, oracle, None, bool(passed), details))

    path_kl, endpoint_kl = pinned_mixture_path_entropy(8, {0: 0.25, 4: 0.5, 8: 0.25}, settings)
    results.append(CheckResult('bridge-pinned-mixture', path_kl, endpoint_kl, None,
                               abs(path_kl - endpoint_kl) <= 1e-10, {'n_steps': 8}))
    return results


# ============================================================================
# SUITE
# ============================================================================

@dataclass
class SuiteSizes:
    instances: int = 1000
    lp_instances: int = 100
    degenerate: int = 50
    entropic: int = 20
    convexity: int = 100
    n_steps: int = 200
    samples: int = 100_000
    recovery_steps: int = 100
    bridge_steps: int = 200
    bridge_samples: int = 100_000

    @classmethod
    def quick(cls) -> 'SuiteSizes':
        return cls(instances=200, lp_instances=30, degenerate=10, entropic=5, convexity=20,
                   n_steps=20, samples=8192, recovery_steps=10, bridge_steps=50,
                   bridge_samples=32768)


@dataclass
class SuiteReport:
    sections: Dict[str, List[CheckResult]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for checks in self.sections.values() for c in checks)

    def as_dict(self) -> Dict[str, Any]:
        return {name: [c.as_dict() for c in checks] for name, checks in self.sections.items()}


SUITE_DRIFTS = {
    'constant': DriftSpec.constant(1.0),
    'ou': DriftSpec.ou(1.0),
    'tanh': DriftSpec.tanh(1.0, 1.0),
}


def run_suite(seed: int, sizes: Optional[SuiteSizes] = None, solver: Optional[SolverSettings] = None,
              mc: Optional[MonteCarloSettings] = None,
              progress: Optional[Callable[[str], None]] = None) -> SuiteReport:
    """Acceptance battery; a pure function of (seed, sizes, settings)"""
    sizes = sizes or SuiteSizes()
    solver = solver or SolverSettings()
    mc = mc or MonteCarloSettings()
    report = SuiteReport()

    def section(name: str, build: Callable[[], List[CheckResult]]) -> None:
        if progress:
            progress(name)
        logger.info(f"suite section {name}")
        report.sections[name] = build()

    section('finite', lambda: [
        causality_equivalence(seed, sizes.instances, solver),
        *ordering_and_certificates(seed, sizes.lp_instances, solver),
        degenerate_agreement(seed, sizes.degenerate, solver),
        anticipation_values(solver),
        entropic_agreement(seed, sizes.entropic, settings=solver),
        convexity(seed, sizes.convexity, solver),
    ])
    model = GaussianPathModel.unit(sizes.n_steps)
    for name, drift in SUITE_DRIFTS.items():
        checks = ['follmer', 'optimal', 'strong', 'dual', 'talagrand']
        if name == 'constant':
            checks.insert(2, 'hybrid')
        section(f"gaussian-{name}", lambda d=drift, c=checks: run_gaussian_checks(
            model, d, c, seed, sizes.samples, mc))
    recovery_model = GaussianPathModel.unit(sizes.recovery_steps)
    section('drift-recovery', lambda: [
        run_gaussian_checks(recovery_model, SUITE_DRIFTS[k], ['drift-recovery'], seed, sizes.samples, mc)[0]
        for k in ('constant', 'ou')
    ])
    section('clark-ocone', lambda: run_gaussian_checks(
        GaussianPathModel.unit(10, 1, IncrementModel.RADEMACHER), DriftSpec.zero(), ['clark-ocone'],
        seed, 1, mc))
    section('bridge', lambda: bridge_battery(seed, sizes.bridge_samples, sizes.bridge_steps, mc))
    return report
