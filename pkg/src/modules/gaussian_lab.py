"""
Gaussian lab - entropy, causal quadratic cost and drift identities

Monte Carlo estimators on the discretized Wiener model. Under nu the
observed path is X from the forward recursion and the driving increments
dB are the Girsanov image V(X) = X + sum_k b_k(X) dt. All estimators on
the noise stream see the same paths for the same seed, so paired
differences carry small joint standard errors.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from . import regression
from .gaussian_model import (
    DriftSpec,
    GaussianPathModel,
    estimate,
    forward_recursion,
    TiltedMeasure,
    path_from_increments,
)
from .malliavin import malliavin_gradient
from .rng import (
    STREAM_CLOUD,
    STREAM_FRESH,
    STREAM_NOISE,
    STREAM_REFERENCE,
    Chunk,
    chunk_rng,
    map_chunks,
)
from .transport_base import MCEstimate, MonteCarloSettings, SizeGuardError, ValidationError

logger = logging.getLogger(__name__)


# ============================================================================
# CLOSED FORMS
# ============================================================================

def ou_variance(model: GaussianPathModel, lam: float, k: int) -> float:
    """Var X_k of the discrete OU recursion, per component"""
    r = 1.0 - lam * model.dt
    if abs(1.0 - r * r) < 1e-300:
        return k * model.dt
    return model.dt * (1.0 - r ** (2 * k)) / (1.0 - r * r)


def closed_form_energy(model: GaussianPathModel, drift: DriftSpec) -> Optional[float]:
    """
    Exact discrete-time E_nu sum_k |b_k|^2 dt (= 2H)

    None for drifts without a closed form.
    """
    if drift.kind == 'zero':
        return 0.0
    if drift.kind == 'constant':
        a = np.broadcast_to(np.asarray(drift.params['a'], dtype=float), (model.dim,))
        return float(np.sum(a * a))
    if drift.kind == 'ou':
        lam = drift.params['lam']
        total = sum(ou_variance(model, lam, k) for k in range(model.n_steps))
        return float(lam * lam * total * model.dt * model.dim)
    return None


def continuous_energy(drift: DriftSpec, dim: int = 1) -> Optional[float]:
    """Continuous-time 2H on [0, 1] for constant and OU drifts"""
    if drift.kind == 'zero':
        return 0.0
    if drift.kind == 'constant':
        a = np.broadcast_to(np.asarray(drift.params['a'], dtype=float), (dim,))
        return float(np.sum(a * a))
    if drift.kind == 'ou':
        lam = drift.params['lam']
        if lam == 0:
            return 0.0
        return float(dim * lam / 2.0 * (1.0 - continuous_ou_variance(lam)))
    return None


def continuous_ou_variance(lam: float, t: float = 1.0) -> float:
    """Var X_t of the continuous OU process dX = dB - lam X dt"""
    if lam == 0:
        return t
    return float((1.0 - np.exp(-2.0 * lam * t)) / (2.0 * lam))


# ============================================================================
# SAMPLING HELPERS
# ============================================================================

@dataclass
class NuChunk:
    """One chunk of nu-samples with its driving noise"""
    chunk: Chunk
    seed: int
    X: np.ndarray       # (m, N+1, d)
    dB: np.ndarray      # (m, N, d)
    b: np.ndarray       # (m, N, d)

    @property
    def dX(self) -> np.ndarray:
        return np.diff(self.X, axis=1)


def _nu_statistics(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                   settings: MonteCarloSettings, statistic: Callable[[NuChunk], Dict[str, np.ndarray]],
                   stream: int = STREAM_NOISE) -> Dict[str, np.ndarray]:
    """Per-sample statistics over nu-samples; aborted samples are dropped"""
    def run(chunk: Chunk, rng: np.random.Generator):
        dB = model.draw_increments(rng, chunk.size)
        X, b, aborted, diagnostics = forward_recursion(model, drift, dB, settings.drift_overflow)
        values = statistic(NuChunk(chunk, seed, X, dB, b))
        return {key: value[~aborted] for key, value in values.items()}, len(diagnostics)

    parts = map_chunks(run, n, seed, stream, settings)
    aborted = sum(p[1] for p in parts)
    if aborted:
        logger.warning(f"{aborted} of {n} samples aborted on drift overflow")
    return {key: np.concatenate([p[0][key] for p in parts]) for key in parts[0][0]}


def _energy(b: np.ndarray, dt: float) -> np.ndarray:
    """sum_k |b_k|^2 dt per sample"""
    return np.sum(b * b, axis=(1, 2)) * dt


def _h_norm(du: np.ndarray, dt: float) -> np.ndarray:
    """sum_k |du_k|^2 / dt per sample"""
    return np.sum(du * du, axis=(1, 2)) / dt


def _log_density_along(dX: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    return -np.sum(b * dX, axis=(1, 2)) - 0.5 * np.sum(b * b, axis=(1, 2)) * dt


def _hybrid_increments(nu: NuChunk, model: GaussianPathModel, m: int) -> np.ndarray:
    """Coupled Brownian increments: V(X) up to step m, fresh noise after"""
    coupled = nu.dX + nu.b * model.dt
    if m < model.n_steps:
        fresh = model.draw_increments(chunk_rng(nu.seed, STREAM_FRESH, nu.chunk.index), nu.chunk.size)
        coupled[:, m:] = fresh[:, m:]
    return coupled


def _settings(settings: Optional[MonteCarloSettings]) -> MonteCarloSettings:
    return settings or MonteCarloSettings()


def _paired(values: np.ndarray, seed: int) -> Dict[str, Any]:
    est = estimate(values, seed)
    return {'value': est.value, 'standard_error': est.standard_error}


# ============================================================================
# ENTROPY AND FOLLMER ENERGY
# ============================================================================

def relative_entropy(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                     settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """
    H(nu | mu) = E_nu[log d(nu)/d(mu)]

    The primary estimate averages the log-density along nu-samples; the
    energy estimator 1/2 E_nu sum |b_k|^2 dt and the paired difference are
    in details.
    """
    settings = _settings(settings)
    model.require_gaussian('relative_entropy')
    data = _nu_statistics(model, drift, seed, n, settings, lambda nu: {
        'log_density': _log_density_along(nu.dX, nu.b, model.dt),
        'half_energy': 0.5 * _energy(nu.b, model.dt),
    })
    result = estimate(data['log_density'], seed)
    energy = estimate(data['half_energy'], seed)
    difference = estimate(data['log_density'] - data['half_energy'], seed)
    result.details = {
        'energy_estimator': {'value': energy.value, 'standard_error': energy.standard_error},
        'difference': {'value': difference.value, 'standard_error': difference.standard_error},
        'estimators_agree': abs(difference.value) <= 3 * difference.standard_error + 1e-12,
    }
    logger.info(f"H(nu|mu) = {result.value:.6f} +- {result.standard_error:.2e}")
    return result


def follmer_energy(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                   settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """E_nu |V - I|_H^2 = E_nu sum_k |b_k(X)|^2 dt, checked against 2 log-density"""
    settings = _settings(settings)
    model.require_gaussian('follmer_energy')
    data = _nu_statistics(model, drift, seed, n, settings, lambda nu: {
        'energy': _energy(nu.b, model.dt),
        'two_h': 2.0 * _log_density_along(nu.dX, nu.b, model.dt),
    })
    result = estimate(data['energy'], seed)
    difference = estimate(data['energy'] - data['two_h'], seed)
    result.details = {
        'two_h': _paired(data['two_h'], seed),
        'difference': {'value': difference.value, 'standard_error': difference.standard_error},
        'identity_holds': abs(difference.value) <= 3 * difference.standard_error + 1e-12,
        'closed_form': closed_form_energy(model, drift),
    }
    return result


def girsanov_martingale(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                        settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """E_mu[exp(log-density)] on mu-samples (should be 1)"""
    settings = _settings(settings)
    model.require_gaussian('girsanov_martingale')

    def run(chunk: Chunk, rng: np.random.Generator) -> np.ndarray:
        dW = model.draw_increments(rng, chunk.size)
        b = drift.along(path_from_increments(dW))
        return np.exp(_log_density_along(dW, b, model.dt))

    return estimate(np.concatenate(map_chunks(run, n, seed, STREAM_REFERENCE, settings)), seed)


# ============================================================================
# COUPLINGS
# ============================================================================

def optimal_plan_cost(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                      settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """
    Cost of the plan (V x I)_* nu: E |X - V(X)|_H^2

    V(X) is rebuilt from X alone; its standardized increments are tested for
    N(0, 1) (normaltest and KS, Bonferroni over both). A rejection at
    normality_alpha flags the result.
    """
    settings = _settings(settings)
    model.require_gaussian('optimal_plan_cost')
    limit = max(1, 1_000_000 // (model.n_steps * model.dim))

    def statistic(nu: NuChunk) -> Dict[str, np.ndarray]:
        recovered = nu.dX + drift.along(nu.X) * model.dt
        z = recovered / model.sqrt_dt
        return {
            'cost': _h_norm(nu.dX - recovered, model.dt),
            'z': z.reshape(len(z), -1),
        }

    data = _nu_statistics(model, drift, seed, n, settings, statistic)
    result = estimate(data['cost'], seed)
    z = data['z'][:limit].ravel()
    p_normal = float(stats.normaltest(z).pvalue) if z.size >= 20 else 1.0
    p_ks = float(stats.kstest(z, 'norm').pvalue)
    flagged = min(p_normal, p_ks) * 2 < settings.normality_alpha
    if flagged:
        logger.warning(f"optimal plan: V(X) increments fail the normality test (p={min(p_normal, p_ks):.2e})")
    result.details = {
        'normality_p': {'normaltest': p_normal, 'kstest': p_ks},
        'flagged': flagged,
        'closed_form': closed_form_energy(model, drift),
    }
    return result


def reverse_plan_cost(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                      settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """Cost of (I x V)_* nu in Pi_c(nu, mu); equals 2H and bounds the reverse causal problem"""
    settings = _settings(settings)
    model.require_gaussian('reverse_plan_cost')
    data = _nu_statistics(model, drift, seed, n, settings, lambda nu: {
        'cost': _h_norm(drift.along(nu.X) * model.dt, model.dt),
    })
    return estimate(data['cost'], seed)


def hybrid_coupling_cost(model: GaussianPathModel, drift: DriftSpec, m: int, seed: int, n: int,
                         settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """
    Cost of the causal coupling with B = V(X) on steps < m, fresh noise after

    Closed form: 2H + 2d(N - m) (cross terms vanish by predictability).
    """
    settings = _settings(settings)
    model.require_gaussian('hybrid_coupling_cost')
    if not 0 <= m <= model.n_steps:
        raise ValidationError(f"m must be in 0..{model.n_steps}, got {m}", '--hybrid-m')
    data = _nu_statistics(model, drift, seed, n, settings, lambda nu: {
        'cost': _h_norm(nu.dX - _hybrid_increments(nu, model, m), model.dt),
    })
    result = estimate(data['cost'], seed)
    energy = closed_form_energy(model, drift)
    result.details = {
        'm': m,
        'closed_form': None if energy is None else energy + 2.0 * model.dim * (model.n_steps - m),
    }
    return result


@dataclass
class CouplingSamples:
    """Samples (B, X) of a causal coupling of (mu, nu)"""
    X: np.ndarray       # (n, N+1, d) nu-paths
    B: np.ndarray       # (n, N+1, d) coupled Brownian paths
    drift: np.ndarray   # (n, N, d) b_k(X)
    m: int
    seed: int


def coupling_samples(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int, m: Optional[int] = None,
                     settings: Optional[MonteCarloSettings] = None) -> CouplingSamples:
    """Hybrid coupling samples; m = N (default) is the optimal plan, m = 0 the product plan"""
    settings = _settings(settings)
    model.require_gaussian('coupling_samples')
    m = model.n_steps if m is None else m
    if not 0 <= m <= model.n_steps:
        raise ValidationError(f"m must be in 0..{model.n_steps}, got {m}", '--hybrid-m')
    data = _nu_statistics(model, drift, seed, n, settings, lambda nu: {
        'X': nu.X,
        'B': path_from_increments(_hybrid_increments(nu, model, m)),
        'b': nu.b,
    })
    return CouplingSamples(X=data['X'], B=data['B'], drift=data['b'], m=m, seed=seed)


@dataclass
class OrthogonalityReport:
    """Per-step E[du_k/dt | X_0..k] + b_k(X) and the cost decomposition"""
    step_norms: List[float]
    p_values: List[float]
    condition_numbers: List[float]
    passed: bool
    decomposition: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'max_step_norm': max(self.step_norms, default=0.0),
            'min_p_value': min(self.p_values, default=1.0),
            'max_condition_number': max(self.condition_numbers, default=1.0),
            'passed': self.passed,
            'decomposition': self.decomposition,
        }


def orthogonality_residual(model: GaussianPathModel, drift: DriftSpec, samples: CouplingSamples,
                           settings: Optional[MonteCarloSettings] = None) -> OrthogonalityReport:
    """
    Regression estimate of E[du_k/dt | X_0..X_k] + b_k(X), u = X - B

    Each step gets a robust Wald test of "conditional mean = 0" (Bonferroni
    over steps at normality_alpha). The decomposition
    E|u|_H^2 = E|v(X)|_H^2 + E|V(X) - B|_H^2 is checked on paired samples.
    """
    settings = _settings(settings)
    dt = model.dt
    du = np.diff(samples.X - samples.B, axis=1)
    target = du / dt + samples.drift
    norms, p_values, conds = [], [], []
    for k in range(model.n_steps):
        fits = regression.conditional_expectation(samples.X, k, dt, target[:, k], settings.regression_basis)
        fitted = np.stack([f.fitted for f in fits], axis=1)
        norms.append(float(np.sqrt(np.mean(np.sum(fitted ** 2, axis=1)))))
        p_values.extend(f.p_value for f in fits)
        conds.extend(f.condition_number for f in fits)
    regression.warn_ill_conditioned(conds, what='orthogonality')
    passed = regression.bonferroni(p_values, settings.normality_alpha)

    recovered = np.diff(samples.X, axis=1) + samples.drift * dt
    lhs = _h_norm(du, dt)
    rhs = _energy(samples.drift, dt) + _h_norm(recovered - np.diff(samples.B, axis=1), dt)
    difference = estimate(lhs - rhs, samples.seed)
    decomposition = {
        'total': _paired(lhs, samples.seed),
        'drift_energy': _paired(_energy(samples.drift, dt), samples.seed),
        'noise_mismatch': _paired(_h_norm(recovered - np.diff(samples.B, axis=1), dt), samples.seed),
        'difference': {'value': difference.value, 'standard_error': difference.standard_error},
        'holds': abs(difference.value) <= 3 * difference.standard_error + 1e-9,
    }
    return OrthogonalityReport(norms, p_values, conds, passed, decomposition)


# ============================================================================
# STRONG SOLUTION
# ============================================================================

def strong_solution_gap(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                        settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """
    E_mu |U - I|_H^2 - 2H

    U(B) is the forward recursion on mu-samples (reference stream); 2H comes
    from the noise stream, so the two are independent and SEs add. details
    also carries max |V(U(B)) - B| (V rebuilt from U(B) alone).
    """
    settings = _settings(settings)
    model.require_gaussian('strong_solution_gap')

    def run(chunk: Chunk, rng: np.random.Generator):
        dB = model.draw_increments(rng, chunk.size)
        X, b, aborted, _ = forward_recursion(model, drift, dB, settings.drift_overflow)
        energy = _h_norm(np.diff(X, axis=1) - dB, model.dt)
        inverse = np.cumsum(np.diff(X, axis=1) + drift.along(X) * model.dt, axis=1)
        residual = float(np.max(np.abs(inverse[~aborted] - np.cumsum(dB[~aborted], axis=1)), initial=0.0))
        return energy[~aborted], residual

    parts = map_chunks(run, n, seed, STREAM_REFERENCE, settings)
    energy_mu = estimate(np.concatenate([p[0] for p in parts]), seed)
    inverse_residual = max(p[1] for p in parts)
    two_h = follmer_energy(model, drift, seed, n, settings)
    joint = float(np.hypot(energy_mu.standard_error, two_h.standard_error))
    gap = MCEstimate(
        value=energy_mu.value - two_h.value, standard_error=joint, n_samples=energy_mu.n_samples, seed=seed,
        details={
            'energy_mu': {'value': energy_mu.value, 'standard_error': energy_mu.standard_error},
            'two_h': {'value': two_h.value, 'standard_error': two_h.standard_error},
            'inverse_residual': inverse_residual,
        },
    )
    logger.info(f"strong-solution gap {gap.value:.3e} +- {joint:.2e}, inverse residual {inverse_residual:.1e}")
    return gap


# ============================================================================
# DRIFT RECOVERY
# ============================================================================

@dataclass
class DriftRecovery:
    """Recovered drift -E[D_k log rho | F_k] against the constructing drift"""
    relative_l2_error: Optional[float]
    absolute_l2_error: float
    max_abs_error: float
    step_errors: List[float]
    n_samples: int

    def as_dict(self) -> Dict[str, Any]:
        return {
            'relative_l2_error': self.relative_l2_error,
            'absolute_l2_error': self.absolute_l2_error,
            'max_abs_error': self.max_abs_error,
            'n_samples': self.n_samples,
        }


def drift_from_density(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                       settings: Optional[MonteCarloSettings] = None) -> DriftRecovery:
    """
    Recovers b_k from the density

    D_k log rho is taken by finite differences on the nu-path itself (every
    perturbation re-evaluates the whole log-density, O(N^2) per path), then
    regressed on X-prefix features.
    """
    settings = _settings(settings)
    model.require_gaussian('drift_from_density')
    log_rho = TiltedMeasure(model, drift).log_density
    data = _nu_statistics(model, drift, seed, n, settings, lambda nu: {
        'X': nu.X,
        'b': nu.b,
        'target': -malliavin_gradient(model, log_rho, nu.dX, settings),
    })
    X, b, target = data['X'], data['b'], data['target']
    errors, norms, worst = [], [], 0.0
    conds: List[float] = []
    for k in range(model.n_steps):
        fits = regression.conditional_expectation(X, k, model.dt, target[:, k], settings.regression_basis)
        fitted = np.stack([f.fitted for f in fits], axis=1)
        conds.extend(f.condition_number for f in fits)
        diff = fitted - b[:, k]
        errors.append(float(np.mean(np.sum(diff ** 2, axis=1))))
        norms.append(float(np.mean(np.sum(b[:, k] ** 2, axis=1))))
        worst = max(worst, float(np.max(np.abs(diff))))
    regression.warn_ill_conditioned(conds, what='drift recovery')
    absolute = float(np.sqrt(sum(errors) * model.dt))
    reference = float(np.sqrt(sum(norms) * model.dt))
    relative = absolute / reference if reference > 0 else None
    logger.info(f"drift recovery: relative L2 error {relative}, max abs error {worst:.2e}")
    return DriftRecovery(relative, absolute, worst, [float(np.sqrt(e)) for e in errors], len(X))


# ============================================================================
# DUALITY
# ============================================================================

def dual_certificate(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int, m: Optional[int] = None,
                     settings: Optional[MonteCarloSettings] = None) -> MCEstimate:
    """
    E_nu[f], f = sum_k |b_k|^2 dt, with its Jensen slack along a plan

    The slack sum_k (|du_k|^2 / dt - |b_k|^2 dt) is measured on the plan
    with hybrid index m (default N, the optimum, where it vanishes). Only
    the direction slack >= 0 is asserted.
    """
    settings = _settings(settings)
    model.require_gaussian('dual_certificate')
    m = model.n_steps if m is None else m
    if not 0 <= m <= model.n_steps:
        raise ValidationError(f"m must be in 0..{model.n_steps}, got {m}", '--hybrid-m')

    def statistic(nu: NuChunk) -> Dict[str, np.ndarray]:
        du = nu.dX - _hybrid_increments(nu, model, m)
        f = _energy(nu.b, model.dt)
        return {
            'f': f,
            'two_h': 2.0 * _log_density_along(nu.dX, nu.b, model.dt),
            'slack': _h_norm(du, model.dt) - f,
            'step_slack': np.sum(du * du, axis=2) / model.dt - np.sum(nu.b * nu.b, axis=2) * model.dt,
        }

    data = _nu_statistics(model, drift, seed, n, settings, statistic)
    result = estimate(data['f'], seed)
    slack = estimate(data['slack'], seed)
    attainment = estimate(data['f'] - data['two_h'], seed)
    step_slack = data['step_slack'].mean(axis=0)
    result.details = {
        'm': m,
        'two_h': _paired(data['two_h'], seed),
        'attainment_difference': {'value': attainment.value, 'standard_error': attainment.standard_error},
        'jensen_slack': {'value': slack.value, 'standard_error': slack.standard_error},
        'min_step_slack': float(step_slack.min()),
        'slack_nonnegative': slack.value >= -3 * slack.standard_error - 1e-12,
    }
    return result


# ============================================================================
# TALAGRAND / LOG-SOBOLEV
# ============================================================================

@dataclass
class TalagrandReport:
    """d2_lower <= d2 <= d2_upper = 2H <= J, with slacks"""
    two_h: MCEstimate
    d2_upper: MCEstimate
    d2_lower: MCEstimate
    fisher: MCEstimate
    talagrand_slack: MCEstimate
    log_sobolev_slack: MCEstimate
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> Dict[str, Any]:
        def pack(e: MCEstimate) -> Dict[str, Any]:
            return {'value': e.value, 'standard_error': e.standard_error, 'n_samples': e.n_samples}
        return {
            'two_h': pack(self.two_h),
            'd2_upper': pack(self.d2_upper),
            'd2_lower': pack(self.d2_lower),
            'fisher_information': pack(self.fisher),
            'talagrand_slack': pack(self.talagrand_slack),
            'log_sobolev_slack': pack(self.log_sobolev_slack),
            'checks': dict(self.checks),
        }


def empirical_cloud_cost(model: GaussianPathModel, drift: DriftSpec, seed: int, cloud: int,
                         size: int, settings: Optional[MonteCarloSettings] = None) -> float:
    """
    Classic transport value between paired clouds {B_i} and {U(B_i)} (uniform weights)

    Cost |x - y|_H^2 between paths; the identity pairing is feasible, so the
    value never exceeds the paired empirical cost.
    """
    settings = _settings(settings)
    rng = chunk_rng(seed, STREAM_CLOUD, cloud)
    dB = model.draw_increments(rng, size)
    X, _, aborted, _ = forward_recursion(model, drift, dB, settings.drift_overflow)
    dX = np.diff(X, axis=1)[~aborted]
    dB = dB[~aborted]
    flat_b = dB.reshape(len(dB), -1)
    flat_x = dX.reshape(len(dX), -1)
    C = (np.sum(flat_b ** 2, axis=1)[:, None] + np.sum(flat_x ** 2, axis=1)[None, :]
         - 2.0 * flat_b @ flat_x.T) / model.dt
    C = np.maximum(C, 0.0)
    if len(dB) == 0:
        raise ValidationError(f"cloud {cloud}: every sample aborted on drift overflow")
    # uniform weights on equal-size clouds: an optimal plan is a permutation
    rows, cols = linear_sum_assignment(C)
    return float(C[rows, cols].mean())


def talagrand_log_sobolev(model: GaussianPathModel, drift: DriftSpec, seed: int, n: int,
                          cloud_size: Optional[int] = None, fisher_samples: int = 2048,
                          settings: Optional[MonteCarloSettings] = None) -> TalagrandReport:
    """
    Transport-entropy-information chain d2_lower <= 2H <= J

    d2_upper is the adapted plan cost; d2_lower averages classic LP values
    over batches of paired clouds; J = E_nu sum_k |D_k log rho|^2 dt on a
    subsample, paired with 2H on the same paths.
    """
    settings = _settings(settings)
    model.require_gaussian('talagrand_log_sobolev')
    size = cloud_size or settings.cloud_max_size
    if size > settings.cloud_max_size or size < 2:
        raise SizeGuardError(f"cloud size must be in 2..{settings.cloud_max_size}, got {size}")

    two_h = follmer_energy(model, drift, seed, n, settings)
    d2_upper = optimal_plan_cost(model, drift, seed, n, settings)

    n_clouds = max(2, min(n // size, 32))
    values = np.array([empirical_cloud_cost(model, drift, seed, c, size, settings) for c in range(n_clouds)])
    d2_lower = estimate(values, seed)
    d2_lower.details = {'cloud_size': size, 'clouds': n_clouds}

    log_rho = TiltedMeasure(model, drift).log_density
    sub = min(n, fisher_samples)
    data = _nu_statistics(model, drift, seed, sub, settings, lambda nu: {
        'fisher': np.sum(malliavin_gradient(model, log_rho, nu.dX, settings) ** 2, axis=(1, 2)) * model.dt,
        'energy': _energy(nu.b, model.dt),
    })
    fisher = estimate(data['fisher'], seed)
    log_sobolev_slack = estimate(data['fisher'] - data['energy'], seed)
    joint = float(np.hypot(two_h.standard_error, d2_lower.standard_error))
    talagrand_slack = MCEstimate(two_h.value - d2_lower.value, joint, d2_lower.n_samples, seed)

    checks = {
        'upper_above_lower': d2_upper.value >= d2_lower.value
        - 3 * float(np.hypot(d2_upper.standard_error, d2_lower.standard_error)) - 1e-9,
        'talagrand': d2_lower.value <= two_h.value + 3 * joint + 1e-9,
        'log_sobolev': log_sobolev_slack.value >= -3 * log_sobolev_slack.standard_error - 1e-9,
    }
    if drift.deterministic:
        # a deterministic shift is a translation: all three quantities coincide
        fd_tol = 1e-6 * max(1.0, abs(two_h.value))
        fisher_joint = float(np.hypot(two_h.standard_error, fisher.standard_error))
        checks['equality'] = (abs(d2_lower.value - two_h.value) <= 3 * joint + fd_tol
                              and abs(fisher.value - two_h.value) <= 3 * fisher_joint + fd_tol)
    report = TalagrandReport(two_h, d2_upper, d2_lower, fisher, talagrand_slack, log_sobolev_slack, checks)
    logger.info(f"talagrand chain: d2_lower={d2_lower.value:.4f} 2H={two_h.value:.4f} J={fisher.value:.4f}")
    return report
