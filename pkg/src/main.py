"""
kausal - causal optimal transport toolkit CLI

Subcommands:
- solve: Monge-Kantorovich problems on finite filtered path spaces
- check: causality of a coupling file
- gaussian verify: Monte Carlo battery on the Gaussian path space
- bridge: endpoint bridge (IPF) with an optional controlled-SDE check
- suite: the full acceptance battery

Exit codes: 0 success, 2 validation error, 3 non-convergence,
4 failed verification check.
"""
import argparse
import logging
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import orjson
from pydantic import BaseModel, ConfigDict, Field
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from config import KausalConfig
from modules.bridge import mikami_value_check, solve_schrodinger_bridge
from modules.causality import generated_filtration, is_causal, is_causal_via_conditional_laws, kernel_tolerance
from modules.checks import SuiteSizes, parse_checks, run_gaussian_checks, run_suite
from modules.gaussian_model import DriftSpec, GaussianPathModel
from modules.report_io import (
    check_rows,
    load_cost,
    load_coupling,
    load_endpoint_marginals,
    load_measure,
    load_model,
    solution_to_dict,
    split_report,
    write_csv,
    write_report,
)
from modules.transport_base import (
    CheckResult,
    IncrementModel,
    KausalError,
    NonConvergenceError,
    SolveMode,
    SolveStatus,
    ValidationError,
    VerificationError,
)
from modules.transport_solver import solve

__version__ = "0.1.0"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NON_CONVERGENCE = 3
EXIT_VERIFICATION = 4

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)
console = Console(stderr=True)


class RunConfig(BaseModel):
    """One CLI invocation, embedded in its report"""
    model_config = ConfigDict(extra="forbid")

    subcommand: str
    inputs: Dict[str, Optional[str]] = Field(default_factory=dict)
    flags: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    samples: Optional[int] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    out: Optional[str] = None


class Timer:
    """Wall-clock phases for the timings sidecar"""

    def __init__(self) -> None:
        self.phases: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - start


def version_string() -> str:
    """git-describe style version; the package version outside a checkout"""
    try:
        result = subprocess.run(
            ['git', 'describe', '--tags', '--always', '--dirty'],
            capture_output=True, text=True, check=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        described = result.stdout.strip()
        if described:
            return f"{__version__}+{described}"
    except (subprocess.CalledProcessError, subprocess.TimeoutExpired, FileNotFoundError):
        pass
    return __version__


def parse_overrides(items: Optional[Sequence[str]]) -> Dict[str, Any]:
    """`--set key=value` pairs; values are JSON when they parse, strings otherwise"""
    overrides: Dict[str, Any] = {}
    for item in items or []:
        if '=' not in item:
            raise ValidationError(f"override {item!r} is not key=value", '--set')
        key, raw = item.split('=', 1)
        try:
            overrides[key.strip()] = orjson.loads(raw)
        except orjson.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='kausal', description="Causal optimal transport toolkit")
    parser.add_argument('--verbose', '-v', action='store_true', help='DEBUG logging')
    parser.add_argument('--config', type=Path, help='JSON config file (default: kausal.json if present)')
    parser.add_argument('--set', action='append', metavar='KEY=VALUE', dest='overrides',
                        help='Override one setting, e.g. --set lp_gap_rel_tol=1e-10')
    sub = parser.add_subparsers(dest='subcommand', required=True)

    p = sub.add_parser('solve', help='Solve a classic, causal or causal-entropic transport problem')
    p.add_argument('--eta', type=Path, required=True, help='Measure file on E')
    p.add_argument('--nu', type=Path, required=True, help='Measure file on S')
    p.add_argument('--cost', type=Path, required=True, help='Cost matrix file')
    p.add_argument('--mode', choices=[m.value for m in SolveMode], default=SolveMode.CAUSAL.value)
    p.add_argument('--epsilon', type=float, help='Entropic regularization (causal-entropic only)')
    p.add_argument('--exact', action='store_true', help='Rational arithmetic')
    p.add_argument('--out', type=Path, default=Path('solve.json'))

    p = sub.add_parser('check', help='Check causality of a coupling')
    p.add_argument('--coupling', type=Path, required=True)
    p.add_argument('--out', type=Path, default=Path('check.json'))

    gaussian = sub.add_parser('gaussian', help='Gaussian path space experiments')
    gsub = gaussian.add_subparsers(dest='action', required=True)
    p = gsub.add_parser('verify', help='Run Monte Carlo checks against closed forms')
    p.add_argument('--model', type=Path, help='Model file {"N", "dt", "d", "increment_model"}')
    p.add_argument('--n-steps', type=int, default=200)
    p.add_argument('--dim', type=int, default=1)
    p.add_argument('--increment-model', choices=[m.value for m in IncrementModel],
                   default=IncrementModel.GAUSSIAN.value)
    p.add_argument('--drift', nargs='+', default=['kind=constant', 'a=1'],
                   help='Drift tokens, e.g. kind=ou lam=1')
    p.add_argument('--checks', help='Comma-separated checks')
    p.add_argument('--hybrid-m', help='Comma-separated switch times of the hybrid check')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--samples', type=int, default=100_000)
    p.add_argument('--out', type=Path, default=Path('gaussian.json'))

    p = sub.add_parser('bridge', help='Endpoint bridge by iterative proportional fitting')
    p.add_argument('--q1', type=Path, required=True, help='Terminal marginal (grid points + weights)')
    p.add_argument('--q0', type=Path, help='Initial marginal (default: the origin)')
    p.add_argument('--tol', type=float, help='L1 marginal tolerance')
    p.add_argument('--verify', action='store_true', help='Simulate the controlled SDE')
    p.add_argument('--n-steps', type=int, default=200)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--samples', type=int, default=100_000)
    p.add_argument('--out', type=Path, default=Path('bridge.json'))

    p = sub.add_parser('suite', help='Run the acceptance battery')
    p.add_argument('--seed', type=int, default=42)
    p.add_argument('--samples', type=int, help='Monte Carlo sample count')
    p.add_argument('--quick', action='store_true', help='Reduced sizes')
    p.add_argument('--out', type=Path, default=Path('reports'), help='Output directory')
    return parser


# ============================================================================
# REPORTS
# ============================================================================

def _report(run_config: RunConfig, config: KausalConfig, result: Dict[str, Any]) -> Dict[str, Any]:
    return {
        'version': version_string(),
        'run': run_config.model_dump(mode='json'),
        'config': config.report_dict(),
        'result': result,
    }


def _checks_table(title: str, checks: Sequence[CheckResult]) -> Table:
    table = Table(title=title)
    table.add_column("check")
    table.add_column("estimate", justify="right")
    table.add_column("oracle", justify="right")
    table.add_column("SE", justify="right")
    table.add_column("pass")
    for c in checks:
        fmt = (lambda v: '' if v is None else f"{float(v):.6g}")
        table.add_row(c.name, fmt(c.estimate), fmt(c.oracle), fmt(c.standard_error),
                      "[green]yes[/green]" if c.passed else "[red]no[/red]")
    return table


def _emit_checks(out: Path, section: str, payload: Dict[str, Any], checks: Sequence[CheckResult],
                 timer: Timer) -> None:
    json_path, csv_path, _ = split_report(out)
    write_report(json_path, payload, timer.phases)
    write_csv(csv_path, check_rows(section, [c.as_dict() for c in checks]),
              ['section', 'name', 'estimate', 'oracle', 'standard_error', 'pass'])


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_solve(args: argparse.Namespace, config: KausalConfig, run_config: RunConfig) -> int:
    timer = Timer()
    settings = config.solver_settings()
    with timer.phase('load'):
        eta = load_measure(args.eta)
        nu = load_measure(args.nu)
        cost = load_cost(args.cost, eta.space, nu.space)
    with timer.phase('solve'):
        solution = solve(eta, nu, cost, SolveMode(args.mode), args.epsilon, args.exact, settings)
    result = solution_to_dict(solution)
    write_report(args.out, _report(run_config, config, result), timer.phases)

    console.print(Panel(f"mode: {args.mode}\nstatus: {solution.status.value}\n"
                        f"value: {result['value_float']}", title="solve"))
    if solution.status is SolveStatus.NOT_CONVERGED:
        raise NonConvergenceError(f"{args.mode} solver did not converge after {solution.iterations} iterations")
    if solution.status is SolveStatus.UNBOUNDED_GUARD:
        raise NonConvergenceError("LP reported an unbounded direction")
    if solution.is_optimal and solution.dual is not None:
        tol = settings.lp_gap_rel_tol * max(1.0, abs(float(solution.value)))
        if abs(float(solution.gap)) > tol:
            raise VerificationError(f"primal-dual gap {float(solution.gap):.3e} exceeds {tol:.1e}")
        if solution.dual.max_violation > tol:
            raise VerificationError(f"dual infeasibility {solution.dual.max_violation:.3e} exceeds {tol:.1e}")
    return EXIT_OK


def cmd_check(args: argparse.Namespace, config: KausalConfig, run_config: RunConfig) -> int:
    timer = Timer()
    settings = config.solver_settings()
    with timer.phase('load'):
        gamma = load_coupling(args.coupling)
    with timer.phase('check'):
        verdict = is_causal(gamma, settings)
        via_laws = is_causal_via_conditional_laws(gamma, settings)
        tol = kernel_tolerance(gamma.first_marginal(), settings)
        first = gamma.first_space
        filtration = [
            {'t': t, 'cells': [[list(first.paths[i]) for i in cell] for cell in generated_filtration(gamma, t, tol)]}
            for t in range(1, first.steps + 1)
        ]
    result = {
        'causal': verdict.causal,
        'causal_via_conditional_laws': via_laws,
        'witness': None if verdict.witness is None else verdict.witness.as_dict(first, gamma.second_space),
        'generated_filtration': filtration,
    }
    write_report(args.out, _report(run_config, config, result), timer.phases)
    style = "green" if verdict.causal else "yellow"
    console.print(f"[{style}]causal: {str(verdict.causal).lower()}[/{style}]")
    if verdict.causal != via_laws:
        raise VerificationError("inclusion and conditional-law characterizations disagree")
    return EXIT_OK


def _model_from(args: argparse.Namespace) -> GaussianPathModel:
    if args.model is not None:
        return load_model(args.model)
    if args.n_steps < 1:
        raise ValidationError(f"must be >= 1, got {args.n_steps}", '--n-steps')
    return GaussianPathModel.unit(args.n_steps, args.dim, IncrementModel(args.increment_model))


def _parse_hybrid_m(text: Optional[str], model: GaussianPathModel) -> Optional[List[int]]:
    if not text:
        return None
    try:
        values = [int(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ValidationError(f"switch times must be integers: {e}", '--hybrid-m') from e
    bad = [m for m in values if not 0 <= m <= model.n_steps]
    if bad:
        raise ValidationError(f"switch times {bad} outside 0..{model.n_steps}", '--hybrid-m')
    return values


def cmd_gaussian_verify(args: argparse.Namespace, config: KausalConfig, run_config: RunConfig) -> int:
    timer = Timer()
    if args.samples < 2:
        raise ValidationError(f"need at least 2 samples, got {args.samples}", '--samples')
    model = _model_from(args)
    drift = DriftSpec.parse(args.drift)
    checks = parse_checks(args.checks)
    hybrid_m = _parse_hybrid_m(args.hybrid_m, model)
    with timer.phase('checks'):
        results = run_gaussian_checks(model, drift, checks, args.seed, args.samples,
                                      config.monte_carlo_settings(), hybrid_m)
    payload = _report(run_config, config, {
        'model': model.to_dict(),
        'drift': drift.describe(),
        'checks': [c.as_dict() for c in results],
    })
    _emit_checks(args.out, 'gaussian', payload, results, timer)
    console.print(_checks_table(f"gaussian verify ({drift.kind})", results))
    failed = [c.name for c in results if not c.passed]
    if failed:
        raise VerificationError(f"failed checks: {', '.join(failed)}")
    return EXIT_OK


def cmd_bridge(args: argparse.Namespace, config: KausalConfig, run_config: RunConfig) -> int:
    timer = Timer()
    mc = config.monte_carlo_settings()
    with timer.phase('load'):
        marginals = load_endpoint_marginals(args.q1, args.q0)
    model = GaussianPathModel.unit(args.n_steps, marginals.dim)
    with timer.phase('ipf'):
        solution = solve_schrodinger_bridge(marginals, args.tol, mc, model=model)
    result: Dict[str, Any] = {'marginals': marginals.to_dict(), 'solution': solution.as_dict()}
    check = None
    if args.verify and solution.status is SolveStatus.OPTIMAL:
        with timer.phase('verify'):
            check = mikami_value_check(model, marginals, args.seed, args.samples, solution, settings=mc)
        result['verification'] = check.as_dict()
    write_report(args.out, _report(run_config, config, result), timer.phases)

    console.print(Panel(f"status: {solution.status.value}\nentropy: {solution.entropy:.10g}\n"
                        f"iterations: {solution.iterations}", title="bridge"))
    if solution.status is SolveStatus.INFEASIBLE:
        raise ValidationError("Q1 charges cells the reference cannot reach", str(args.q1))
    if solution.status is SolveStatus.NOT_CONVERGED:
        raise NonConvergenceError(f"IPF did not reach the tolerance in {solution.iterations} sweeps")
    if check is not None and not check.passed:
        failed = [name for name, ok in check.checks.items() if not ok]
        raise VerificationError(f"bridge verification failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_suite(args: argparse.Namespace, config: KausalConfig, run_config: RunConfig) -> int:
    timer = Timer()
    sizes = SuiteSizes.quick() if args.quick else SuiteSizes()
    if args.samples is not None:
        if args.samples < 2:
            raise ValidationError(f"need at least 2 samples, got {args.samples}", '--samples')
        sizes = replace(sizes, samples=args.samples, bridge_samples=args.samples)

    def progress(name: str) -> None:
        console.print(f"[dim]running {name}...[/dim]")

    with timer.phase('suite'):
        report = run_suite(args.seed, sizes, config.solver_settings(), config.monte_carlo_settings(), progress)
    out_dir: Path = args.out
    payload = _report(run_config, config, {
        'sizes': vars(sizes),
        'passed': report.passed,
        'sections': report.as_dict(),
    })
    write_report(out_dir / 'suite.json', payload, timer.phases)
    rows = [row for name, checks in report.sections.items()
            for row in check_rows(name, [c.as_dict() for c in checks])]
    write_csv(out_dir / 'suite.csv', rows, ['section', 'name', 'estimate', 'oracle', 'standard_error', 'pass'])

    for name, checks in report.sections.items():
        console.print(_checks_table(name, checks))
    if not report.passed:
        failed = [f"{name}/{c.name}" for name, checks in report.sections.items() for c in checks if not c.passed]
        raise VerificationError(f"failed checks: {', '.join(failed)}")
    return EXIT_OK


COMMANDS = {
    'solve': cmd_solve,
    'check': cmd_check,
    'gaussian': cmd_gaussian_verify,
    'bridge': cmd_bridge,
    'suite': cmd_suite,
}


# ============================================================================
# ENTRY POINT
# ============================================================================

def _run_config(args: argparse.Namespace, overrides: Dict[str, Any]) -> RunConfig:
    values = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ('subcommand', 'verbose', 'config', 'overrides')}
    inputs = {k: values.pop(k) for k in ('eta', 'nu', 'cost', 'coupling', 'model', 'q1', 'q0') if k in values}
    seed = values.pop('seed', None)
    samples = values.pop('samples', None)
    out = values.pop('out', None)
    return RunConfig(subcommand=args.subcommand, inputs=inputs, flags=values, seed=seed,
                     samples=samples, overrides=overrides, out=out)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parses argv, runs one subcommand and returns the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on unknown or malformed flags
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )
    try:
        overrides = parse_overrides(args.overrides)
        config = KausalConfig.load(args.config).with_overrides(**overrides)
        run_config = _run_config(args, overrides)
        return COMMANDS[args.subcommand](args, config, run_config)
    except ValidationError as e:
        console.print(f"[red]validation error:[/red] {e}")
        return EXIT_VALIDATION
    except NonConvergenceError as e:
        console.print(f"[yellow]not converged:[/yellow] {e}")
        return EXIT_NON_CONVERGENCE
    except VerificationError as e:
        console.print(f"[red]verification failed:[/red] {e}")
        return EXIT_VERIFICATION
    except KausalError as e:
        console.print(f"[red]error:[/red] {e}")
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
