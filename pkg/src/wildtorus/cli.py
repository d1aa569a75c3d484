"""Command-line orchestration.

One invocation runs one experiment into one output directory: it writes
``<name>.json`` with full provenance next to the plots of the experiment and records
the run in the SQLite registry. Exit codes: 0 when every check passes, 1 on a
violated or failed check, 2 on a usage error.
"""
import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, get_args

import numpy as np
from abstractrepo.paging import PageResolver
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from wildtorus import __version__, flow
from wildtorus.annulus_dynamics import (
    DEFAULT_R_PARAM,
    R_PARAM_LIMIT,
    annulus_report,
    basin_disk_check,
    build_fundamental_annulus,
    check_self_covering,
    covering_exponent,
    empirical_escape_bound,
    eventually_onto_check,
    find_periodic_points,
)
from wildtorus.cells import CellSet
from wildtorus.core_maps import limit_measure_check
from wildtorus.exceptions import ParameterError, WildTorusError
from wildtorus.export import emit_plot, write_arcs, write_periodic, write_trajectory
from wildtorus.geometry import Arc
from wildtorus.hyperbolicity import (
    orbit_rate_check,
    verify_skew_cones,
    verify_stable_cone_lemma,
    verify_unstable_cone_lemma,
)
from wildtorus.invariant_set import (
    DEFAULT_DEPTH,
    DEFAULT_RESOLUTION,
    compute_omega,
    forward_invariance_check,
    image_of_boundary_check,
    region_topology,
)
from wildtorus.manifolds import (
    DEFAULT_ALPHA,
    FixedPoint,
    find_fixed_points,
    grow_unstable_manifold,
    limit_source,
    stable_manifold_arcs,
)
from wildtorus.parallel import set_threads, thread_count
from wildtorus.params import MapParams, describe_validation_error, make_flow_params, params_summary
from wildtorus.registry import RegistryDatabase, Run, RunCreateForm, SqlRunRepository, run_filter, run_order
from wildtorus.reports import Provenance, Report, complex_pair, count_violations, dumps, write_json
from wildtorus.tangency import (
    build_repelling_annulus,
    curved_stable_arc,
    robustness_probe,
    stable_arc_tangency,
    wild_escape_bound,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

Command = Literal['attract', 'lemmas', 'manifolds', 'annulus', 'tangency', 'periodic', 'flow', 'report']
FlowCheck = Literal['transitions', 'spectrum', 'foliation', 'return', 'passage', 'inward', 'mu_scan', 'all']
OrderKey = Literal['id', 'command', 'lam', 'mu_ratio', 'seed', 'status', 'violations', 'created_at']
RunStatus = Literal['ok', 'violated', 'failed']

COMMANDS: Tuple[str, ...] = get_args(Command)
FLOW_CHECKS: Tuple[str, ...] = get_args(FlowCheck)
REGISTRY_FILE = 'runs.sqlite'
KEY_ALIASES = {'lambda': 'lam', 'r': 'r_param'}

# (λ, μ/σ) used when the command line leaves them open
DEFAULT_REGIME = {'tangency': (0.999, 1.0), 'flow': (0.95, 0.95)}
PLANAR_REGIME = (0.95, 1.0)

COMMAND_HELP = {
    'attract': 'compute the attractor region and its boundary curves',
    'lemmas': 'sample the cone lemmas and the limit-map measure check',
    'manifolds': 'fixed points, unstable loop and stable arcs of the saddle',
    'annulus': 'fundamental annulus, covering, escape chains and basin checks',
    'tangency': 'curved stable arc, tangency certificate and wild escape bound',
    'periodic': 'periodic sources and saddles in a window',
    'flow': 'integrate the five-dimensional field and compare its return maps',
    'report': 'list recorded runs',
}


class ExperimentConfig(BaseModel):
    """Everything a run depends on; the seed fixes all sampling.

    Field names double as config file keys; ``lambda`` and ``r`` are accepted as
    aliases of ``lam`` and ``r_param``.
    """
    model_config = ConfigDict(extra='forbid', frozen=True, populate_by_name=True)

    command: Command
    lam: Optional[float] = Field(None, alias='lambda', gt=0.0, lt=1.0)
    mu_ratio: Optional[float] = Field(None, gt=0.0, le=1.0)
    grid: Optional[int] = Field(None, ge=8)
    depth: Optional[int] = Field(None, ge=1)
    samples: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 63)
    threads: Optional[int] = Field(None, ge=1)
    out: Path = Path('.')
    registry: Optional[Path] = None
    check: FlowCheck = 'transitions'
    r_param: float = Field(DEFAULT_R_PARAM, alias='r', gt=0.0, lt=R_PARAM_LIMIT)
    alpha: float = Field(DEFAULT_ALPHA, gt=0.0)
    robust: bool = False
    window_re: float = 0.0
    window_im: float = 0.0
    window_radius: Optional[float] = Field(None, gt=0.0)
    period_cap: int = Field(400, ge=1)
    filter_command: Optional[str] = None
    status: Optional[RunStatus] = None
    lam_min: Optional[float] = None
    lam_max: Optional[float] = None
    order_by: OrderKey = 'id'
    descending: bool = False
    page: int = Field(1, ge=1)
    page_size: int = Field(20, ge=1)

    @property
    def registry_path(self) -> Path:
        return self.registry if self.registry is not None else self.out / REGISTRY_FILE

    def map_params(self) -> MapParams:
        lam, ratio = DEFAULT_REGIME.get(self.command, PLANAR_REGIME)
        p = MapParams.planar(self.lam if self.lam is not None else lam)
        ratio = self.mu_ratio if self.mu_ratio is not None else ratio
        return p if ratio == 1.0 else p.with_changes(mu=ratio * p.sigma)

    def provenance(self) -> Dict[str, Any]:
        """Every setting that can change an output; locations and thread count are left out."""
        return self.model_dump(mode='json', exclude={'out', 'registry', 'threads'}, by_alias=True)


def make_config(values: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ParameterError(describe_validation_error(e)) from e


def read_config_file(path: Path) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment and blank lines are skipped."""
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ParameterError(f'cannot read config file {path}: {e}') from e
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key = key.strip().replace('-', '_')
        if not sep or not key:
            raise ParameterError(f'{path}:{number}: expected "key = value", got {line!r}')
        if key in values:
            raise ParameterError(f'{path}:{number}: duplicate key {key!r}')
        values[key] = value.strip()
    return values


class RunBundle(BaseModel):
    """Top-level JSON document of one run."""
    model_config = ConfigDict(extra='forbid')

    provenance: Provenance
    violations: int
    reports: Dict[str, Dict[str, Any]]
    artifacts: List[str] = Field(default_factory=list)


def bundle_schema() -> Dict[str, Any]:
    return RunBundle.model_json_schema()


@dataclass
class Outcome:
    name: str
    reports: Dict[str, Report]
    parameters: Dict[str, Any]
    artifacts: List[Path] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return count_violations(list(self.reports.values()))

    def bundle(self, config: ExperimentConfig) -> RunBundle:
        notes = sorted({note for report in self.reports.values() for note in report.notes})
        provenance = Provenance(version=__version__, command=config.command, seed=config.seed,
                                parameters={'config': config.provenance(), 'model': self.parameters}, notes=notes)
        return RunBundle(provenance=provenance, violations=self.violations,
                         reports={name: report.to_dict() for name, report in self.reports.items()},
                         artifacts=sorted({path.name for path in self.artifacts}))


def _fixed_point(point: FixedPoint) -> Dict[str, Any]:
    return {
        'location': complex_pair(point.location),
        'kind': point.kind.value,
        'eigenvalues': [complex_pair(v) for v in point.eigenvalues],
        'multiplier_product': point.multiplier_product,
    }


def fixed_point_report(p: MapParams) -> Report:
    """Fixed points of ``F`` and the source of ``G†`` against their closed forms."""
    fixed = find_fixed_points(p)
    limit = limit_source()
    saddle = fixed['saddle']
    errors = {
        'limit_source_location': abs(limit.location - complex(0.5, 3 ** 0.5 / 2)),
        'limit_source_product': abs(limit.multiplier_product - 2.0),
    }
    tolerances = {'limit_source_location': 1e-12, 'limit_source_product': 1e-10}
    if p.is_planar:
        got = sorted(abs(v) for v in saddle.eigenvalues)
        expected = sorted([p.lam, 2.0 / (2.0 - p.lam)])
        errors['saddle_location'] = abs(saddle.location - p.saddle_guess)
        errors['saddle_multipliers'] = max(abs(a - b) for a, b in zip(got, expected))
        tolerances.update(saddle_location=1e-10, saddle_multipliers=1e-10)
    failed = sorted(key for key, error in errors.items() if error >= tolerances[key])
    report = Report(check='fixed_points', saddle=_fixed_point(saddle), source=_fixed_point(fixed['source']),
                    limit_source=_fixed_point(limit), errors=errors, violations=len(failed))
    if failed:
        report.witness = {'failed': failed}
    return report


def run_attract(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    region = compute_omega(p, config.grid or DEFAULT_RESOLUTION, config.depth or DEFAULT_DEPTH)
    artifacts = emit_plot(region, out / 'omega', 'pgm', p)
    artifacts += emit_plot([region.outer.arc, region.inner], out / 'boundaries.csv', 'csv')
    reports = {
        'topology': region_topology(region),
        'forward_invariance': forward_invariance_check(p, region, config.samples or 10 ** 4, config.seed),
        'boundary_image': image_of_boundary_check(p, region.outer, region),
    }
    return Outcome('attract', reports, params_summary(p), artifacts)


def run_lemmas(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    n = config.samples or 10 ** 5
    reports = {
        'stable_cone': verify_stable_cone_lemma(p, n, config.seed),
        'unstable_cone': verify_unstable_cone_lemma(p, n, config.seed),
        'skew_cones': verify_skew_cones(p, n, config.seed),
        'orbit_rates': orbit_rate_check(p, seed=config.seed),
        'limit_measure': limit_measure_check(10 * n, config.seed),
    }
    return Outcome('lemmas', reports, params_summary(p))


def run_manifolds(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    unstable = grow_unstable_manifold(p)
    stable = stable_manifold_arcs(p, config.depth or 6)
    artifacts = [write_arcs(out / 'unstable.csv', [unstable]), write_arcs(out / 'stable.csv', stable)]
    return Outcome('manifolds', {'fixed_points': fixed_point_report(p)}, params_summary(p), artifacts)


def run_annulus(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    region = build_fundamental_annulus(p, config.r_param)
    omega = compute_omega(p, config.grid or 256, config.depth or DEFAULT_DEPTH)
    source = find_fixed_points(p)['source'].location
    reports = {
        'annulus': annulus_report(p, region),
        'self_covering': check_self_covering(p, region, config.samples or 10 ** 4, config.seed),
        'covering_exponent': covering_exponent(p, region, omega),
        'eventually_onto': eventually_onto_check(p, CellSet.ball(omega.grid, source, 0.1), omega),
        'escape_bound': empirical_escape_bound(p, seed=config.seed),
        'basin': basin_disk_check(p, seed=config.seed),
    }
    artifacts = [write_arcs(out / 'annulus.csv', [region.outer.arc, region.inner])]
    return Outcome('annulus', reports, {**params_summary(p), 'r': config.r_param}, artifacts)


def run_tangency(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    depth = config.depth or 60
    annulus = build_repelling_annulus(p, config.r_param)
    stable = curved_stable_arc(p, annulus)
    certificate = stable_arc_tangency(p, stable, annulus, depth)
    summary = Report(check='curved_stable_arc', violations=int(not stable.univalent), **stable.summary())
    reports = {
        'tangency': certificate.report(p),
        'stable_arc': summary,
        'wild_bound': wild_escape_bound(p, config.alpha, config.r_param, trials=config.samples or 10,
                                        seed=config.seed),
    }
    if config.robust:
        reports['robustness'] = robustness_probe(p, annulus, depth=depth)
    half = 0.25 * stable.pulled_length
    direction = certificate.unstable_direction / abs(certificate.unstable_direction)
    unstable = Arc.from_points(certificate.point + np.linspace(-half, half, 65) * direction, label='unstable')
    artifacts = emit_plot((stable.pulled, unstable, certificate.point), out / 'tangency.ppm', 'ppm')
    artifacts += emit_plot([stable.pulled, unstable], out / 'tangency.csv', 'csv')
    parameters = {**params_summary(p), 'r': config.r_param, 'alpha': config.alpha, 'depth': depth}
    return Outcome('tangency', reports, parameters, artifacts)


def run_periodic(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    radius = config.window_radius or 0.5 / (1.0 - p.lam)
    center = complex(config.window_re, config.window_im)
    search = find_periodic_points(p, (center, radius), config.period_cap)
    artifacts = [write_periodic(out / 'periodic.csv', search.orbits)]
    parameters = {**params_summary(p), 'window_radius': radius}
    return Outcome('periodic', {'periodic_points': search.report}, parameters, artifacts)


def run_flow(config: ExperimentConfig, p: MapParams, out: Path) -> Outcome:
    fp = make_flow_params(base=p)
    field = flow.build_field(fp)
    checks = FLOW_CHECKS[:-1] if config.check == 'all' else (config.check,)
    n = config.samples
    reports: Dict[str, Report] = {}
    artifacts: List[Path] = []
    constant: Optional[float] = None
    for check in checks:
        if check == 'transitions':
            legs = flow.unstable_to_stable_check(field, n or 12, config.seed)
            constant = legs.fitted_constant
            reports['unstable_to_stable'] = legs
            reports['stable_to_unstable'] = flow.stable_to_unstable_check(field, n or 8, config.seed)
            start = flow.SECTION_UNSTABLE.samples(p, 1, config.seed, lower=0.5)[0]
            artifacts.append(write_trajectory(out / 'trajectory.csv',
                                              flow.integrate(field, start, flow.ZONE_EDGES[-1])))
        elif check == 'spectrum':
            reports['spectrum'] = flow.singularity_spectrum(field)
        elif check == 'foliation':
            reports['foliation'] = flow.foliation_checks(field, n or 3, config.seed)
        elif check == 'return':
            if constant is None:
                constant = flow.unstable_to_stable_check(field, 4, config.seed).fitted_constant
            reports['first_return'] = flow.first_return_check(field, n or 6, config.seed, constant)
        elif check == 'passage':
            reports['passage'] = flow.passage_time_blowup(field)
        elif check == 'inward':
            reports['inward'] = flow.inward_pointing_check(field, n or 8, config.seed)
        elif check == 'mu_scan':
            reports['mu_scan'] = flow.admissible_mu_scan(fp, n=n or 4, seed=config.seed)
    parameters = {**params_summary(p), **fp.model_dump(mode='json', exclude={'base'}),
                  'amplitude': field.amplitude, 'epsilon_iso_used': field.isotopy.epsilon}
    return Outcome('flow' if config.check == 'all' else config.check, reports, parameters, artifacts)


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, MapParams, Path], Outcome]] = {
    'attract': run_attract,
    'lemmas': run_lemmas,
    'manifolds': run_manifolds,
    'annulus': run_annulus,
    'tangency': run_tangency,
    'periodic': run_periodic,
    'flow': run_flow,
}


def record_run(config: ExperimentConfig, p: MapParams, status: str, violations: int,
               report_path: Optional[Path]) -> Run:
    database = RegistryDatabase.at(config.registry_path)
    try:
        return SqlRunRepository(database).create(RunCreateForm(
            command=config.command,
            lam=p.lam,
            mu_ratio=p.kappa,
            seed=config.seed,
            status=status,
            violations=violations,
            report_path=None if report_path is None else str(report_path),
            version=__version__,
        ))
    finally:
        database.dispose()


def list_runs(config: ExperimentConfig) -> List[Run]:
    path = config.registry_path
    if not path.is_file():
        raise ParameterError(f'no run registry at {path}')
    database = RegistryDatabase.at(path)
    try:
        paging = PageResolver(page_size=config.page_size, start_page=1).get_page(config.page)
        return SqlRunRepository(database).get_collection(
            run_filter(config.filter_command, config.status, config.lam_min, config.lam_max),
            run_order(config.order_by, config.descending),
            paging,
        )
    finally:
        database.dispose()


def run_experiment(config: ExperimentConfig) -> int:
    p = config.map_params()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    status, violations, report_path = 'failed', 0, None
    try:
        outcome = EXPERIMENTS[config.command](config, p, out)
        report_path = write_json(out / f'{outcome.name}.json', outcome.bundle(config))
        violations = outcome.violations
        status = 'violated' if violations else 'ok'
    finally:
        run = record_run(config, p, status, violations, report_path)
        logger.info('run %d (%s) recorded in %s', run.id, status, config.registry_path)
    for name, report in outcome.reports.items():
        if not report.passed:
            logger.error('%s: %d violation(s), witness %r', name, report.violations, report.witness)
    return EXIT_VIOLATION if violations else EXIT_OK


def run(config: ExperimentConfig) -> int:
    """Runs one configured command and returns its exit code."""
    set_threads(config.threads)
    try:
        thread_count()
        if config.command == 'report':
            runs = list_runs(config)
            sys.stdout.write(dumps([item.model_dump(mode='json') for item in runs]))
            return EXIT_OK
        return run_experiment(config)
    finally:
        set_threads(None)


def _experiment_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--lambda', dest='lam', type=float, help='contraction parameter in (0, 1)')
    parser.add_argument('--mu-ratio', type=float, help='mu/sigma in (0, 1]')
    parser.add_argument('--grid', type=int, help='grid resolution per side')
    parser.add_argument('--depth', type=int, help='backward depth, lift depth or stable-arc depth')
    parser.add_argument('--samples', type=int, help='sample count of the sampled checks')
    parser.add_argument('--check', choices=FLOW_CHECKS, help='flow check to run')
    parser.add_argument('--r', dest='r_param', type=float, help='inner radius parameter of the annulus')
    parser.add_argument('--alpha', type=float, help='radius of the local unstable manifolds')
    parser.add_argument('--robust', action='store_const', const=True, help='also probe perturbed maps')
    parser.add_argument('--window-re', type=float)
    parser.add_argument('--window-im', type=float)
    parser.add_argument('--window-radius', type=float)
    parser.add_argument('--period-cap', type=int)


def _report_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--command', dest='filter_command', help='only runs of this command')
    parser.add_argument('--status', choices=get_args(RunStatus))
    parser.add_argument('--lam-min', type=float)
    parser.add_argument('--lam-max', type=float)
    parser.add_argument('--order-by', choices=get_args(OrderKey))
    parser.add_argument('--desc', dest='descending', action='store_const', const=True)
    parser.add_argument('--page', type=int)
    parser.add_argument('--page-size', type=int)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help='flat "key = value" file; flags override it')
    common.add_argument('--seed', type=int, help='seed of every random sample')
    common.add_argument('--threads', type=int, help='worker threads (default: $WILDTORUS_THREADS or 1)')
    common.add_argument('--out', type=Path, help='output directory')
    common.add_argument('--registry', type=Path, help=f'run registry (default: <out>/{REGISTRY_FILE})')
    common.add_argument('-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG')

    parser = argparse.ArgumentParser(prog='wildtorus', description='Experiments on singular endomorphisms and '
                                                                    'their suspension flows.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True, metavar='command')
    for name in COMMANDS:
        sub = commands.add_parser(name, parents=[common], help=COMMAND_HELP[name])
        if name == 'report':
            _report_options(sub)
        else:
            _experiment_options(sub)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    raw = read_config_file(args.config) if args.config is not None else {}
    values: Dict[str, Any] = {KEY_ALIASES.get(key, key): value for key, value in raw.items()}
    flags = {key: value for key, value in vars(args).items()
             if key not in ('config', 'verbose') and value is not None}
    values.update(flags)
    return make_config(values)


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(args.verbose)
    try:
        return run(config_from_args(args))
    except ParameterError as e:
        logger.error('%s', e)
        return EXIT_USAGE
    except WildTorusError as e:
        logger.error('%s: %s', type(e).__name__, e)
        return EXIT_VIOLATION


if __name__ == '__main__':
    sys.exit(main())
