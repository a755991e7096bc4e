"""
Experiment orchestration: parameter sweeps, convergence studies, DOF
reports and timing comparisons. Every experiment writes one CSV file and,
on request, a long-format plot-data file.
"""

import csv
import itertools
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from django.conf import settings

from .exceptions import InvalidArgumentError, PreconditionerError
from .krylov import BlockPreconditioner, bundle_condition_number, direct_solve, minres
from .manufactured import manufactured_solution
from .mesh import Layout, table_cell_leg
from .norms import energy_error
from .systems import ParameterSet, build_system, problem_fields

logger = logging.getLogger(__name__)

MODES = ('solve', 'cond', 'mms', 'dofs', 'time')
SWEEP_HEADER = ['problem', 'h', 'mu', 'K', 'alpha_bjs', 'eta', 'k', 'precond', 'ndof', 'iters', 'cond',
                'time_s', 'kappa_ratio', 'error']
MMS_HEADER = ['problem', 'h', 'mu', 'K', 'alpha_bjs', 'eta', 'k', 'precond', 'ndof', 'field', 'value',
              'rate', 'error']
DOFS_HEADER = ['problem', 'h', 'field', 'ndof']
TIMING_HEADER = ['problem', 'h', 'system', 'ndof', 'iters', 'time_s', 'ratio', 'error']
PLOT_HEADER = ['figure', 'series', 'x', 'y']

PARAMETER_AXES = ('mu', 'K', 'alpha_bjs', 'eta', 'k', 'kappa_ratio')

# Errors below this are treated as exact, and their rates as saturated.
SATURATION = 1e-10

# Subproblems a coupled solve is compared against, with the number of solves each stands for.
TIMING_PARTS = {
    'darcy-stokes': (('darcy-sub', 1), ('stokes-sub', 1)),
    'stokes-navier': (('navier-sub', 2),),
}

MMS_PROBLEMS = {
    'smooth': ('stokes-sub', 'darcy-sub', 'navier-sub', 'darcy-stokes', 'darcy-stokes-dirichlet',
               'stokes-navier', 'stokes-navier-dirichlet'),
    'polynomial': ('stokes-sub', 'darcy-sub'),
}

# Recoverable failures of a single grid point.
POINT_ERRORS = (PreconditionerError, np.linalg.LinAlgError, RuntimeError, MemoryError)

_POWER = re.compile(r'^([+-]?\d+(?:\.\d*)?)\^([+-]?\d+)$')


def parse_number(text):
    """Parse a float, accepting ``2^-3`` powers and ``inf``."""
    text = str(text).strip().replace(' ', '')
    match = _POWER.match(text)
    if match:
        return float(match.group(1)) ** int(match.group(2))
    try:
        return float(text)
    except ValueError:
        raise InvalidArgumentError(f'not a number: {text!r}') from None


def parse_list(text):
    """Comma-separated numbers."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [parse_number(item) for item in str(text).split(',') if item.strip()]


KEY_ALIASES = {'alpha': 'alpha_bjs', 'problems': 'problem'}


def read_config_file(path):
    """
    Read a flat ``key=value`` experiment file. Blank lines and ``#``
    comments are ignored; keys are normalized to form field names.
    """
    values = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise InvalidArgumentError(f'{path}:{number}: expected key=value, got {line!r}')
        key, value = (part.strip() for part in line.split('=', 1))
        key = key.replace('-', '_')
        values[KEY_ALIASES.get(key, key)] = value
    return values


def format_number(value, digits=10):
    if value is None:
        return ''
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f'{float(value):.{digits}g}'


def solver_defaults():
    """Solver defaults from settings, keyed like ExperimentConfig fields."""
    configured = getattr(settings, 'MPPRECOND', {})
    return {
        'seed': configured.get('SEED', 0),
        'tol': configured.get('TOL', 1e-12),
        'max_iter': configured.get('MAX_ITER', 5000),
        'dense_eig_limit': configured.get('DENSE_EIG_LIMIT', 8000),
        'dense_lu_limit': configured.get('DENSE_LU_LIMIT', 500),
        'lanczos_tol': configured.get('LANCZOS_TOL', 1e-3),
        'jobs': configured.get('JOBS', 1),
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment; grids are tuples, swept in the order of their fields."""
    mode: str
    problems: tuple
    h: tuple
    mu: tuple = (1.0,)
    K: tuple = (1.0,)
    alpha_bjs: tuple = (1.0,)
    eta: tuple = (math.inf,)
    k: tuple = (1.0,)
    kappa_ratio: tuple = (1.0,)
    precond: str = None
    seed: int = 0
    tol: float = 1e-12
    max_iter: int = 5000
    out: str = 'results.csv'
    jobs: int = 1
    dense_eig_limit: int = 8000
    dense_lu_limit: int = 500
    lanczos_tol: float = 1e-3
    plot_data: str = None
    deflate: bool = False
    solution: str = 'smooth'

    def parameter_grid(self):
        """Every parameter combination, lexicographic over the axes."""
        return [dict(zip(PARAMETER_AXES, values))
                for values in itertools.product(*(getattr(self, axis) for axis in PARAMETER_AXES))]


@dataclass(frozen=True)
class GridPoint:
    problem: str
    h: float
    mu: float
    K: float
    alpha_bjs: float
    eta: float
    k: float
    kappa_ratio: float

    @property
    def params(self):
        return parameter_set(vars(self))

    def series(self):
        """Label of the point without problem and h."""
        return ';'.join(f'{axis}={format_number(getattr(self, axis), 6)}' for axis in PARAMETER_AXES)


def parameter_set(values):
    """ParameterSet for a grid mapping; the κ ratio is κ2/κ1 with κ1 = 1."""
    return ParameterSet(mu=values['mu'], K=values['K'], alpha_bjs=values['alpha_bjs'],
                        eta=values['eta'], k=values['k'], kappa1=1.0, kappa2=values['kappa_ratio'])


@dataclass
class ResultRow:
    """One sweep grid point; quantities that were not computed stay None and are written empty."""
    problem: str
    h: float
    mu: float
    K: float
    alpha_bjs: float
    eta: float
    k: float
    kappa_ratio: float
    precond: str = ''
    ndof: int = None
    iterations: int = None
    condition: float = None
    runtime_seconds: float = None
    error: str = ''

    @classmethod
    def for_point(cls, point, precond=None):
        return cls(**vars(point), precond=precond or '')

    def as_csv(self):
        return [
            self.problem, format_number(self.h), format_number(self.mu), format_number(self.K),
            format_number(self.alpha_bjs), format_number(self.eta), format_number(self.k), self.precond,
            format_number(self.ndof), format_number(self.iterations), format_number(self.condition, 8),
            format_number(self.runtime_seconds, 6), format_number(self.kappa_ratio), self.error,
        ]


@dataclass(frozen=True)
class RunSummary:
    path: Path
    rows: int
    failures: int


def _failure(exc):
    return f'{type(exc).__name__}: {exc}'.replace('\n', ' ')


def solve_bundle(bundle, config):
    """MINRES on a bundle; the factorizations are built before the timed solve."""
    preconditioner = BlockPreconditioner(bundle, dense_limit=config.dense_lu_limit, deflate=config.deflate)
    _, report = minres(bundle.operator, preconditioner, bundle.rhs, seed=config.seed, tol=config.tol,
                       max_iter=config.max_iter)
    return report


def evaluate_point(config, point):
    """Build, then solve or analyse, a single grid point. Failures end up in the row's error field."""
    row = ResultRow.for_point(point, config.precond)
    try:
        bundle = build_system(point.problem, point.params, point.h, config.precond)
        row.ndof = bundle.ndof
        row.precond = bundle.variant.value
        if config.mode == 'cond':
            report = bundle_condition_number(bundle, deflate=config.deflate,
                                             dense_limit=config.dense_eig_limit,
                                             tol=config.lanczos_tol, seed=config.seed)
            row.condition = report.condition
        else:
            report = solve_bundle(bundle, config)
            row.iterations = report.iterations
            row.runtime_seconds = report.wall_time
            if not report.converged:
                row.error = f'not converged after {report.iterations} iterations'
    except POINT_ERRORS as exc:
        row.error = _failure(exc)
        logger.warning('%s h=%g %s failed: %s', point.problem, point.h, point.series(), row.error)
    else:
        logger.info('%s h=%g %s: ndof=%s iters=%s cond=%s', point.problem, point.h, point.series(),
                    row.ndof, format_number(row.iterations), format_number(row.condition, 6))
    return row


class ExperimentRunner:
    """
    Runs one ExperimentConfig. ``run`` dispatches on the mode, writes the
    CSV to ``config.out`` and the optional plot data, and reports how many
    rows failed.
    """

    def __init__(self, config):
        self.config = config
        self.plot_rows = []

    def run(self):
        handlers = {
            'solve': self.run_sweep,
            'cond': self.run_sweep,
            'mms': self.run_mms,
            'dofs': self.report_dofs,
            'time': self.run_timing,
        }
        if self.config.mode not in handlers:
            raise InvalidArgumentError(f'unknown mode {self.config.mode!r}')
        header, rows = handlers[self.config.mode]()
        path = write_csv(self.config.out, header, rows)
        if self.config.plot_data:
            write_csv(self.config.plot_data, PLOT_HEADER, self.plot_rows)
        failures = sum(1 for row in rows if row[-1]) if header[-1] == 'error' else 0
        logger.info('%s: %d rows written to %s (%d failed)', self.config.mode, len(rows), path, failures)
        return RunSummary(path=path, rows=len(rows), failures=failures)

    def grid_points(self):
        config = self.config
        return [GridPoint(problem, h, **values)
                for problem in config.problems
                for h in config.h
                for values in config.parameter_grid()]

    def run_sweep(self):
        """solve or cond mode over the Cartesian product of the grids, in grid order."""
        config = self.config
        points = self.grid_points()
        if config.jobs > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                results = list(pool.map(evaluate_point, itertools.repeat(config), points))
        else:
            results = [evaluate_point(config, point) for point in points]

        quantity = 'iterations' if config.mode == 'solve' else 'condition'
        for point, row in zip(points, results):
            value = getattr(row, quantity)
            if value is not None:
                self._plot(f'{point.problem}-{config.mode}', point.series(), point.h, value)
        return SWEEP_HEADER, [row.as_csv() for row in results]

    def run_mms(self):
        """
        Errors of the discrete solution against a manufactured one, level by
        level from the coarsest h, with observed rates and a least-squares
        fit per field.
        """
        config = self.config
        rows = []
        for problem in config.problems:
            if problem not in MMS_PROBLEMS.get(config.solution, ()):
                raise InvalidArgumentError(f'no {config.solution} manufactured solution for {problem!r}')
            for values in config.parameter_grid():
                rows.extend(self._convergence_study(problem, values))
        return MMS_HEADER, rows

    def _convergence_study(self, problem, values):
        config = self.config
        params = parameter_set(values)
        exact = manufactured_solution(problem, params, config.solution)
        prefix = [problem]
        labels = [format_number(values[axis]) for axis in ('mu', 'K', 'alpha_bjs', 'eta', 'k')]
        series = ';'.join(f'{axis}={format_number(values[axis], 6)}' for axis in PARAMETER_AXES)

        levels = []
        rows = []
        for h in sorted(config.h, reverse=True):
            try:
                bundle = build_system(problem, params, h, config.precond, data=exact.data)
                errors = energy_error(bundle, exact, direct_solve(bundle))
            except POINT_ERRORS as exc:
                message = _failure(exc)
                logger.warning('%s mms h=%g failed: %s', problem, h, message)
                rows.append(prefix + [format_number(h)] + labels + [config.precond or '', '', '', '', '', message])
                continue
            logger.info('%s mms h=%g: %s', problem, h,
                        ', '.join(f'{name}={value:.3e}' for name, value in errors.items()))
            levels.append((h, bundle, errors))

        previous = None
        for h, bundle, errors in levels:
            for name, value in errors.items():
                rate = ''
                if previous is not None:
                    rate = _rate([previous[0], h], [previous[2][name], value])
                rows.append(prefix + [format_number(h)] + labels
                            + [bundle.variant.value, format_number(bundle.ndof), name,
                               format_number(value, 6), rate, ''])
                self._plot(f'{problem}-mms', f'{name};{series}', h, value)
            previous = (h, bundle, errors)

        if len(levels) >= 2:
            hs = [h for h, _, _ in levels]
            variant = levels[0][1].variant.value
            for name in levels[0][2]:
                fit = _rate(hs, [errors[name] for _, _, errors in levels])
                rows.append(prefix + ['fit'] + labels + [variant, '', name, '', fit, ''])
        return rows

    def report_dofs(self):
        """
        Per-field dimensions. Row labels follow the timing tables: a label h
        stands for meshes with cell leg h/2, and subproblems use the
        half-domain layout.
        """
        rows = []
        for problem in self.config.problems:
            for h in self.config.h:
                fields = problem_fields(problem, table_cell_leg(h), Layout.HALF_DOMAIN)
                for f in fields:
                    rows.append([problem, format_number(h), f.name, str(f.size)])
                    self._plot('dofs', f'{problem};{f.name}', h, f.size)
                rows.append([problem, format_number(h), 'total', str(sum(f.size for f in fields))])
        return DOFS_HEADER, rows

    def run_timing(self):
        """
        MINRES wall time (preconditioner setup excluded) of a coupled system
        against its strong-interface subproblems on the same half-domain
        meshes; ``ratio`` is coupled time over the summed subproblem times.
        Labels follow report_dofs.
        """
        config = self.config
        params = parameter_set(config.parameter_grid()[0])
        rows = []
        for problem in config.problems:
            if problem not in TIMING_PARTS:
                raise InvalidArgumentError(f'no timing comparison for {problem!r}')
            for h in config.h:
                leg = table_cell_leg(h)
                coupled = self._timed_solve(problem, params, leg, config.precond, Layout.UNIT_SQUARE, False)
                parts = [(name, weight, self._timed_solve(name, params, leg, None, Layout.HALF_DOMAIN, True))
                         for name, weight in TIMING_PARTS[problem]]
                ratio = None
                if coupled['time'] is not None and all(part['time'] for _, _, part in parts):
                    ratio = coupled['time'] / sum(weight * part['time'] for _, weight, part in parts)
                rows.append(self._timing_row(problem, h, 'coupled', coupled, ratio))
                self._plot(f'{problem}-time', 'coupled', h, coupled['time'])
                for name, _, part in parts:
                    rows.append(self._timing_row(problem, h, name, part, None))
                    self._plot(f'{problem}-time', name, h, part['time'])
        return TIMING_HEADER, rows

    def _timed_solve(self, problem, params, leg, precond, layout, strong_interface):
        result = {'ndof': None, 'iters': None, 'time': None, 'error': ''}
        try:
            bundle = build_system(problem, params, leg, precond, layout=layout,
                                  strong_interface=strong_interface)
            report = solve_bundle(bundle, self.config)
        except POINT_ERRORS as exc:
            result['error'] = _failure(exc)
            logger.warning('%s timing at leg %g failed: %s', problem, leg, result['error'])
            return result
        result.update(ndof=bundle.ndof, iters=report.iterations, time=report.wall_time)
        if not report.converged:
            result['error'] = f'not converged after {report.iterations} iterations'
        logger.info('%s timing at leg %g: %d iterations in %.3fs', problem, leg, report.iterations,
                    report.wall_time)
        return result

    @staticmethod
    def _timing_row(problem, h, system, result, ratio):
        return [problem, format_number(h), system, format_number(result['ndof']),
                format_number(result['iters']), format_number(result['time'], 6),
                format_number(ratio, 6), result['error']]

    def _plot(self, figure, series, x, y):
        if y is not None:
            self.plot_rows.append([figure, series, format_number(x), format_number(y, 8)])


def _rate(hs, errors):
    """Least-squares slope of log(error) against log(h), or 'saturated' when all errors are exact."""
    errors = np.asarray(errors, dtype=float)
    if np.all(errors < SATURATION):
        return 'saturated'
    if np.any(errors <= 0):
        return ''
    slope = np.polyfit(np.log(np.asarray(hs, dtype=float)), np.log(errors), 1)[0]
    return format_number(slope, 4)


def write_csv(path, header, rows):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, delimiter=',', quoting=csv.QUOTE_MINIMAL, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    return path


def run_sweep(config):
    """solve (or cond) sweep written to config.out."""
    if config.mode not in ('solve', 'cond'):
        config = replace(config, mode='solve')
    return ExperimentRunner(config).run()


def run_mms(config):
    return ExperimentRunner(replace(config, mode='mms')).run()


def report_dofs(problems, hs):
    """Rows of per-field DOF counts (see ExperimentRunner.report_dofs)."""
    config = ExperimentConfig(mode='dofs', problems=tuple(problems), h=tuple(hs))
    return ExperimentRunner(config).report_dofs()[1]


def run_timing(problems, hs, **options):
    """Timing rows (see ExperimentRunner.run_timing); ``options`` override solver settings."""
    config = ExperimentConfig(mode='time', problems=tuple(problems), h=tuple(hs),
                              **{**solver_defaults(), **options})
    return ExperimentRunner(config).run_timing()[1]
