import csv
import math
import tempfile
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from preconditioners.cli import main
from preconditioners.exceptions import InvalidArgumentError
from preconditioners.forms import ExperimentConfigForm
from preconditioners.services import (
    DOFS_HEADER,
    MMS_HEADER,
    SWEEP_HEADER,
    ExperimentConfig,
    ExperimentRunner,
    format_number,
    parse_list,
    parse_number,
    read_config_file,
    report_dofs,
    run_mms,
    run_sweep,
    run_timing,
    solver_defaults,
)


def _read(path):
    with open(path, newline='') as handle:
        return list(csv.reader(handle))


class ParsingTests(SimpleTestCase):
    """Number grids and experiment files."""

    def test_parse_number(self):
        """Powers, plain floats and infinity are accepted."""
        self.assertEqual(parse_number('2^-3'), 0.125)
        self.assertEqual(parse_number('1e-4'), 1e-4)
        self.assertTrue(math.isinf(parse_number('inf')))
        with self.assertRaises(InvalidArgumentError):
            parse_number('two')

    def test_parse_list(self):
        """Comma-separated grids keep their order."""
        self.assertEqual(parse_list('2^-2, 2^-3,1'), [0.25, 0.125, 1.0])

    def test_format_number(self):
        """Integers print bare, floats with ten significant digits, None as empty."""
        self.assertEqual(format_number(12), '12')
        self.assertEqual(format_number(0.125), '0.125')
        self.assertEqual(format_number(None), '')

    def test_read_config_file(self):
        """Comments are skipped, dashes become underscores and aliases are resolved."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'exp.cfg'
            path.write_text('# sweep\nproblems = darcy-stokes\nalpha = 1,0.5\nmax-iter=200  # cap\n\n')
            values = read_config_file(path)
        self.assertEqual(values, {'problem': 'darcy-stokes', 'alpha_bjs': '1,0.5', 'max_iter': '200'})

    def test_read_config_file_rejects_garbage(self):
        """Lines without '=' are errors."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'exp.cfg'
            path.write_text('problem darcy-sub\n')
            with self.assertRaises(InvalidArgumentError):
                read_config_file(path)

    @override_settings(MPPRECOND={'SEED': 7, 'TOL': 1e-8})
    def test_solver_defaults_from_settings(self):
        """Configured values win, missing keys fall back to the built-in defaults."""
        defaults = solver_defaults()
        self.assertEqual(defaults['seed'], 7)
        self.assertEqual(defaults['tol'], 1e-8)
        self.assertEqual(defaults['max_iter'], 5000)


class ExperimentConfigFormTests(SimpleTestCase):
    """Validation of merged experiment descriptions."""

    def form(self, **data):
        return ExperimentConfigForm({'mode': 'cond', 'problem': 'darcy-sub', 'h': '2^-2', **data})

    def test_valid_config(self):
        """Grids become tuples and unspecified axes keep their defaults."""
        form = self.form(K='1,1e-4', precond='FREE', eta='inf')
        self.assertTrue(form.is_valid(), form.errors)
        config = form.to_config()
        self.assertEqual(config.problems, ('darcy-sub',))
        self.assertEqual(config.K, (1.0, 1e-4))
        self.assertEqual(config.mu, (1.0,))
        self.assertEqual(config.precond, 'free')
        self.assertTrue(math.isinf(config.eta[0]))
        self.assertEqual(len(config.parameter_grid()), 2)

    def test_empty_grid(self):
        """A grid given without values is an error."""
        form = self.form(mu='')
        self.assertFalse(form.is_valid())
        self.assertIn('mu', form.errors)

    def test_non_positive_parameter(self):
        """Parameters must be positive and finite unless infinity is allowed."""
        self.assertIn('K', self.form(K='0').errors)
        self.assertIn('mu', self.form(mu='inf').errors)

    def test_unknown_problem(self):
        """Problem ids are checked against the registry."""
        self.assertIn('problem', self.form(problem='darcy-sub,brinkman').errors)

    def test_non_dyadic_h(self):
        """h must be 2^-m with m >= 1."""
        self.assertIn('h', self.form(h='0.3').errors)
        self.assertIn('h', self.form(h='1').errors)

    def test_mms_needs_manufactured_solution(self):
        """Problems without a manufactured solution cannot run in mms mode."""
        form = self.form(mode='mms', problem='poisson-nd')
        self.assertFalse(form.is_valid())
        self.assertIn('__all__', form.errors)
        form = self.form(mode='mms', problem='darcy-stokes', solution='polynomial')
        self.assertFalse(form.is_valid())

    def test_mms_all_dirichlet_variants(self):
        """Both all-Dirichlet couplings run in mms mode; Stokes-Navier needs a finite η."""
        self.assertTrue(self.form(mode='mms', problem='darcy-stokes-dirichlet').is_valid())
        self.assertTrue(self.form(mode='mms', problem='stokes-navier-dirichlet', eta='10,1e3').is_valid())
        form = self.form(mode='mms', problem='stokes-navier-dirichlet')
        self.assertIn('finite eta', form.errors['__all__'][0])
        self.assertFalse(self.form(mode='mms', problem='stokes-navier-dirichlet', eta='10,inf').is_valid())

    def test_timing_needs_subproblems(self):
        """Only the coupled problems have a timing comparison."""
        self.assertIn('__all__', self.form(mode='time', problem='poisson-nd').errors)

    def test_preconditioner_must_fit_problem(self):
        """The robust preconditioner belongs to the coupled problems."""
        self.assertIn('__all__', self.form(precond='robust').errors)


class ExperimentRunnerTests(SimpleTestCase):
    """Sweeps, convergence studies, DOF reports and timings."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def config(self, **options):
        defaults = {'mode': 'cond', 'problems': ('darcy-sub',), 'h': (2 ** -2,), 'out': str(self.dir / 'out.csv')}
        return ExperimentConfig(**{**defaults, **options})

    def test_cond_sweep_rows(self):
        """One row per grid point in lexicographic order with the condition number filled in."""
        summary = ExperimentRunner(self.config(K=(1.0, 1e-2), h=(2 ** -2, 2 ** -3))).run()
        rows = _read(summary.path)
        self.assertEqual(rows[0], SWEEP_HEADER)
        self.assertEqual(summary.rows, 4)
        self.assertEqual(summary.failures, 0)
        self.assertEqual([(r[1], r[3]) for r in rows[1:]],
                         [('0.25', '1'), ('0.25', '0.01'), ('0.125', '1'), ('0.125', '0.01')])
        for row in rows[1:]:
            self.assertEqual(row[7], '00')
            self.assertGreater(float(row[10]), 1.0)
            self.assertEqual(row[13], '')

    def test_cond_sweep_is_reproducible(self):
        """Two identical cond runs write byte-identical files."""
        first = ExperimentRunner(self.config(out=str(self.dir / 'a.csv'), mu=(1.0, 0.1))).run()
        second = ExperimentRunner(self.config(out=str(self.dir / 'b.csv'), mu=(1.0, 0.1))).run()
        self.assertEqual(first.path.read_bytes(), second.path.read_bytes())

    def test_parallel_sweep_keeps_grid_order(self):
        """Grid points solved in parallel come back in grid order with the same values."""
        serial = ExperimentRunner(self.config(out=str(self.dir / 's.csv'), K=(1.0, 1e-2, 1e-4))).run()
        parallel = ExperimentRunner(self.config(out=str(self.dir / 'p.csv'), K=(1.0, 1e-2, 1e-4),
                                                jobs=2)).run()
        self.assertEqual(serial.path.read_bytes(), parallel.path.read_bytes())

    def test_solve_sweep(self):
        """Solve mode records iterations and wall time, and forces the solve mode."""
        summary = run_sweep(self.config(mode='dofs', problems=('stokes-sub',)))
        row = _read(summary.path)[1]
        self.assertGreater(int(row[9]), 0)
        self.assertEqual(row[10], '')
        self.assertGreaterEqual(float(row[11]), 0.0)

    def test_unconverged_points_are_failures(self):
        """A point that hits the iteration cap is reported in the error column."""
        summary = ExperimentRunner(self.config(mode='solve', max_iter=1)).run()
        self.assertEqual(summary.failures, 1)
        self.assertIn('not converged', _read(summary.path)[1][-1])

    def test_plot_data(self):
        """Plot data is written in long format, one row per value."""
        plot = self.dir / 'plot.csv'
        ExperimentRunner(self.config(K=(1.0, 1e-2), plot_data=str(plot))).run()
        rows = _read(plot)
        self.assertEqual(rows[0], ['figure', 'series', 'x', 'y'])
        self.assertEqual(len(rows), 3)
        self.assertEqual(rows[1][0], 'darcy-sub-cond')

    def test_polynomial_mms_saturates(self):
        """Exact-in-space solutions give round-off errors and saturated rates."""
        summary = run_mms(self.config(h=(2 ** -2, 2 ** -3), solution='polynomial'))
        rows = _read(summary.path)
        self.assertEqual(rows[0], MMS_HEADER)
        levels = [r for r in rows[1:] if r[1] != 'fit']
        fits = [r for r in rows[1:] if r[1] == 'fit']
        self.assertEqual(len(levels), 6)
        self.assertEqual({r[9] for r in fits}, {'u', 'p', 'lam'})
        for row in levels:
            self.assertLess(float(row[10]), 1e-10)
        for row in levels[3:] + fits:
            self.assertEqual(row[11], 'saturated')

    def test_smooth_mms_rates(self):
        """Darcy flux converges linearly; the fit row carries the slope."""
        summary = run_mms(self.config(h=(2 ** -3, 2 ** -4, 2 ** -5)))
        fits = {r[9]: r for r in _read(summary.path)[1:] if r[1] == 'fit'}
        self.assertAlmostEqual(float(fits['u'][11]), 1.0, delta=0.2)

    def test_dofs_report(self):
        """Rows labelled h describe the meshes with cell leg h/2."""
        rows = report_dofs(['darcy-stokes'], [2 ** -3])
        self.assertEqual(rows, [
            ['darcy-stokes', '0.125', 'u_f', '1122'],
            ['darcy-stokes', '0.125', 'u_p', '408'],
            ['darcy-stokes', '0.125', 'p_f', '153'],
            ['darcy-stokes', '0.125', 'p_p', '256'],
            ['darcy-stokes', '0.125', 'lam', '16'],
            ['darcy-stokes', '0.125', 'total', '1955'],
        ])

    def test_timing_rows(self):
        """The coupled row carries the ratio against the summed subproblem times."""
        rows = run_timing(['darcy-stokes'], [2 ** -2])
        self.assertEqual([r[2] for r in rows], ['coupled', 'darcy-sub', 'stokes-sub'])
        self.assertGreater(float(rows[0][6]), 0.0)
        self.assertEqual(rows[1][6], '')
        self.assertTrue(all(r[-1] == '' for r in rows))

    def test_timing_rejects_subproblems(self):
        """Timing compares coupled problems only."""
        with self.assertRaises(InvalidArgumentError):
            run_timing(['darcy-sub'], [2 ** -2])


class CommandTests(SimpleTestCase):
    """The mpprecond management command and console entry point."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_dofs_command(self):
        """dofs writes the per-field table."""
        out = self.dir / 'dofs.csv'
        call_command('mpprecond', 'dofs', problem='stokes-navier', h='2^-3', out=str(out))
        rows = _read(out)
        self.assertEqual(rows[0], DOFS_HEADER)
        self.assertEqual(rows[1:], [
            ['stokes-navier', '0.125', 'u_f', '1122'],
            ['stokes-navier', '0.125', 'u_p', '1122'],
            ['stokes-navier', '0.125', 'p_f', '153'],
            ['stokes-navier', '0.125', 'p_p', '153'],
            ['stokes-navier', '0.125', 'lam', '32'],
            ['stokes-navier', '0.125', 'total', '2582'],
        ])

    def test_config_file_with_overrides(self):
        """Flags override the experiment file."""
        cfg = self.dir / 'exp.cfg'
        out = self.dir / 'cond.csv'
        cfg.write_text(f'problem = darcy-sub\nh = 2^-2\nK = 1,1e-2\nout = {out}\n')
        call_command('mpprecond', 'cond', config=str(cfg), K='1e-4')
        rows = _read(out)
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[1][3], '0.0001')

    def test_invalid_configuration(self):
        """Form errors become a CommandError naming the field."""
        with self.assertRaisesMessage(CommandError, 'h:'):
            call_command('mpprecond', 'cond', problem='darcy-sub', h='0.3', out=str(self.dir / 'x.csv'))

    def test_failed_points_exit_with_status_two(self):
        """Unconverged solves make the command fail with return code 2 after writing the CSV."""
        out = self.dir / 'solve.csv'
        with self.assertRaises(CommandError) as ctx:
            call_command('mpprecond', 'solve', problem='darcy-sub', h='2^-2', max_iter=1, out=str(out))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertTrue(out.exists())

    def test_console_entry_point(self):
        """The console script forwards its arguments to the command."""
        out = self.dir / 'dofs.csv'
        main(['dofs', '--problem', 'darcy-sub', '--h', '2^-2', '--out', str(out)])
        self.assertEqual(_read(out)[-1], ['darcy-sub', '0.25', 'total', '180'])
