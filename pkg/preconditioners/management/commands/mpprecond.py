import logging

from django.core.management.base import BaseCommand, CommandError

from preconditioners.exceptions import PreconditionerError
from preconditioners.forms import ExperimentConfigForm
from preconditioners.services import MODES, ExperimentRunner, read_config_file

logger = logging.getLogger(__name__)

# Command-line destinations passed on to the form when given.
FORM_OPTIONS = (
    'problem', 'h', 'mu', 'K', 'alpha_bjs', 'eta', 'k', 'kappa_ratio', 'precond', 'seed', 'tol',
    'max_iter', 'out', 'jobs', 'dense_eig_limit', 'dense_lu_limit', 'lanczos_tol', 'plot_data',
    'deflate', 'solution',
)


class Command(BaseCommand):
    help = (
        'Run a preconditioner experiment (solve, cond, mms, dofs or time) over a parameter grid '
        'and write the results as CSV. Exits with status 2 when any grid point failed.'
    )

    def add_arguments(self, parser):
        parser.add_argument('mode', choices=MODES)
        parser.add_argument('--problem', help='problem id or comma-separated ids')
        parser.add_argument('--h', help='mesh sizes, e.g. 2^-3,2^-4')
        parser.add_argument('--mu', help='viscosity grid')
        parser.add_argument('--K', dest='K', help='hydraulic conductivity grid')
        parser.add_argument('--alpha', dest='alpha_bjs', help='slip coefficient grid')
        parser.add_argument('--eta', help='penalty grid (inf allowed)')
        parser.add_argument('--k', dest='k', help='coupling weight grid')
        parser.add_argument('--kappa-ratio', dest='kappa_ratio', help='kappa2/kappa1 grid')
        parser.add_argument('--precond', help='preconditioner variant')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--tol', type=float)
        parser.add_argument('--max-iter', dest='max_iter', type=int)
        parser.add_argument('--out', help='CSV output path')
        parser.add_argument('--config', help='key=value experiment file; flags override its values')
        parser.add_argument('--jobs', type=int, help='grid points solved in parallel')
        parser.add_argument('--dense-eig-limit', dest='dense_eig_limit', type=int)
        parser.add_argument('--dense-lu-limit', dest='dense_lu_limit', type=int)
        parser.add_argument('--lanczos-tol', dest='lanczos_tol', type=float)
        parser.add_argument('--plot-data', dest='plot_data', help='long-format plot data CSV path')
        parser.add_argument('--deflate', action='store_true', default=None,
                            help='project out the attached kernel vector')
        parser.add_argument('--solution', choices=('smooth', 'polynomial'),
                            help='manufactured solution for mms mode')

    def handle(self, *args, **options):
        data = {}
        if options.get('config'):
            try:
                data.update(read_config_file(options['config']))
            except (OSError, PreconditionerError) as exc:
                raise CommandError(f'cannot read {options["config"]}: {exc}')
        for name in FORM_OPTIONS:
            if options.get(name) is not None:
                data[name] = options[name]
        data['mode'] = options['mode']

        form = ExperimentConfigForm(data)
        if not form.is_valid():
            messages = '; '.join(f'{field}: {" ".join(errors)}' if field != '__all__' else ' '.join(errors)
                                 for field, errors in form.errors.items())
            raise CommandError(f'invalid experiment configuration: {messages}')
        config = form.to_config()

        try:
            summary = ExperimentRunner(config).run()
        except PreconditionerError as exc:
            raise CommandError(str(exc))

        if summary.failures:
            self.stderr.write(self.style.WARNING(
                f'{summary.failures} of {summary.rows} rows failed; see the error column of {summary.path}'))
            raise CommandError(f'{summary.failures} grid points failed', returncode=2)
        self.stdout.write(self.style.SUCCESS(f'{summary.rows} rows written to {summary.path}'))
