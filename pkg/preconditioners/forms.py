import math

from django import forms
from django.core.exceptions import ValidationError

from .exceptions import InvalidArgumentError
from .services import (
    MMS_PROBLEMS,
    MODES,
    TIMING_PARTS,
    ExperimentConfig,
    parse_list,
    solver_defaults,
)
from .systems import LEGAL_VARIANTS, PROBLEMS


class ExperimentConfigForm(forms.Form):
    """
    Validates a merged experiment description (config file values with
    command-line values on top) and turns it into an ExperimentConfig.
    Grid fields are comma-separated lists accepting ``2^-3`` powers.
    """

    mode = forms.ChoiceField(choices=[(m, m) for m in MODES])
    problem = forms.CharField(help_text='Problem id, or a comma-separated list of ids')
    h = forms.CharField(help_text='Mesh sizes, e.g. 2^-3,2^-4')
    mu = forms.CharField(required=False)
    K = forms.CharField(required=False)
    alpha_bjs = forms.CharField(required=False)
    eta = forms.CharField(required=False, help_text='inf drops the penalty block')
    k = forms.CharField(required=False)
    kappa_ratio = forms.CharField(required=False, help_text='kappa2 / kappa1 for the Poisson problems')
    precond = forms.CharField(required=False)
    seed = forms.IntegerField(required=False, min_value=0)
    tol = forms.FloatField(required=False, min_value=0.0)
    max_iter = forms.IntegerField(required=False, min_value=1)
    out = forms.CharField(required=False)
    jobs = forms.IntegerField(required=False, min_value=1)
    dense_eig_limit = forms.IntegerField(required=False, min_value=0)
    dense_lu_limit = forms.IntegerField(required=False, min_value=0)
    lanczos_tol = forms.FloatField(required=False, min_value=0.0)
    plot_data = forms.CharField(required=False)
    deflate = forms.BooleanField(required=False)
    solution = forms.ChoiceField(required=False, choices=[(s, s) for s in MMS_PROBLEMS])

    def _grid(self, name, positive=True, allow_inf=False):
        raw = self.cleaned_data.get(name, '')
        if not raw:
            if name in self.data:
                raise ValidationError(f'{name} grid must not be empty')
            return None
        try:
            values = parse_list(raw)
        except InvalidArgumentError as exc:
            raise ValidationError(str(exc))
        if not values:
            raise ValidationError(f'{name} grid must not be empty')
        for value in values:
            if math.isnan(value) or (math.isinf(value) and not allow_inf):
                raise ValidationError(f'{name} values must be finite, got {value}')
            if positive and not value > 0:
                raise ValidationError(f'{name} values must be positive, got {value}')
        return tuple(values)

    def clean_problem(self):
        """Validate the problem ids."""
        problems = [p.strip() for p in self.cleaned_data.get('problem', '').split(',') if p.strip()]
        if not problems:
            raise ValidationError('at least one problem is required')
        unknown = [p for p in problems if p not in PROBLEMS]
        if unknown:
            raise ValidationError(f'unknown problem {", ".join(unknown)}; expected one of {", ".join(PROBLEMS)}')
        return tuple(problems)

    def clean_h(self):
        """Mesh sizes must be 2^-m with m >= 1."""
        values = self._grid('h')
        if values is None:
            raise ValidationError('h grid must not be empty')
        for h in values:
            m = -math.log2(h)
            if h > 0.5 or abs(m - round(m)) > 1e-9:
                raise ValidationError(f'h must be 2^-m with m >= 1, got {h}')
        return values

    def clean_mu(self):
        return self._grid('mu')

    def clean_K(self):
        return self._grid('K')

    def clean_alpha_bjs(self):
        return self._grid('alpha_bjs')

    def clean_eta(self):
        return self._grid('eta', allow_inf=True)

    def clean_k(self):
        return self._grid('k')

    def clean_kappa_ratio(self):
        return self._grid('kappa_ratio')

    def clean_precond(self):
        return self.cleaned_data.get('precond', '').strip().lower() or None

    def clean(self):
        """Cross-field checks: the problems must support the mode and the preconditioner."""
        cleaned = super().clean()
        mode = cleaned.get('mode')
        problems = cleaned.get('problem') or ()
        precond = cleaned.get('precond')
        solution = cleaned.get('solution') or 'smooth'

        if mode == 'mms':
            missing = [p for p in problems if p not in MMS_PROBLEMS[solution]]
            if missing:
                raise ValidationError(f'no {solution} manufactured solution for {", ".join(missing)}')
            eta = cleaned.get('eta') or (math.inf,)
            if 'stokes-navier-dirichlet' in problems and any(math.isinf(value) for value in eta):
                raise ValidationError('stokes-navier-dirichlet manufactured solutions need a finite eta')
        if mode == 'time':
            missing = [p for p in problems if p not in TIMING_PARTS]
            if missing:
                raise ValidationError(f'no timing comparison for {", ".join(missing)}')
        if precond:
            for problem in problems:
                legal = [v.value for v in LEGAL_VARIANTS[problem]]
                if precond not in legal:
                    raise ValidationError(
                        f'preconditioner {precond!r} does not apply to {problem}; expected one of {", ".join(legal)}')
        return cleaned

    def to_config(self):
        """ExperimentConfig from the cleaned data, with settings defaults for the solver options."""
        if not self.is_valid():
            raise ValueError('form is not valid')
        cleaned = self.cleaned_data
        options = solver_defaults()
        for name in options:
            if cleaned.get(name) is not None:
                options[name] = cleaned[name]
        grids = {axis: cleaned[axis] for axis in ('mu', 'K', 'alpha_bjs', 'eta', 'k', 'kappa_ratio')
                 if cleaned.get(axis)}
        return ExperimentConfig(
            mode=cleaned['mode'],
            problems=cleaned['problem'],
            h=cleaned['h'],
            precond=cleaned.get('precond'),
            out=cleaned.get('out') or 'results.csv',
            plot_data=cleaned.get('plot_data') or None,
            deflate=bool(cleaned.get('deflate')),
            solution=cleaned.get('solution') or 'smooth',
            **grids,
            **options,
        )
