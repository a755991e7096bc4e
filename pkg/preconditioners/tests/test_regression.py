"""
Spectral condition numbers of the preconditioned systems on coarse meshes,
checked against published reference values and robustness trends.

Reference rows are labelled by table mesh size; ``table_cond`` builds the
mesh with cell leg label / 2 (see mesh.table_cell_leg).
"""

from django.test import SimpleTestCase

from preconditioners.krylov import BlockPreconditioner, SpectrumMethod, bundle_condition_number, minres
from preconditioners.mesh import table_cell_leg
from preconditioners.systems import ParameterSet, build_system

BAND = 0.05


def cond(problem, h, precond=None, deflate=False, method=SpectrumMethod.AUTO, **params):
    bundle = build_system(problem, ParameterSet(**params), h, precond)
    return bundle_condition_number(bundle, deflate=deflate, method=method, tol=1e-8).condition


def table_cond(problem, label, precond=None, **params):
    return cond(problem, table_cell_leg(label), precond, **params)


def iterations(problem, h, precond=None, **params):
    bundle = build_system(problem, ParameterSet(**params), h, precond)
    _, report = minres(bundle.operator, BlockPreconditioner(bundle), bundle.rhs, tol=1e-8)
    return report.iterations


class ReferenceValueMixin:

    def assertMatchesTable(self, value, printed):
        self.assertAlmostEqual(value, printed, delta=BAND * printed)


class PoissonInterfaceTests(ReferenceValueMixin, SimpleTestCase):
    """Mixed Neumann/Dirichlet interface problem under the three multiplier preconditioners."""

    def test_nd_reference_values(self):
        """ND preconditioner against the printed rows for every conductivity ratio."""
        printed = {1e6: (5.07, 5.36), 1.0: (5.05, 5.33), 1e-6: (5.60, 5.68)}
        for ratio, values in printed.items():
            for label, value in zip((2 ** -2, 2 ** -3), values):
                with self.subTest(ratio=ratio, label=label):
                    self.assertMatchesTable(table_cond('poisson-nd', label, 'nd', kappa2=ratio), value)

    def test_nn_reference_values_grow(self):
        """With κ2/κ1 = 1e-6 the NN preconditioner follows the printed growth."""
        coarse = table_cond('poisson-nd', 2 ** -2, 'nn', kappa2=1e-6)
        fine = table_cond('poisson-nd', 2 ** -3, 'nn', kappa2=1e-6)
        self.assertMatchesTable(coarse, 13.01)
        self.assertMatchesTable(fine, 15.89)
        self.assertGreater(fine, coarse)


class SubproblemTests(ReferenceValueMixin, SimpleTestCase):
    """Standalone Stokes, Darcy and Navier problems with a trace multiplier."""

    def test_stokes_reference_values(self):
        """Free-flavor Stokes preconditioner for μ = 1 and μ = 1e-4."""
        self.assertMatchesTable(table_cond('stokes-sub', 2 ** -1, 'free'), 10.19)
        self.assertMatchesTable(table_cond('stokes-sub', 2 ** -2, 'free'), 10.17)
        self.assertMatchesTable(table_cond('stokes-sub', 2 ** -1, 'free', mu=1e-4), 13.45)

    def test_stokes_zero_trace_flavor_grows(self):
        """The 00 flavor is unsuitable when Γ does not touch the Dirichlet boundary."""
        coarse = table_cond('stokes-sub', 2 ** -1, '00')
        fine = table_cond('stokes-sub', 2 ** -2, '00')
        self.assertMatchesTable(coarse, 9.29)
        self.assertMatchesTable(fine, 10.21)
        self.assertGreater(fine, coarse)

    def test_darcy_reference_values_and_invariance(self):
        """The 00 Darcy preconditioner matches the printed rows and does not depend on K."""
        for label, printed in ((2 ** -1, 3.47), (2 ** -2, 3.52), (2 ** -3, 3.53)):
            reference = table_cond('darcy-sub', label, '00')
            self.assertMatchesTable(reference, printed)
            for K in (1e-4, 1e-8):
                with self.subTest(label=label, K=K):
                    self.assertAlmostEqual(table_cond('darcy-sub', label, '00', K=K) / reference, 1.0, places=6)

    def test_darcy_free_flavor_grows(self):
        """The free flavor deteriorates with h along the printed values."""
        coarse = table_cond('darcy-sub', 2 ** -1, 'free')
        fine = table_cond('darcy-sub', 2 ** -2, 'free')
        self.assertMatchesTable(coarse, 4.92)
        self.assertMatchesTable(fine, 5.55)

    def test_navier_reference_values_and_invariance(self):
        """Free-flavor Navier preconditioner matches the printed rows for every μ."""
        for label, printed in ((2 ** -2, 25.60), (2 ** -3, 26.30)):
            reference = table_cond('navier-sub', label, 'free')
            self.assertMatchesTable(reference, printed)
            self.assertAlmostEqual(table_cond('navier-sub', label, 'free', mu=1e-4) / reference, 1.0, places=2)

    def test_navier_partial_zero_trace_flavors(self):
        """Zero-trace flavors on one or both components are worse and grow under refinement."""
        printed = {'00': 39.04, 'n0': 27.24, 't0': 38.36}
        for variant, value in printed.items():
            with self.subTest(variant=variant):
                coarse = table_cond('navier-sub', 2 ** -2, variant)
                self.assertMatchesTable(coarse, value)
                self.assertGreater(table_cond('navier-sub', 2 ** -3, variant), coarse)


class CoupledTests(SimpleTestCase):
    """Darcy-Stokes and Stokes-Navier couplings."""

    def test_darcy_stokes_robust_preconditioner(self):
        """Condition numbers stay within a factor 3 over four decades of μ and K."""
        values = [cond('darcy-stokes', 2 ** -3, 'robust', mu=mu, K=K)
                  for mu in (1.0, 1e-4) for K in (1.0, 1e-4)]
        self.assertLess(max(values), 3.0 * min(values))

    def test_darcy_stokes_naive_preconditioner(self):
        """For small K the naive preconditioner is far worse than the robust one."""
        robust = cond('darcy-stokes', 2 ** -3, 'robust', K=1e-6)
        naive = cond('darcy-stokes', 2 ** -3, 'naive', K=1e-6)
        self.assertGreater(naive, 5.0 * robust)

    def test_darcy_stokes_iterations_in_permeability(self):
        """Going from K = 1 to 1e-6 triples the naive MINRES count while the robust one stays bounded."""
        h = 2 ** -5
        naive = [iterations('darcy-stokes', h, 'naive', K=K) for K in (1.0, 1e-6)]
        robust = [iterations('darcy-stokes', h, 'robust', K=K) for K in (1.0, 1e-6)]
        self.assertGreaterEqual(naive[1], 3 * naive[0])
        self.assertLessEqual(max(robust), 2 * min(robust))

    def test_stokes_navier_parameter_sweep(self):
        """The mixed Stokes-Navier preconditioner is robust in μ, η and k."""
        values = [cond('stokes-navier', 2 ** -2, mu=mu, eta=eta, k=k)
                  for mu in (1.0, 1e-4) for eta in (1.0, 1e3, float('inf')) for k in (1.0, 1e-3)]
        self.assertLess(max(values), 3.0 * min(values))

    def test_penalty_without_deflation(self):
        """All-Dirichlet Stokes-Navier: a large penalty drives the condition number up."""
        self.assertGreater(cond('stokes-navier-dirichlet', 2 ** -1, eta=1e3), 1e3)

    def test_deflation_restores_conditioning(self):
        """Projecting out the kernel vector keeps the condition number moderate for every η."""
        for eta in (1.0, 1e3, 1e6, float('inf')):
            with self.subTest(eta=eta):
                self.assertLess(cond('stokes-navier-dirichlet', 2 ** -1, deflate=True, eta=eta), 100.0)

    def test_deflated_lanczos_matches_dense(self):
        """Lanczos on the singular η = inf operator agrees with the deflated dense spectrum."""
        dense = cond('stokes-navier-dirichlet', 2 ** -2, deflate=True, method=SpectrumMethod.DENSE)
        lanczos = cond('stokes-navier-dirichlet', 2 ** -2, deflate=True, method=SpectrumMethod.LANCZOS)
        self.assertAlmostEqual(lanczos / dense, 1.0, places=3)
