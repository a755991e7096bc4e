import numpy as np
from django.test import SimpleTestCase

from preconditioners.exceptions import InvalidArgumentError
from preconditioners.fem import Family, ValueRank, function_space, interpolate
from preconditioners.interface import InterfaceSpace
from preconditioners.krylov import direct_solve
from preconditioners.manufactured import ExactField, manufactured_solution
from preconditioners.mesh import build_rect_mesh, build_subdomain_mesh
from preconditioners.norms import FieldNorm, NormKind, _volume_error, energy_error, interpolate_to_p1
from preconditioners.systems import ParameterSet, build_system


def _errors(problem, hs, params=None, kind='smooth'):
    params = params or ParameterSet()
    exact = manufactured_solution(problem, params, kind)
    results = []
    for h in hs:
        bundle = build_system(problem, params, h, data=exact.data)
        results.append(energy_error(bundle, exact, direct_solve(bundle)))
    return results


def _slope(hs, values):
    return np.polyfit(np.log(hs), np.log(values), 1)[0]


class VolumeNormTests(SimpleTestCase):
    """Field errors against exact callables."""

    def test_p1_interpolation_rate(self):
        """The L2 interpolation error of sin(πx) sin(πy) in P1 decays at rate 2."""
        exact = ExactField(lambda x: np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]))
        hs, errors = [], []
        for n in (4, 8, 16, 32):
            V = function_space(build_rect_mesh(0.0, 1.0, 0.0, 1.0, n, n), Family.P1)
            c = interpolate(V, exact.value)
            errors.append(np.sqrt(_volume_error(V, FieldNorm(NormKind.L2), c, exact)))
            hs.append(1.0 / n)
        self.assertAlmostEqual(_slope(hs, errors), 2.0, delta=0.2)

    def test_weights_scale_squared_norms(self):
        """Weights multiply the squared norm."""
        V = function_space(build_rect_mesh(0.0, 1.0, 0.0, 1.0, 2, 2), Family.P1)
        zero = ExactField(lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros(x.shape))
        c = interpolate(V, lambda x: x[..., 0])
        self.assertAlmostEqual(_volume_error(V, FieldNorm(NormKind.L2, 3.0), c, zero), 1.0, places=12)
        self.assertAlmostEqual(_volume_error(V, FieldNorm(NormKind.H1, 2.0), c, zero), 2.0, places=12)


class MultiplierErrorTests(SimpleTestCase):
    """Multiplier errors go through the nodal P1 interpolant on the interface vertices."""

    def setUp(self):
        self.mesh = build_subdomain_mesh(2 ** -2)[1]

    def test_p0_vertex_values_average_segments(self):
        """Interior vertices take the mean of their two segments, end vertices their only one."""
        L = InterfaceSpace(Family.P0, self.mesh)
        p1, e = interpolate_to_p1(L, np.array([1.0, 3.0, 5.0, 7.0]), lambda x: np.zeros(x.shape[:-1]))
        self.assertEqual(p1.family, Family.P1)
        np.testing.assert_allclose(e, [1.0, 2.0, 4.0, 6.0, 7.0])

    def test_exact_values_are_subtracted_at_vertices(self):
        """A P1 field equal to its exact function at the vertices has zero error, vector fields included."""
        L = InterfaceSpace(Family.P1, self.mesh, ValueRank.VECTOR)

        def exact(x):
            return np.stack([x[..., 1], 2.0 * x[..., 1] ** 2], axis=-1)

        coefficients = exact(self.mesh.vertices).ravel()
        _, e = interpolate_to_p1(L, coefficients, exact)
        np.testing.assert_allclose(e, 0.0, atol=1e-15)
        _, e = interpolate_to_p1(L, coefficients + 1.0, exact)
        np.testing.assert_allclose(e, 1.0)


class ExactInSpaceTests(SimpleTestCase):
    """Manufactured solutions inside the discrete spaces are reproduced to round-off."""

    def test_darcy_subproblem(self):
        """Linear RT0 flux, constant pressure and multiplier."""
        for errors in _errors('darcy-sub', [2 ** -2, 2 ** -3], ParameterSet(K=1e-2), 'polynomial'):
            self.assertEqual(set(errors), {'u', 'p', 'lam'})
            for name, value in errors.items():
                self.assertLess(value, 1e-10, name)

    def test_stokes_subproblem(self):
        """Quadratic velocity, linear pressure, constant multiplier."""
        for errors in _errors('stokes-sub', [2 ** -2, 2 ** -3], ParameterSet(mu=0.5), 'polynomial'):
            for name, value in errors.items():
                self.assertLess(value, 1e-10, name)

    def test_unknown_kind(self):
        """
        Only smooth and polynomial solutions exist, polynomial ones only for two
        subproblems, and the all-Dirichlet Stokes-Navier coupling needs a finite η.
        """
        with self.assertRaises(InvalidArgumentError):
            manufactured_solution('stokes-sub', ParameterSet(), 'cubic')
        with self.assertRaises(InvalidArgumentError):
            manufactured_solution('navier-sub', ParameterSet(), 'polynomial')
        with self.assertRaises(InvalidArgumentError):
            manufactured_solution('poisson-nd', ParameterSet())
        with self.assertRaises(InvalidArgumentError):
            manufactured_solution('stokes-navier-dirichlet', ParameterSet())


class ConvergenceRateTests(SimpleTestCase):
    """Observed rates in the preconditioner-induced norms."""

    def test_darcy_rates(self):
        """Flux in H(div) and pressure in L2 converge linearly."""
        hs = [2 ** -3, 2 ** -4, 2 ** -5]
        errors = _errors('darcy-sub', hs, ParameterSet(K=0.1))
        self.assertAlmostEqual(_slope(hs, [e['u'] for e in errors]), 1.0, delta=0.2)
        self.assertAlmostEqual(_slope(hs, [e['p'] for e in errors]), 1.0, delta=0.2)

    def test_stokes_rates(self):
        """Velocity in H1 and pressure in L2 converge quadratically."""
        hs = [2 ** -3, 2 ** -4, 2 ** -5]
        errors = _errors('stokes-sub', hs)
        self.assertAlmostEqual(_slope(hs, [e['u'] for e in errors]), 2.0, delta=0.25)
        self.assertAlmostEqual(_slope(hs, [e['p'] for e in errors]), 2.0, delta=0.3)

    def test_multiplier_rates(self):
        """The Stokes multiplier converges quadratically, the Darcy and Navier ones at least linearly."""
        hs = [2 ** -2, 2 ** -3, 2 ** -4, 2 ** -5]
        stokes = _errors('stokes-sub', hs)
        self.assertAlmostEqual(_slope(hs, [e['lam'] for e in stokes]), 2.0, delta=0.2)
        for problem in ('darcy-sub', 'navier-sub'):
            with self.subTest(problem=problem):
                errors = _errors(problem, hs)
                self.assertGreater(_slope(hs, [e['lam'] for e in errors]), 0.8)

    def test_navier_velocity_rate(self):
        """Navier velocity in the ε norm converges quadratically."""
        hs = [2 ** -3, 2 ** -4, 2 ** -5]
        errors = _errors('navier-sub', hs)
        self.assertAlmostEqual(_slope(hs, [e['u'] for e in errors]), 2.0, delta=0.25)

    def test_all_dirichlet_variants(self):
        """Manufactured solutions for the all-Dirichlet couplings converge as well."""
        cases = (
            ('darcy-stokes-dirichlet', ParameterSet(mu=0.5, K=0.5), 1.0),
            ('stokes-navier-dirichlet', ParameterSet(eta=10.0), 0.5),
        )
        for problem, params, factor in cases:
            with self.subTest(problem=problem):
                coarse, fine = _errors(problem, [2 ** -2, 2 ** -3], params)
                for name in ('u_f', 'u_p'):
                    self.assertLess(fine[name], factor * coarse[name], name)

    def test_darcy_stokes_errors_decrease(self):
        """Every field error of the coupled problem decreases under refinement."""
        coarse, fine = _errors('darcy-stokes', [2 ** -2, 2 ** -3], ParameterSet(mu=0.5, K=0.5))
        self.assertEqual(set(coarse), {'u_f', 'u_p', 'p_f', 'p_p', 'lam'})
        for name in coarse:
            self.assertLess(fine[name], coarse[name], name)

    def test_stokes_navier_errors_decrease(self):
        """Velocities of the Stokes-Navier coupling converge with a finite penalty."""
        coarse, fine = _errors('stokes-navier', [2 ** -2, 2 ** -3], ParameterSet(eta=10.0, k=2.0))
        for name in ('u_f', 'u_p'):
            self.assertLess(fine[name], 0.5 * coarse[name], name)
