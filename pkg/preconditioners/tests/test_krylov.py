import numpy as np
import scipy.sparse as sp
from django.test import SimpleTestCase

from preconditioners.exceptions import FactorizationError, InvalidArgumentError, NotPositiveDefiniteError
from preconditioners.krylov import (
    BlockPreconditioner,
    FactorizationKind,
    SpectrumMethod,
    condition_number,
    dense_spectrum,
    direct_solve,
    factorize,
    minres,
)
from preconditioners.systems import ParameterSet, build_system


def _laplacian(n):
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format='csr')


class FactorizationTests(SimpleTestCase):
    """Dense and sparse direct solvers."""

    def test_dense_and_sparse_agree(self):
        """Both code paths solve the same system to round-off."""
        A = _laplacian(60)
        b = np.linspace(0.0, 1.0, 60)
        for kind in FactorizationKind:
            dense = factorize(A, kind, dense_limit=100).solve(b)
            sparse = factorize(A, kind, dense_limit=0).solve(b)
            np.testing.assert_allclose(dense, sparse, rtol=1e-10)
            np.testing.assert_allclose(A @ dense, b, atol=1e-10)

    def test_cholesky_rejects_indefinite(self):
        """A negative eigenvalue makes the Cholesky factorization fail on both paths."""
        A = sp.csr_matrix(np.diag([2.0, -1.0, 3.0]))
        with self.assertRaises(NotPositiveDefiniteError):
            factorize(A, FactorizationKind.CHOLESKY)
        with self.assertRaises(NotPositiveDefiniteError):
            factorize(A, FactorizationKind.CHOLESKY, dense_limit=0)

    def test_singular_matrix(self):
        """A zero pivot is reported with its position."""
        A = np.array([[1.0, 0.0], [0.0, 0.0]])
        with self.assertRaises(FactorizationError) as ctx:
            factorize(A)
        self.assertEqual(ctx.exception.pivot, 1)

    def test_non_square(self):
        """Only square matrices can be factorized."""
        with self.assertRaises(InvalidArgumentError):
            factorize(np.ones((2, 3)))


class MinresTests(SimpleTestCase):
    """Preconditioned MINRES on the coupled systems."""

    def setUp(self):
        self.bundle = build_system('darcy-stokes', ParameterSet(mu=0.1, K=1e-2), 2 ** -2)

    def test_matches_direct_solve(self):
        """The converged iterate agrees with a sparse LU solve."""
        x, report = minres(self.bundle.operator, BlockPreconditioner(self.bundle), self.bundle.rhs,
                           tol=1e-12)
        self.assertTrue(report.converged)
        reference = direct_solve(self.bundle)
        self.assertLess(np.linalg.norm(x - reference), 1e-8 * np.linalg.norm(reference))

    def test_residual_history_is_monotone(self):
        """MINRES minimizes the preconditioned residual, so its history never increases."""
        _, report = minres(self.bundle.operator, BlockPreconditioner(self.bundle), self.bundle.rhs)
        history = np.array(report.history)
        self.assertEqual(len(history), report.iterations)
        self.assertTrue(np.all(np.diff(history) <= 1e-12))

    def test_seeded_start_is_reproducible(self):
        """The same seed gives the same iteration count and iterate."""
        N = BlockPreconditioner(self.bundle)
        x1, r1 = minres(self.bundle.operator, N, self.bundle.rhs, seed=3)
        x2, r2 = minres(self.bundle.operator, N, self.bundle.rhs, seed=3)
        self.assertEqual(r1.iterations, r2.iterations)
        np.testing.assert_array_equal(x1, x2)

    def test_iteration_cap(self):
        """Hitting max_iter leaves the report unconverged."""
        _, report = minres(self.bundle.operator, BlockPreconditioner(self.bundle), self.bundle.rhs,
                           max_iter=2)
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 2)

    def test_exact_start(self):
        """A zero initial residual returns immediately."""
        x0 = np.random.default_rng(1).uniform(-1.0, 1.0, self.bundle.ndof)
        b = self.bundle.operator @ x0
        x, report = minres(self.bundle.operator, BlockPreconditioner(self.bundle), b, x0=x0)
        self.assertEqual(report.iterations, 0)
        self.assertTrue(report.converged)
        np.testing.assert_array_equal(x, x0)

    def test_rhs_length(self):
        """The right-hand side must match the operator."""
        with self.assertRaises(InvalidArgumentError):
            minres(self.bundle.operator, BlockPreconditioner(self.bundle), np.ones(3))

    def test_indefinite_preconditioner(self):
        """An indefinite preconditioner is detected from the sign of the N^{-1} inner product."""
        A = sp.identity(4, format='csr')
        with self.assertRaises(NotPositiveDefiniteError):
            minres(A, lambda r: -r, np.ones(4), x0=np.zeros(4))


class ConditionNumberTests(SimpleTestCase):
    """Spectra of the pencil A x = λ N x."""

    def test_diagonal_pencil(self):
        """diag(1, -4, 8) against the identity has condition 8."""
        A = sp.diags([1.0, -4.0, 8.0])
        report = condition_number(A, sp.identity(3))
        self.assertAlmostEqual(report.condition, 8.0)
        np.testing.assert_allclose(report.eigenvalues, [-4.0, 1.0, 8.0])
        self.assertEqual(report.method, SpectrumMethod.DENSE)

    def test_generalized_pencil(self):
        """A = N gives a single eigenvalue one."""
        N = _laplacian(20) + sp.identity(20)
        eigenvalues = dense_spectrum(N, N)
        np.testing.assert_allclose(eigenvalues, 1.0, atol=1e-12)

    def test_deflation_removes_zero_eigenvalue(self):
        """Projecting out the kernel vector leaves the nonzero spectrum."""
        A = np.diag([0.0, 2.0, -3.0])
        z = np.array([1.0, 0.0, 0.0])
        report = condition_number(A, np.eye(3), deflation=z)
        self.assertAlmostEqual(report.condition, 1.5)

    def test_deflated_lanczos_on_singular_operator(self):
        """Lanczos never factorizes the singular A and finds the spectrum on the complement of z."""
        A = sp.diags([0.0, 2.0, -3.0, 1.0])
        z = np.array([1.0, 0.0, 0.0, 0.0])
        report = condition_number(A, sp.identity(4), deflation=z, method=SpectrumMethod.LANCZOS, tol=1e-12)
        self.assertAlmostEqual(report.min_abs, 1.0, places=8)
        self.assertAlmostEqual(report.max_abs, 3.0, places=8)

    def test_lanczos_agrees_with_dense(self):
        """Lanczos extreme eigenvalues match the dense spectrum."""
        bundle = build_system('darcy-sub', ParameterSet(K=1e-3), 2 ** -2)
        dense = condition_number(bundle.operator, bundle.preconditioner, method=SpectrumMethod.DENSE)
        lanczos = condition_number(bundle.operator, bundle.preconditioner,
                                   method=SpectrumMethod.LANCZOS, tol=1e-10)
        self.assertAlmostEqual(lanczos.condition / dense.condition, 1.0, places=4)

    def test_auto_switches_on_size(self):
        """AUTO picks the dense path below the limit and Lanczos above it."""
        A = sp.diags(np.arange(1.0, 31.0))
        self.assertEqual(condition_number(A, sp.identity(30), dense_limit=100).method, SpectrumMethod.DENSE)
        report = condition_number(A, sp.identity(30), dense_limit=10, tol=1e-12)
        self.assertEqual(report.method, SpectrumMethod.LANCZOS)
        self.assertAlmostEqual(report.condition, 30.0, places=6)
