"""
Direct factorizations, preconditioned MINRES and condition numbers of the
preconditioned pencil A x = λ N x.
"""

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import EigensolverError, FactorizationError, InvalidArgumentError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

DENSE_LU_LIMIT = 500
DENSE_EIG_LIMIT = 8000
PIVOT_TOL = 1e-12


class FactorizationKind(str, enum.Enum):
    LU = 'lu'
    CHOLESKY = 'cholesky'


class SpectrumMethod(str, enum.Enum):
    AUTO = 'auto'
    DENSE = 'dense'
    LANCZOS = 'lanczos'


def _as_matrix(operator):
    return operator.matrix if hasattr(operator, 'fields') else operator


class Factorization:
    """
    Reusable solver for a square matrix. Small matrices are factorized
    densely, larger ones with SuperLU and a fill-reducing column ordering.
    Cholesky on sparse input uses a symmetric-mode LU without pivoting and
    requires positive pivots.
    """

    def __init__(self, matrix, kind=FactorizationKind.LU, dense_limit=DENSE_LU_LIMIT):
        self.kind = FactorizationKind(kind)
        n, m = matrix.shape
        if n != m:
            raise InvalidArgumentError(f'cannot factorize a {n}x{m} matrix')
        self.n = n
        self.dense = n < dense_limit or not sp.issparse(matrix)
        if self.dense:
            self._factor_dense(matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float))
        else:
            self._factor_sparse(sp.csc_matrix(matrix))

    def _factor_dense(self, a):
        scale = max(np.abs(a).max(), 1e-300)
        if self.kind == FactorizationKind.CHOLESKY:
            try:
                self.factors = la.cho_factor(a, lower=True)
            except la.LinAlgError as exc:
                raise NotPositiveDefiniteError(f'matrix is not positive definite: {exc}') from exc
            pivots = np.abs(np.diag(self.factors[0])) ** 2
        else:
            lu, piv = la.lu_factor(a, check_finite=True)
            self.factors = (lu, piv)
            pivots = np.abs(np.diag(lu))
        self.permutation = None
        self._check_pivots(pivots, scale)

    def _factor_sparse(self, a):
        scale = max(abs(a).max(), 1e-300)
        try:
            if self.kind == FactorizationKind.CHOLESKY:
                self.factors = splu(a, permc_spec='MMD_AT_PLUS_A', diag_pivot_thresh=0.0,
                                    options={'SymmetricMode': True})
            else:
                self.factors = splu(a, permc_spec='COLAMD')
        except RuntimeError as exc:
            raise FactorizationError(f'sparse factorization failed: {exc}') from exc
        self.permutation = self.factors.perm_c
        diagonal = self.factors.U.diagonal()
        if self.kind == FactorizationKind.CHOLESKY and np.any(diagonal <= 0):
            pivot = int(np.argmax(diagonal <= 0))
            raise NotPositiveDefiniteError(f'non-positive pivot at {pivot}', pivot=pivot)
        self._check_pivots(np.abs(diagonal), scale)

    def _check_pivots(self, pivots, scale):
        small = np.flatnonzero(pivots < PIVOT_TOL * scale)
        if len(small):
            pivot = int(small[0])
            raise FactorizationError(f'pivot {pivot} is numerically zero ({pivots[pivot]:.3e})',
                                     pivot=pivot)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.dense:
            if self.kind == FactorizationKind.CHOLESKY:
                return la.cho_solve(self.factors, b)
            return la.lu_solve(self.factors, b)
        return self.factors.solve(b)


def factorize(matrix, kind=FactorizationKind.LU, dense_limit=DENSE_LU_LIMIT):
    return Factorization(_as_matrix(matrix), kind, dense_limit)


class BlockPreconditioner:
    """
    Application of N^{-1} for a block-diagonal N, one cached factorization
    per field. With a deflation vector z the application is projected onto
    the N-orthogonal complement of z: P N^{-1} P' with P = I - z (N z)',
    which for z' N z = 1 reduces to N^{-1} r - z (z . r).
    """

    def __init__(self, bundle, kind=FactorizationKind.LU, dense_limit=DENSE_LU_LIMIT, deflate=False):
        self.slices = []
        self.solvers = []
        for f in bundle.preconditioner.fields:
            block = bundle.blocks[f.name]
            solver = block if hasattr(block, 'solve') else factorize(block, kind, dense_limit)
            self.slices.append(bundle.preconditioner.slice(f.name))
            self.solvers.append(solver)
        self.n = bundle.ndof
        self.z = None
        if deflate and bundle.deflation is not None:
            z = np.asarray(bundle.deflation, dtype=float)
            Nz = bundle.preconditioner.matrix @ z
            self.z = z / np.sqrt(z @ Nz)

    def solve(self, r):
        x = np.empty(self.n)
        for s, solver in zip(self.slices, self.solvers):
            x[s] = solver.solve(r[s])
        if self.z is not None:
            x = x - self.z * (self.z @ r)
        return x

    __call__ = solve


@dataclass
class SolveReport:
    iterations: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    breakdown: bool = False


def minres(A, preconditioner, b, seed=0, tol=1e-12, max_iter=None, x0=None):
    """
    Preconditioned MINRES. Stops when the N^{-1}-norm of the residual
    relative to the initial one drops below ``tol``; x0 defaults to a
    seeded uniform(-1, 1) vector.

    Returns (x, SolveReport).
    """
    matrix = _as_matrix(A)
    apply_inverse = preconditioner.solve if hasattr(preconditioner, 'solve') else preconditioner
    n = matrix.shape[0]
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise InvalidArgumentError(f'right-hand side of length {len(b)} for a {n}x{n} system')
    max_iter = 5 * n if max_iter is None else max_iter
    if x0 is None:
        x0 = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    x = np.array(x0, dtype=float)
    report = SolveReport()
    start = time.perf_counter()

    r1 = b - matrix @ x
    y = apply_inverse(r1)
    beta1 = r1 @ y
    if beta1 < 0:
        raise NotPositiveDefiniteError('preconditioner is not positive definite')
    beta1 = np.sqrt(beta1)
    if beta1 == 0:
        report.converged = True
        report.wall_time = time.perf_counter() - start
        return x, report

    eps = np.finfo(float).eps
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1

    for itn in range(1, max_iter + 1):
        v = y / beta
        y = matrix @ v
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = v @ y
        y = y - (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = apply_inverse(r2)
        oldb = beta
        beta = r2 @ y
        if beta < -1e-12 * beta1 ** 2:
            raise NotPositiveDefiniteError('preconditioner is not positive definite')
        beta = np.sqrt(max(beta, 0.0))

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        relative = phibar / beta1
        report.history.append(float(relative))
        report.iterations = itn
        if relative <= tol:
            report.converged = True
            break
        if beta <= eps * beta1:
            report.breakdown = True
            logger.warning('MINRES breakdown at iteration %d (residual %.3e)', itn, relative)
            break

    report.wall_time = time.perf_counter() - start
    if not report.converged and not report.breakdown:
        logger.warning('MINRES stopped after %d iterations at residual %.3e', report.iterations,
                       report.history[-1] if report.history else float('nan'))
    return x, report


def direct_solve(bundle):
    """Sparse LU solve of the full system."""
    return factorize(bundle.operator, FactorizationKind.LU, dense_limit=0).solve(bundle.rhs)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    condition: float
    method: SpectrumMethod
    min_abs: float
    max_abs: float


def _householder_complement(y):
    """Unit v such that (I - 2 v v') maps y onto a multiple of the first unit vector."""
    v = np.array(y, dtype=float)
    v /= np.linalg.norm(v)
    v[0] += np.copysign(1.0, v[0]) if v[0] != 0 else 1.0
    v /= np.linalg.norm(v)
    return v


def dense_spectrum(A, N, deflation=None):
    """Eigenvalues of L^{-1} A L^{-T} with N = L L'."""
    a = _as_matrix(A)
    nmat = _as_matrix(N)
    a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    nmat = nmat.toarray() if sp.issparse(nmat) else np.asarray(nmat, dtype=float)
    try:
        L = la.cholesky(nmat, lower=True)
    except la.LinAlgError as exc:
        raise NotPositiveDefiniteError(f'preconditioner is not positive definite: {exc}') from exc
    C = la.solve_triangular(L, a, lower=True)
    C = la.solve_triangular(L, C.T, lower=True)
    C = 0.5 * (C + C.T)
    if deflation is not None:
        # z in the transformed variables is L' z
        v = _householder_complement(L.T @ np.asarray(deflation, dtype=float))
        HC = C - 2.0 * np.outer(v, v @ C)
        HCH = HC - 2.0 * np.outer(HC @ v, v)
        C = HCH[1:, 1:]
    try:
        return la.eigvalsh(C)
    except la.LinAlgError as exc:
        raise EigensolverError(f'dense eigensolve failed: {exc}') from exc


def lanczos_extremes(apply_op, apply_n, n, seed=0, tol=1e-3, max_iter=300, project=None):
    """
    Largest |θ| among the Ritz values of an N-self-adjoint operator, from
    Lanczos in the N inner product with full reorthogonalization.
    Stops once the estimate changes by less than ``tol`` relatively.
    """
    rng = np.random.default_rng(seed)
    q = rng.uniform(-1.0, 1.0, n)
    if project is not None:
        q = project(q)
    Nq = apply_n(q)
    norm = np.sqrt(q @ Nq)
    Q, NQ = [q / norm], [Nq / norm]
    alphas, betas = [], []
    previous = None
    estimate = None
    for j in range(min(max_iter, n)):
        w = apply_op(Q[-1])
        if project is not None:
            w = project(w)
        Nw = apply_n(w)
        alpha = Q[-1] @ Nw
        alphas.append(alpha)
        Qm = np.array(Q)
        NQm = np.array(NQ)
        for _ in range(2):
            coeffs = NQm @ w
            w = w - coeffs @ Qm
        Nw = apply_n(w)
        beta = np.sqrt(max(w @ Nw, 0.0))
        ritz = la.eigvalsh_tridiagonal(np.array(alphas), np.array(betas)) if betas else np.array(alphas)
        estimate = float(np.max(np.abs(ritz)))
        if previous is not None and abs(estimate - previous) <= tol * estimate:
            return estimate, j + 1
        previous = estimate
        if beta <= 1e-14 * max(estimate, 1.0):
            return estimate, j + 1
        betas.append(beta)
        Q.append(w / beta)
        NQ.append(Nw / beta)
    if estimate is None:
        raise EigensolverError('Lanczos produced no Ritz values')
    logger.warning('Lanczos reached %d steps without meeting tolerance %g', max_iter, tol)
    return estimate, max_iter


def _complement_solver(a, nz):
    """
    Solver for A x = y restricted to the N-complement of the kernel vector z,
    through the bordered system [[A, Nz], [(Nz)', 0]] whose solution
    satisfies z' N x = 0. ``y`` must be orthogonal to z.
    """
    n = a.shape[0]
    border = nz * (abs(a).max() / np.abs(nz).max())
    bordered = sp.bmat([[a, sp.csr_matrix(border[:, None])],
                        [sp.csr_matrix(border[None, :]), None]], format='csc')
    solver = factorize(bordered, FactorizationKind.LU, dense_limit=0)
    return lambda y: solver.solve(np.append(y, 0.0))[:n]


def lanczos_spectrum(A, N, deflation=None, seed=0, tol=1e-3, max_iter=300):
    """Extreme |λ| of A x = λ N x: N^{-1}A for the largest, A^{-1}N for the smallest."""
    a = sp.csr_matrix(_as_matrix(A))
    nmat = sp.csr_matrix(_as_matrix(N))
    n = a.shape[0]
    n_solver = factorize(nmat, FactorizationKind.LU, dense_limit=0)
    project = None
    if deflation is None:
        solve_a = factorize(a, FactorizationKind.LU, dense_limit=0).solve
    else:
        z = np.asarray(deflation, dtype=float)
        Nz = nmat @ z
        zz = z @ Nz
        solve_a = _complement_solver(a, Nz)

        def project(x):
            return x - z * ((Nz @ x) / zz)

    def apply_n(x):
        return nmat @ x

    largest, steps_max = lanczos_extremes(lambda x: n_solver.solve(a @ x), apply_n, n, seed, tol,
                                          max_iter, project)
    inverse_smallest, steps_min = lanczos_extremes(lambda x: solve_a(nmat @ x), apply_n, n,
                                                   seed + 1, tol, max_iter, project)
    logger.debug('Lanczos: %d + %d steps', steps_max, steps_min)
    return 1.0 / inverse_smallest, largest


def condition_number(A, N, deflation=None, method=SpectrumMethod.AUTO, dense_limit=DENSE_EIG_LIMIT,
                     tol=1e-3, seed=0):
    """Spectral condition number max|λ| / min|λ| of the pencil A x = λ N x."""
    method = SpectrumMethod(method)
    n = _as_matrix(A).shape[0]
    if method == SpectrumMethod.AUTO:
        method = SpectrumMethod.DENSE if n < dense_limit else SpectrumMethod.LANCZOS
    if method == SpectrumMethod.DENSE:
        eigenvalues = dense_spectrum(A, N, deflation)
        magnitudes = np.abs(eigenvalues)
        min_abs, max_abs = float(magnitudes.min()), float(magnitudes.max())
    else:
        min_abs, max_abs = lanczos_spectrum(A, N, deflation, seed, tol)
        eigenvalues = np.array([min_abs, max_abs])
    if min_abs == 0:
        raise EigensolverError('preconditioned operator is singular')
    condition = max_abs / min_abs
    logger.debug('%s spectrum of size %d: |λ| in [%.4g, %.4g], condition %.4g',
                 method.value, n, min_abs, max_abs, condition)
    return SpectrumReport(eigenvalues, condition, method, min_abs, max_abs)


def bundle_condition_number(bundle, deflate=False, **options):
    deflation = bundle.deflation if deflate else None
    return condition_number(bundle.operator, bundle.preconditioner, deflation=deflation, **options)
