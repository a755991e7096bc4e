"""
Interface multiplier spaces, trace couplings between subdomain spaces and
the interface, and fractional operators (-Δ + I)^s realized by a dense
generalized eigendecomposition.
"""

import enum
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .exceptions import (
    EigensolverError,
    InvalidArgumentError,
    NotPositiveDefiniteError,
    UnsupportedSpaceError,
)
from .fem import (
    Family,
    ValueRank,
    _scatter,
    barycentric_coordinates,
    constrain_rectangular,
    constrain_square,
    interval_rule,
    tabulate,
)
from .mesh import align_interface

logger = logging.getLogger(__name__)


class Flavor(str, enum.Enum):
    FREE = 'free'
    ZERO_TRACE_00 = '00'


@dataclass(frozen=True, eq=False)
class InterfaceSpace:
    family: Family
    mesh: object
    value_rank: ValueRank = ValueRank.SCALAR

    def __post_init__(self):
        if self.family not in (Family.P0, Family.P1):
            raise UnsupportedSpaceError(f'interface spaces are P0 or P1, got {self.family.value}')
        if self.value_rank not in (ValueRank.SCALAR, ValueRank.VECTOR):
            raise UnsupportedSpaceError(f'interface value rank {self.value_rank.value} not supported')

    @property
    def components(self):
        return 2 if self.value_rank == ValueRank.VECTOR else 1

    @property
    def scalar_dim(self):
        if self.family == Family.P0:
            return self.mesh.num_segments
        return self.mesh.num_vertices

    @property
    def dim(self):
        return self.components * self.scalar_dim

    def scalar(self):
        return InterfaceSpace(self.family, self.mesh, ValueRank.SCALAR)

    @cached_property
    def segment_dofs(self):
        n = self.mesh.num_segments
        if self.family == Family.P0:
            dofs = np.arange(n)[:, None]
        else:
            dofs = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        if self.value_rank == ValueRank.VECTOR:
            dofs = np.stack([2 * dofs, 2 * dofs + 1], axis=-1).reshape(n, -1)
        return dofs

    def basis(self, t):
        """Local basis at segment parameters t: (q, local) or (q, local, 2) for vectors."""
        t = np.asarray(t)
        if self.family == Family.P0:
            psi = np.ones((len(t), 1))
        else:
            psi = np.column_stack([1.0 - t, t])
        if self.value_rank == ValueRank.SCALAR:
            return psi
        vec = np.zeros((len(t), 2 * psi.shape[1], 2))
        for c in range(2):
            vec[:, c::2, c] = psi
        return vec


@dataclass(frozen=True)
class FractionalSpec:
    """
    weight * (-Δ + I)^s with the given boundary flavor. Multiplier blocks
    use s in (-1, 1); the endpoints s = ±1 are accepted as well, s = 1
    giving weight times the shifted Laplacian and s = -1 weight * M A^{-1} M.
    """
    s: float
    flavor: Flavor = Flavor.FREE
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise InvalidArgumentError(f'fractional weight must be positive, got {self.weight}')
        if abs(self.s) > 1:
            raise InvalidArgumentError(f'fractional exponent must lie in [-1, 1], got {self.s}')


class FractionalOperator:
    """
    Dense SPD realization of a (sum of) fractional interface operator(s).

    The Cholesky factorization is computed on first use and reused.
    """

    def __init__(self, space, specs, matrix, eigenvalues=()):
        self.space = space
        self.specs = tuple(specs)
        self.matrix = np.asarray(matrix)
        self.eigenvalues = tuple(eigenvalues)
        self.components = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def factor(self):
        try:
            return la.cho_factor(self.matrix, lower=True)
        except la.LinAlgError as exc:
            raise NotPositiveDefiniteError(f'interface operator is not SPD: {exc}') from exc

    def solve(self, b):
        return la.cho_solve(self.factor, b)

    def apply(self, x):
        return self.matrix @ x

    def __repr__(self):
        return f'FractionalOperator(dim={self.dim}, specs={self.specs})'


def _require_scalar(space, what):
    if space.value_rank != ValueRank.SCALAR:
        raise UnsupportedSpaceError(f'{what} works on scalar interface spaces')


def assemble_interface_mass(space):
    h = space.mesh.segment_lengths
    if space.family == Family.P0:
        mass = sp.diags(h)
    else:
        n = len(h)
        main = np.zeros(n + 1)
        main[:-1] += h / 3.0
        main[1:] += h / 3.0
        mass = sp.diags([h / 6.0, main, h / 6.0], [-1, 0, 1])
    if space.value_rank == ValueRank.VECTOR:
        mass = sp.kron(mass, sp.identity(2))
    return sp.csr_matrix(mass)


def assemble_interface_laplacian(space, flavor=Flavor.FREE):
    """
    Jump Laplacian of a P0 interface field: interior vertices weigh the jump
    by the inverse mean length of the two segments; the 00 flavor adds the
    inverse length at the two endpoints.
    """
    if space.family != Family.P0:
        raise UnsupportedSpaceError('jump Laplacian is defined for P0 interface fields only')
    _require_scalar(space, 'jump Laplacian')
    h = space.mesh.segment_lengths
    n = len(h)
    c = 2.0 / (h[:-1] + h[1:])
    main = np.zeros(n)
    main[:-1] += c
    main[1:] += c
    if Flavor(flavor) == Flavor.ZERO_TRACE_00:
        main[0] += 1.0 / h[0]
        main[-1] += 1.0 / h[-1]
    return sp.csr_matrix(sp.diags([-c, main, -c], [-1, 0, 1], shape=(n, n)))


def assemble_interface_stiffness(space, flavor=Flavor.FREE):
    """P1 stiffness on the interface; the 00 flavor penalizes the endpoint values by 1/h."""
    if space.family != Family.P1:
        raise UnsupportedSpaceError('interface stiffness is defined for P1 fields only')
    _require_scalar(space, 'interface stiffness')
    h = space.mesh.segment_lengths
    n = len(h)
    main = np.zeros(n + 1)
    main[:-1] += 1.0 / h
    main[1:] += 1.0 / h
    if Flavor(flavor) == Flavor.ZERO_TRACE_00:
        main[0] += 1.0 / h[0]
        main[-1] += 1.0 / h[-1]
    return sp.csr_matrix(sp.diags([-1.0 / h, main, -1.0 / h], [-1, 0, 1]))


def shifted_laplacian(space, flavor):
    """Discrete -Δ + I for a scalar interface space."""
    if space.family == Family.P0:
        laplacian = assemble_interface_laplacian(space, flavor)
    else:
        laplacian = assemble_interface_stiffness(space, flavor)
    return laplacian + assemble_interface_mass(space)


def build_fractional(space, spec):
    """
    H(s) = weight * M Φ Λ^s Φ' M with A Φ = M Φ Λ, Φ' M Φ = I and
    A the discrete -Δ + I of the requested flavor.
    """
    if space.value_rank == ValueRank.VECTOR:
        scalar = build_fractional(space.scalar(), spec)
        return componentwise(space, [scalar, scalar])
    A = shifted_laplacian(space, spec.flavor).toarray()
    M = assemble_interface_mass(space).toarray()
    try:
        lam, phi = la.eigh(A, M)
    except la.LinAlgError as exc:
        raise EigensolverError(f'interface eigenproblem failed: {exc}') from exc
    if lam.min() <= 0:
        raise EigensolverError(f'interface eigenvalue {lam.min()} is not positive')
    Mphi = M @ phi
    H = spec.weight * (Mphi * lam ** spec.s) @ Mphi.T
    H = 0.5 * (H + H.T)
    logger.debug('fractional operator s=%g flavor=%s weight=%g dim=%d',
                 spec.s, Flavor(spec.flavor).value, spec.weight, len(lam))
    return FractionalOperator(space, [spec], H, eigenvalues=[lam])


def sum_fractional(ops):
    ops = list(ops)
    if not ops:
        raise InvalidArgumentError('cannot sum an empty list of interface operators')
    first = ops[0]
    for op in ops[1:]:
        if op.dim != first.dim or op.space.value_rank != first.space.value_rank:
            raise InvalidArgumentError('interface operators live on different spaces')
    if len(ops) == 1:
        return first
    matrix = sum(op.matrix for op in ops)
    specs = [s for op in ops for s in op.specs]
    eigenvalues = [e for op in ops for e in op.eigenvalues]
    return FractionalOperator(first.space, specs, matrix, eigenvalues)


def componentwise(space, ops):
    """Vector operator acting with ops[c] on component c of an interleaved field."""
    if space.value_rank != ValueRank.VECTOR or len(ops) != 2:
        raise InvalidArgumentError('componentwise operators need a vector space and two components')
    n = space.scalar_dim
    matrix = np.zeros((2 * n, 2 * n))
    for c, op in enumerate(ops):
        if op.dim != n:
            raise InvalidArgumentError('component operator has the wrong dimension')
        matrix[c::2, c::2] = op.matrix
    specs = [s for op in ops for s in op.specs]
    eigenvalues = [e for op in ops for e in op.eigenvalues]
    vector = FractionalOperator(space, specs, matrix, eigenvalues)
    vector.components = tuple(ops)
    return vector


def build_multiplier_operator(space, component_specs):
    """
    Sum of fractional operators per component. ``component_specs`` is one
    list of specs for a scalar space, or two lists (x, y) for a vector one.
    """
    if space.value_rank == ValueRank.SCALAR:
        return sum_fractional(build_fractional(space, spec) for spec in component_specs)
    scalar = space.scalar()
    parts = [sum_fractional(build_fractional(scalar, spec) for spec in specs)
             for specs in component_specs]
    return componentwise(space, parts)


def fractional_error_norm(space, spec, coefficients):
    """sqrt(e' H e) on a P1 interface space; ``spec`` may be a spec, a list of specs or an operator."""
    if space.family != Family.P1:
        raise UnsupportedSpaceError('fractional error norms are evaluated on P1 interface fields')
    if isinstance(spec, FractionalOperator):
        op = spec
    elif isinstance(spec, FractionalSpec):
        op = build_fractional(space, spec)
    else:
        op = build_multiplier_operator(space, spec)
    e = np.asarray(coefficients)
    return float(np.sqrt(max(e @ op.matrix @ e, 0.0)))


class InterfaceQuadrature:
    """Gauss points on the interface segments together with the domain cells containing them."""

    def __init__(self, domain_space, iface_mesh, degree):
        mesh = domain_space.mesh
        self.facets = align_interface(mesh, iface_mesh)
        self.t, self.points, self.weights = interface_points(iface_mesh, degree)
        self.cells = mesh.facet_cells[self.facets, 0]
        self.tab = tabulate(domain_space, barycentric_coordinates(mesh, self.cells, self.points),
                            self.cells)
        self.cell_dofs = domain_space.dofmap.cell_dofs[self.cells]


def assemble_trace(domain_space, iface_space, constrained=True):
    """Matrix of the interface integral of (Tu) . w; rows are multiplier DOFs."""
    if domain_space.family not in (Family.P1, Family.P2):
        raise UnsupportedSpaceError(f'trace needs a Lagrange space, got {domain_space.family.value}')
    if domain_space.value_rank != iface_space.value_rank:
        raise UnsupportedSpaceError('domain and interface value ranks differ')
    quad = InterfaceQuadrature(domain_space, iface_space.mesh, domain_space.degree + 1)
    psi = iface_space.basis(quad.t)
    if iface_space.value_rank == ValueRank.VECTOR:
        local = np.einsum('mq,qid,mqad->mia', quad.weights, psi, quad.tab.values)
    else:
        local = np.einsum('mq,qi,mqa->mia', quad.weights, psi, quad.tab.values)
    matrix = _scatter(iface_space.segment_dofs, quad.cell_dofs, local,
                      (iface_space.dim, domain_space.dim))
    if constrained:
        return constrain_rectangular(matrix, (), domain_space.dofmap.dirichlet_dofs)
    return matrix


def assemble_normal_trace(domain_space, iface_space, normal_sign=1.0, constrained=True):
    """Matrix of normal_sign times the interface integral of (u . n) w, n the interface normal."""
    if not domain_space.vector_valued or domain_space.family not in (Family.RT0, Family.P2, Family.P1):
        raise UnsupportedSpaceError('normal trace needs RT0 or a vector Lagrange space')
    if iface_space.value_rank != ValueRank.SCALAR:
        raise UnsupportedSpaceError('normal trace pairs with a scalar multiplier')
    quad = InterfaceQuadrature(domain_space, iface_space.mesh, domain_space.degree + 1)
    normal = normal_sign * iface_space.mesh.normal
    un = np.einsum('mqad,d->mqa', quad.tab.values, normal)
    local = np.einsum('mq,qi,mqa->mia', quad.weights, iface_space.basis(quad.t), un)
    matrix = _scatter(iface_space.segment_dofs, quad.cell_dofs, local,
                      (iface_space.dim, domain_space.dim))
    if constrained:
        return constrain_rectangular(matrix, (), domain_space.dofmap.dirichlet_dofs)
    return matrix


def assemble_tangential_trace_mass(domain_space, iface_mesh, coeff=1.0, constrained=False):
    """Matrix of coeff times the interface integral of (u . τ)(v . τ)."""
    if domain_space.value_rank != ValueRank.VECTOR:
        raise UnsupportedSpaceError('tangential trace needs a vector Lagrange space')
    quad = InterfaceQuadrature(domain_space, iface_mesh, 2 * domain_space.degree)
    ut = np.einsum('mqad,d->mqa', quad.tab.values, iface_mesh.tangent)
    local = coeff * np.einsum('mq,mqa,mqb->mab', quad.weights, ut, ut)
    matrix = _scatter(quad.cell_dofs, quad.cell_dofs, local, (domain_space.dim, domain_space.dim))
    if constrained:
        return constrain_square(matrix, domain_space.dofmap.dirichlet_dofs)
    return matrix


def interface_points(iface_mesh, degree):
    t, w = interval_rule(degree)
    a = iface_mesh.vertices[:-1]
    b = iface_mesh.vertices[1:]
    points = a[:, None, :] * (1.0 - t)[None, :, None] + b[:, None, :] * t[None, :, None]
    return t, points, iface_mesh.segment_lengths[:, None] * w[None, :]


def assemble_multiplier_source(iface_space, g, degree=6):
    """Load vector of the interface integral of g(x, n) . w, n the interface normal."""
    t, points, weights = interface_points(iface_space.mesh, degree)
    normals = np.broadcast_to(iface_space.mesh.normal, points.shape)
    psi = iface_space.basis(t)
    if iface_space.value_rank == ValueRank.VECTOR:
        gq = np.broadcast_to(np.asarray(g(points, normals), dtype=float), points.shape)
        local = np.einsum('mq,qid,mqd->mi', weights, psi, gq)
    else:
        gq = np.broadcast_to(np.asarray(g(points, normals), dtype=float), points.shape[:-1])
        local = np.einsum('mq,qi,mq->mi', weights, psi, gq)
    dofs = iface_space.segment_dofs
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=iface_space.dim)


def evaluate_multiplier(iface_space, coefficients, t):
    """Values of an interface field at segment parameters t, shape (segments, q[, 2])."""
    local = np.asarray(coefficients)[iface_space.segment_dofs]
    psi = iface_space.basis(t)
    if iface_space.value_rank == ValueRank.VECTOR:
        return np.einsum('qid,mi->mqd', psi, local)
    return np.einsum('qi,mi->mq', psi, local)


def write_eigenvalues(path, op):
    """One line per eigenvalue of every spec of ``op``."""
    path = Path(path)
    with path.open('w') as handle:
        for spec, lam in zip(op.specs, op.eigenvalues):
            handle.write(f'# s={spec.s} flavor={Flavor(spec.flavor).value} weight={spec.weight}\n')
            for value in lam:
                handle.write(f'{value:.17g}\n')
    return path
