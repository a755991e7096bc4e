"""
Finite elements on triangle meshes: P0, P1, P2 (scalar or 2-vector) and the
lowest order Raviart-Thomas element RT0, with DOF maps, quadrature and
vectorized assembly of the volume forms.
"""

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidArgumentError, UnsupportedPairError, UnsupportedSpaceError

logger = logging.getLogger(__name__)


class Family(str, enum.Enum):
    P0 = 'P0'
    P1 = 'P1'
    P2 = 'P2'
    RT0 = 'RT0'


class ValueRank(str, enum.Enum):
    SCALAR = 'scalar'
    VECTOR = 'vector'
    # vector valued by construction (RT0)
    INTRINSIC = 'intrinsic'


DEGREE = {Family.P0: 0, Family.P1: 1, Family.P2: 2, Family.RT0: 1}

LEGAL_DIV_PAIRS = {(Family.P2, Family.P1), (Family.P2, Family.P0), (Family.RT0, Family.P0)}


@lru_cache(maxsize=None)
def interval_rule(degree):
    """Gauss-Legendre points on [0, 1] with weights summing to 1."""
    n = max(1, math.ceil((degree + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """
    Collapsed Gauss rule on a triangle, exact for polynomials of ``degree``.

    Returns barycentric points (nq, 3) and weights summing to 1, so that
    integrals are ``area * sum(w * f)``.
    """
    n = max(1, math.ceil((degree + 2) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing='ij')
    WU, WV = np.meshgrid(wu, wu, indexing='ij')
    s = U.ravel()
    t = (V * (1.0 - U)).ravel()
    weights = 2.0 * (WU * WV * (1.0 - U)).ravel()
    bary = np.column_stack([1.0 - s - t, s, t])
    return bary, weights


@dataclass(frozen=True, eq=False)
class DofMap:
    cell_dofs: np.ndarray
    total_dofs: int
    dirichlet_dofs: np.ndarray
    signs: np.ndarray


@dataclass(frozen=True, eq=False)
class SpaceDescriptor:
    """
    A finite element space on a mesh. Vector spaces interleave components
    per scalar DOF (ux0, uy0, ux1, ...).
    """
    family: Family
    mesh: object
    value_rank: ValueRank = ValueRank.SCALAR
    dirichlet_tags: frozenset = frozenset()

    def __post_init__(self):
        if (self.family == Family.RT0) != (self.value_rank == ValueRank.INTRINSIC):
            raise UnsupportedSpaceError(
                f'{self.family.value} cannot be combined with value rank {self.value_rank.value}')

    @property
    def degree(self):
        return DEGREE[self.family]

    @property
    def vector_valued(self):
        return self.value_rank != ValueRank.SCALAR

    @property
    def components(self):
        return 2 if self.value_rank == ValueRank.VECTOR else 1

    @property
    def dim(self):
        return self.dofmap.total_dofs

    @cached_property
    def scalar_dofs(self):
        mesh = self.mesh
        return {
            Family.P0: mesh.num_cells,
            Family.P1: mesh.num_vertices,
            Family.P2: mesh.num_vertices + mesh.num_facets,
            Family.RT0: mesh.num_facets,
        }[self.family]

    @cached_property
    def nodes(self):
        """Coordinates of the scalar DOF nodes (facet midpoints for RT0)."""
        mesh = self.mesh
        if self.family == Family.P0:
            return mesh.cell_centroids
        if self.family == Family.P1:
            return mesh.vertices
        if self.family == Family.P2:
            return np.vstack([mesh.vertices, mesh.facet_midpoints])
        return mesh.facet_midpoints

    @cached_property
    def dofmap(self):
        mesh = self.mesh
        if self.family == Family.P0:
            cell_dofs = np.arange(mesh.num_cells)[:, None]
        elif self.family == Family.P1:
            cell_dofs = mesh.cells.copy()
        elif self.family == Family.P2:
            cell_dofs = np.hstack([mesh.cells, mesh.num_vertices + mesh.cell_facets])
        else:
            cell_dofs = mesh.cell_facets.copy()

        signs = np.ones(cell_dofs.shape)
        if self.family == Family.RT0:
            owner = mesh.facet_cells[mesh.cell_facets, 0]
            signs = np.where(owner == np.arange(mesh.num_cells)[:, None], 1.0, -1.0)

        facets = mesh.tagged_facets(self.dirichlet_tags) if self.dirichlet_tags else np.empty(0, int)
        if self.family == Family.P1:
            fixed = np.unique(mesh.facets[facets])
        elif self.family == Family.P2:
            fixed = np.concatenate([np.unique(mesh.facets[facets]), mesh.num_vertices + facets])
        elif self.family == Family.RT0:
            fixed = facets
        else:
            fixed = np.empty(0, int)
        fixed = np.unique(fixed).astype(np.int64)

        total = self.scalar_dofs
        if self.value_rank == ValueRank.VECTOR:
            cell_dofs = np.stack([2 * cell_dofs, 2 * cell_dofs + 1], axis=-1).reshape(len(cell_dofs), -1)
            signs = np.repeat(signs, 2, axis=1)
            fixed = np.sort(np.concatenate([2 * fixed, 2 * fixed + 1]))
            total *= 2
        return DofMap(cell_dofs=cell_dofs, total_dofs=total, dirichlet_dofs=fixed, signs=signs)


def function_space(mesh, family, vector=False, dirichlet=()):
    """Convenience constructor choosing the value rank from the family."""
    family = Family(family)
    if family == Family.RT0:
        rank = ValueRank.INTRINSIC
    else:
        rank = ValueRank.VECTOR if vector else ValueRank.SCALAR
    return SpaceDescriptor(family, mesh, rank, frozenset(dirichlet))


@dataclass(frozen=True)
class Tabulation:
    """
    Basis functions at quadrature points of a set of cells.

    values: (cells, q, local) or (cells, q, local, 2);
    gradients: (cells, q, local, 2) or (cells, q, local, 2, 2) with [component, derivative];
    divergence: (cells, q, local) for vector-valued spaces.
    """
    values: np.ndarray
    gradients: np.ndarray
    divergence: np.ndarray = None


def barycentric_coordinates(mesh, cells, points):
    """Barycentric coordinates of ``points`` (m, q, 2) inside ``cells`` (m,)."""
    G = mesh.barycentric_gradients[cells]
    offset = points - mesh.cell_centroids[cells][:, None, :]
    return 1.0 / 3.0 + np.einsum('mjd,mqd->mqj', G, offset)


def quadrature_points(mesh, bary, cells=None):
    cells = np.arange(mesh.num_cells) if cells is None else np.asarray(cells)
    bary = np.broadcast_to(bary, (len(cells),) + np.shape(bary)[-2:])
    return np.einsum('mqj,mjd->mqd', bary, mesh.vertices[mesh.cells[cells]])


def tabulate(space, bary, cells=None):
    """Tabulate the basis of ``space`` at barycentric points, shape (q, 3) or (m, q, 3)."""
    mesh = space.mesh
    cells = np.arange(mesh.num_cells) if cells is None else np.asarray(cells)
    m = len(cells)
    bary = np.broadcast_to(bary, (m,) + np.shape(bary)[-2:])
    nq = bary.shape[1]
    G = mesh.barycentric_gradients[cells]

    if space.family == Family.RT0:
        V = mesh.vertices[mesh.cells[cells]]
        lengths = mesh.facet_lengths[mesh.cell_facets[cells]]
        scale = space.dofmap.signs[cells] * lengths / (2.0 * mesh.cell_areas[cells][:, None])
        x = np.einsum('mqj,mjd->mqd', bary, V)
        values = scale[:, None, :, None] * (x[:, :, None, :] - V[:, None, :, :])
        gradients = scale[:, None, :, None, None] * np.eye(2)
        gradients = np.broadcast_to(gradients, (m, nq, 3, 2, 2))
        divergence = np.broadcast_to(2.0 * scale[:, None, :], (m, nq, 3))
        return Tabulation(values, gradients, divergence)

    if space.family == Family.P0:
        values = np.ones((m, nq, 1))
        gradients = np.zeros((m, nq, 1, 2))
    elif space.family == Family.P1:
        values = np.array(bary)
        gradients = np.broadcast_to(G[:, None, :, :], (m, nq, 3, 2))
    else:
        lam = bary
        nxt = lam[..., [1, 2, 0]]
        nnx = lam[..., [2, 0, 1]]
        values = np.concatenate([lam * (2.0 * lam - 1.0), 4.0 * nxt * nnx], axis=-1)
        dphi = np.zeros((m, nq, 6, 3))
        for i in range(3):
            dphi[:, :, i, i] = 4.0 * lam[..., i] - 1.0
            dphi[:, :, 3 + i, (i + 1) % 3] = 4.0 * lam[..., (i + 2) % 3]
            dphi[:, :, 3 + i, (i + 2) % 3] = 4.0 * lam[..., (i + 1) % 3]
        gradients = np.einsum('mqaj,mjd->mqad', dphi, G)

    if space.value_rank == ValueRank.SCALAR:
        return Tabulation(values, gradients)

    s = values.shape[-1]
    vvalues = np.zeros((m, nq, 2 * s, 2))
    vgrads = np.zeros((m, nq, 2 * s, 2, 2))
    vdiv = np.zeros((m, nq, 2 * s))
    for c in range(2):
        vvalues[:, :, c::2, c] = values
        vgrads[:, :, c::2, c, :] = gradients
        vdiv[:, :, c::2] = gradients[..., c]
    return Tabulation(vvalues, vgrads, vdiv)


def _jacobian_weights(mesh, weights, cells=None):
    areas = mesh.cell_areas if cells is None else mesh.cell_areas[cells]
    return areas[:, None] * weights[None, :]


def _scatter(rows, cols, local, shape):
    R = np.broadcast_to(rows[:, :, None], local.shape)
    C = np.broadcast_to(cols[:, None, :], local.shape)
    matrix = sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape).tocsr()
    matrix.sum_duplicates()
    return matrix


def _scatter_vector(dofs, local, size):
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=size)


def constrain_square(matrix, dofs):
    """Zero rows and columns of ``dofs`` and put a unit diagonal on them."""
    if len(dofs) == 0:
        return matrix.tocsr()
    mask = np.ones(matrix.shape[0])
    mask[dofs] = 0.0
    keep = sp.diags(mask)
    return (keep @ matrix @ keep + sp.diags(1.0 - mask)).tocsr()


def constrain_rectangular(matrix, row_dofs=(), col_dofs=()):
    """Zero the rows ``row_dofs`` and columns ``col_dofs`` of a coupling block."""
    rows = np.ones(matrix.shape[0])
    rows[np.asarray(row_dofs, dtype=int)] = 0.0
    cols = np.ones(matrix.shape[1])
    cols[np.asarray(col_dofs, dtype=int)] = 0.0
    return (sp.diags(rows) @ matrix @ sp.diags(cols)).tocsr()


def _finish_square(space, matrix, constrained):
    if constrained:
        return constrain_square(matrix, space.dofmap.dirichlet_dofs)
    return matrix


def assemble_mass(space, coeff=1.0, constrained=True):
    """Matrix of coeff * (u, v)."""
    bary, weights = triangle_rule(max(2 * space.degree, 1))
    tab = tabulate(space, bary)
    jw = coeff * _jacobian_weights(space.mesh, weights)
    if space.vector_valued:
        local = np.einsum('cq,cqad,cqbd->cab', jw, tab.values, tab.values)
    else:
        local = np.einsum('cq,cqa,cqb->cab', jw, tab.values, tab.values)
    dofs = space.dofmap.cell_dofs
    matrix = _scatter(dofs, dofs, local, (space.dim, space.dim))
    return _finish_square(space, matrix, constrained)


def assemble_stiffness(space, coeff=1.0, constrained=True):
    """Matrix of coeff * (grad u, grad v) for Lagrange spaces."""
    if space.family not in (Family.P1, Family.P2):
        raise UnsupportedSpaceError(f'stiffness needs a P1 or P2 space, got {space.family.value}')
    if coeff < 0:
        raise InvalidArgumentError(f'stiffness coefficient must be non-negative, got {coeff}')
    bary, weights = triangle_rule(max(2 * space.degree - 2, 1))
    tab = tabulate(space, bary)
    jw = coeff * _jacobian_weights(space.mesh, weights)
    if space.vector_valued:
        local = np.einsum('cq,cqaij,cqbij->cab', jw, tab.gradients, tab.gradients)
    else:
        local = np.einsum('cq,cqad,cqbd->cab', jw, tab.gradients, tab.gradients)
    dofs = space.dofmap.cell_dofs
    matrix = _scatter(dofs, dofs, local, (space.dim, space.dim))
    return _finish_square(space, matrix, constrained)


def symmetric_gradient(gradients):
    return 0.5 * (gradients + np.swapaxes(gradients, -1, -2))


def assemble_epsilon_form(space, coeff=1.0, constrained=True):
    """Matrix of 2 * coeff * (eps(u), eps(v))."""
    if space.value_rank != ValueRank.VECTOR or space.family not in (Family.P1, Family.P2):
        raise UnsupportedSpaceError('symmetric gradient form needs a vector P1 or P2 space')
    bary, weights = triangle_rule(max(2 * space.degree - 2, 1))
    tab = tabulate(space, bary)
    eps = symmetric_gradient(tab.gradients)
    jw = 2.0 * coeff * _jacobian_weights(space.mesh, weights)
    local = np.einsum('cq,cqaij,cqbij->cab', jw, eps, eps)
    dofs = space.dofmap.cell_dofs
    matrix = _scatter(dofs, dofs, local, (space.dim, space.dim))
    return _finish_square(space, matrix, constrained)


def assemble_div(velocity, pressure, coeff=1.0, constrained=True):
    """Rectangular matrix of coeff * (div u, q); rows are pressure DOFs."""
    pair = (velocity.family, pressure.family)
    if (pair not in LEGAL_DIV_PAIRS or not velocity.vector_valued
            or pressure.value_rank != ValueRank.SCALAR):
        raise UnsupportedPairError(f'no divergence pairing for {pair[0].value}/{pair[1].value}')
    if velocity.mesh is not pressure.mesh:
        raise InvalidArgumentError('velocity and pressure live on different meshes')
    bary, weights = triangle_rule(velocity.degree - 1 + pressure.degree)
    utab = tabulate(velocity, bary)
    ptab = tabulate(pressure, bary)
    jw = coeff * _jacobian_weights(velocity.mesh, weights)
    local = np.einsum('cq,cqp,cqu->cpu', jw, ptab.values, utab.divergence)
    matrix = _scatter(pressure.dofmap.cell_dofs, velocity.dofmap.cell_dofs, local,
                      (pressure.dim, velocity.dim))
    if constrained:
        return constrain_rectangular(matrix, pressure.dofmap.dirichlet_dofs,
                                     velocity.dofmap.dirichlet_dofs)
    return matrix


def assemble_hdiv_operator(space, coeff=1.0, constrained=True):
    """Matrix of coeff * ((u, v) + (div u, div v)) on RT0."""
    if space.family != Family.RT0:
        raise UnsupportedSpaceError(f'H(div) operator needs RT0, got {space.family.value}')
    bary, weights = triangle_rule(2)
    tab = tabulate(space, bary)
    jw = coeff * _jacobian_weights(space.mesh, weights)
    local = (np.einsum('cq,cqad,cqbd->cab', jw, tab.values, tab.values)
             + np.einsum('cq,cqa,cqb->cab', jw, tab.divergence, tab.divergence))
    dofs = space.dofmap.cell_dofs
    matrix = _scatter(dofs, dofs, local, (space.dim, space.dim))
    return _finish_square(space, matrix, constrained)


def _as_field(values, shape):
    return np.broadcast_to(np.asarray(values, dtype=float), shape)


def assemble_source(space, f, degree=None):
    """Load vector of (f, v) for a callable f(points) with points of shape (..., 2)."""
    degree = space.degree + 4 if degree is None else degree
    bary, weights = triangle_rule(degree)
    tab = tabulate(space, bary)
    points = quadrature_points(space.mesh, bary)
    jw = _jacobian_weights(space.mesh, weights)
    if space.vector_valued:
        fq = _as_field(f(points), points.shape)
        local = np.einsum('cq,cqad,cqd->ca', jw, tab.values, fq)
    else:
        fq = _as_field(f(points), points.shape[:-1])
        local = np.einsum('cq,cqa,cq->ca', jw, tab.values, fq)
    return _scatter_vector(space.dofmap.cell_dofs, local, space.dim)


def facet_quadrature(mesh, facet_ids, degree):
    """
    Points, weights and owning cells for a Gauss rule on the given facets.

    Facets are parameterized from their lower to their higher vertex index.
    Returns (cells (m,), points (m, q, 2), weights (m, q)).
    """
    facet_ids = np.asarray(facet_ids)
    t, w = interval_rule(degree)
    ends = mesh.vertices[mesh.facets[facet_ids]]
    points = ends[:, None, 0, :] * (1.0 - t)[None, :, None] + ends[:, None, 1, :] * t[None, :, None]
    weights = mesh.facet_lengths[facet_ids][:, None] * w[None, :]
    return mesh.facet_cells[facet_ids, 0], points, weights


def assemble_boundary_source(space, tags, g, degree=None):
    """
    Load vector of the facet integral of g(x, n) . v over facets carrying one
    of ``tags``, with n the outward unit normal of the owning cell.
    """
    mesh = space.mesh
    facet_ids = mesh.tagged_facets(tags)
    if len(facet_ids) == 0:
        return np.zeros(space.dim)
    degree = space.degree + 4 if degree is None else degree
    cells, points, weights = facet_quadrature(mesh, facet_ids, degree)
    normals = np.broadcast_to(mesh.facet_normals[facet_ids][:, None, :], points.shape)
    tab = tabulate(space, barycentric_coordinates(mesh, cells, points), cells)
    if space.vector_valued:
        gq = _as_field(g(points, normals), points.shape)
        local = np.einsum('mq,mqad,mqd->ma', weights, tab.values, gq)
    else:
        gq = _as_field(g(points, normals), points.shape[:-1])
        local = np.einsum('mq,mqa,mq->ma', weights, tab.values, gq)
    return _scatter_vector(space.dofmap.cell_dofs[cells], local, space.dim)


def interpolate(space, f):
    """
    Interpolant coefficients of a callable f(points) -> values.

    Lagrange spaces use nodal values (P0: centroid value), RT0 the mean
    normal component on each facet (exact for linear fields).
    """
    nodes = space.nodes
    if space.family == Family.RT0:
        values = _as_field(f(nodes), nodes.shape)
        return np.einsum('fd,fd->f', values, space.mesh.facet_normals)
    if space.value_rank == ValueRank.VECTOR:
        return np.array(_as_field(f(nodes), nodes.shape)).ravel()
    return np.array(_as_field(f(nodes), nodes.shape[:-1]))


def evaluate(space, coefficients, bary, cells=None):
    """Values, gradients and divergence of a discrete field at barycentric points."""
    cells = np.arange(space.mesh.num_cells) if cells is None else np.asarray(cells)
    tab = tabulate(space, bary, cells)
    local = np.asarray(coefficients)[space.dofmap.cell_dofs[cells]]
    if space.vector_valued:
        values = np.einsum('mqad,ma->mqd', tab.values, local)
        gradients = np.einsum('mqaij,ma->mqij', tab.gradients, local)
        divergence = np.einsum('mqa,ma->mq', tab.divergence, local)
        return values, gradients, divergence
    values = np.einsum('mqa,ma->mq', tab.values, local)
    gradients = np.einsum('mqad,ma->mqd', tab.gradients, local)
    return values, gradients, None


def apply_dirichlet(matrix, rhs, dofs, values):
    """
    Symmetric elimination of the constrained DOFs.

    Returns a new (matrix, rhs) pair: rows and columns of ``dofs`` carry a
    unit diagonal and the right-hand side is lifted so that the solution
    takes ``values`` there.
    """
    dofs = np.asarray(dofs, dtype=int)
    values = np.asarray(values, dtype=float)
    if dofs.shape != values.shape:
        raise InvalidArgumentError(f'{len(dofs)} constrained DOFs but {len(values)} values')
    if len(rhs) != matrix.shape[0]:
        raise InvalidArgumentError('right-hand side does not match the matrix size')
    if len(dofs) and (dofs.min() < 0 or dofs.max() >= matrix.shape[0]):
        raise InvalidArgumentError('constrained DOF out of range')
    lifting = np.zeros(matrix.shape[0])
    lifting[dofs] = values
    rhs = np.asarray(rhs, dtype=float) - matrix @ lifting
    rhs[dofs] = values
    return constrain_square(matrix, dofs), rhs


def write_matrix(path, matrix):
    """Coordinate text dump, one ``i j value`` line per stored entry."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    path = Path(path)
    with path.open('w') as handle:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            handle.write(f'{i} {j} {v:.17g}\n')
    return path
