"""
Structured triangulations of rectangles and of the two-rectangle coupled
geometry Ω_f = [0, ½]×[0, 1], Ω_p = [½, 1]×[0, 1] with interface x = ½.
"""

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError, MisalignedMeshError

logger = logging.getLogger(__name__)

GEOMETRY_TOL = 1e-12


class FacetTag(enum.IntEnum):
    INTERIOR = 0
    INTERFACE = 1
    DIR_F = 2
    NEU_F = 3
    DIR_P = 4
    NEU_P = 5
    OUTER = 6


class Subdomain(enum.IntEnum):
    FLUID = 0
    POROUS = 1


class CoupledGeometry(enum.Enum):
    DARCY_STOKES = 'darcy-stokes'
    ALL_DIRICHLET = 'all-dirichlet'
    POISSON_ND = 'poisson-nd'
    POISSON_DD = 'poisson-dd'
    POISSON_NN = 'poisson-nn'


class Layout(enum.Enum):
    """Geometry of a standalone subproblem."""
    UNIT_SQUARE = 'unit-square'
    HALF_DOMAIN = 'half-domain'


DIRICHLET_TAGS = frozenset({FacetTag.DIR_F, FacetTag.DIR_P})
NEUMANN_TAGS = frozenset({FacetTag.NEU_F, FacetTag.NEU_P, FacetTag.OUTER})


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Triangulation with facet adjacency.

    Local facet k of a cell is the edge opposite its vertex k. facet_cells
    lists the adjacent cells with the lower cell index first and -1 marking
    a missing neighbour.
    """
    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    cell_facets: np.ndarray
    facet_tags: np.ndarray
    cell_tags: np.ndarray
    bounds: tuple

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_facets(self):
        return len(self.facets)

    @cached_property
    def cell_areas(self):
        v = self.vertices[self.cells]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the three barycentric coordinates, shape (cells, 3, 2)."""
        v = self.vertices[self.cells]
        twice_area = 2.0 * self.cell_areas
        grads = np.empty((self.num_cells, 3, 2))
        for k in range(3):
            a = v[:, (k + 1) % 3]
            b = v[:, (k + 2) % 3]
            # rotate edge (a -> b) clockwise; inward for a CCW cell
            grads[:, k, 0] = (a[:, 1] - b[:, 1]) / twice_area
            grads[:, k, 1] = (b[:, 0] - a[:, 0]) / twice_area
        return grads

    @cached_property
    def cell_centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def facet_lengths(self):
        p = self.vertices[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def facet_midpoints(self):
        return self.vertices[self.facets].mean(axis=1)

    @cached_property
    def facet_normals(self):
        """Unit normals pointing out of facet_cells[:, 0]."""
        p = self.vertices[self.facets]
        t = p[:, 1] - p[:, 0]
        n = np.column_stack([t[:, 1], -t[:, 0]]) / self.facet_lengths[:, None]
        away = self.facet_midpoints - self.cell_centroids[self.facet_cells[:, 0]]
        flip = np.einsum('ij,ij->i', n, away) < 0
        n[flip] *= -1.0
        return n

    @cached_property
    def facet_local_index(self):
        """Local index of each facet inside facet_cells[:, 0]."""
        first = self.facet_cells[:, 0]
        match = self.cell_facets[first] == np.arange(self.num_facets)[:, None]
        return np.argmax(match, axis=1)

    def tagged_facets(self, tags):
        """Indices of facets whose tag is in ``tags``."""
        tags = np.fromiter((int(t) for t in tags), dtype=int)
        return np.flatnonzero(np.isin(self.facet_tags, tags))

    def interface_facets(self):
        """Interface facets ordered by the y coordinate of their midpoints."""
        ids = self.tagged_facets([FacetTag.INTERFACE])
        return ids[np.argsort(self.facet_midpoints[ids, 1], kind='stable')]

    @property
    def area(self):
        return float(self.cell_areas.sum())


@dataclass(frozen=True, eq=False)
class InterfaceMesh:
    """
    1D mesh of a vertical interface. Vertices are ordered by y; ``normal``
    is the unit normal pointing out of the reference domain.
    """
    vertices: np.ndarray
    normal: np.ndarray

    @property
    def num_segments(self):
        return len(self.vertices) - 1

    @property
    def num_vertices(self):
        return len(self.vertices)

    @cached_property
    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @cached_property
    def midpoints(self):
        return 0.5 * (self.vertices[:-1] + self.vertices[1:])

    @property
    def tangent(self):
        return np.array([-self.normal[1], self.normal[0]])

    @property
    def length(self):
        return float(self.segment_lengths.sum())


@dataclass(frozen=True, eq=False)
class CoupledMesh:
    fluid: Mesh
    porous: Mesh
    interface: InterfaceMesh
    geometry: CoupledGeometry


def build_rect_mesh(x0, x1, y0, y1, nx, ny, side_tags=None, subdomain=Subdomain.FLUID):
    """
    Uniform mesh of [x0, x1]×[y0, y1] with nx×ny squares, each split along
    its lower-left to upper-right diagonal.

    ``side_tags`` maps 'left', 'right', 'bottom', 'top' to a FacetTag;
    untagged sides get OUTER.
    """
    if nx < 1 or ny < 1:
        raise InvalidArgumentError(f'mesh needs at least one square per direction, got {nx}x{ny}')
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgumentError(f'degenerate rectangle [{x0}, {x1}]x[{y0}, {y1}]')

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, b, c])
    cells[1::2] = np.column_stack([a, c, d])

    local = np.array([[1, 2], [2, 0], [0, 1]])
    pairs = np.sort(cells[:, local].reshape(-1, 2), axis=1)
    facets, inverse = np.unique(pairs, axis=0, return_inverse=True)
    cell_facets = inverse.reshape(len(cells), 3)

    order = np.argsort(cell_facets.ravel(), kind='stable')
    owners = order // 3
    counts = np.bincount(cell_facets.ravel(), minlength=len(facets))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
    facet_cells[:, 0] = owners[starts]
    shared = counts == 2
    facet_cells[shared, 1] = owners[starts[shared] + 1]

    side_tags = side_tags or {}
    facet_tags = np.full(len(facets), int(FacetTag.INTERIOR), dtype=np.int64)
    mid = vertices[facets].mean(axis=1)
    boundary = ~shared
    sides = {
        'left': np.isclose(mid[:, 0], x0, atol=GEOMETRY_TOL),
        'right': np.isclose(mid[:, 0], x1, atol=GEOMETRY_TOL),
        'bottom': np.isclose(mid[:, 1], y0, atol=GEOMETRY_TOL),
        'top': np.isclose(mid[:, 1], y1, atol=GEOMETRY_TOL),
    }
    facet_tags[boundary] = int(FacetTag.OUTER)
    for side, on_side in sides.items():
        facet_tags[boundary & on_side] = int(side_tags.get(side, FacetTag.OUTER))

    logger.debug('rect mesh [%g,%g]x[%g,%g] %dx%d: %d cells', x0, x1, y0, y1, nx, ny, len(cells))
    return Mesh(
        vertices=vertices,
        cells=cells,
        facets=facets,
        facet_cells=facet_cells,
        cell_facets=cell_facets,
        facet_tags=facet_tags,
        cell_tags=np.full(len(cells), int(subdomain), dtype=np.int64),
        bounds=(x0, x1, y0, y1),
    )


def cells_per_unit(h):
    """Number of squares per unit length for a dyadic mesh size h = 2^-m, m >= 1."""
    if h <= 0:
        raise InvalidArgumentError(f'mesh size must be positive, got {h}')
    m = -math.log2(h)
    if m < 1 or abs(m - round(m)) > 1e-9:
        raise InvalidArgumentError(f'mesh size must be 2^-m with m >= 1, got {h}')
    return 2 ** int(round(m))


def table_cell_leg(label):
    """Cell leg of the mesh a published table row labelled ``label`` refers to: label / 2."""
    return 1.0 / (2 * cells_per_unit(label))


def _fluid_tags(geometry):
    if geometry in (CoupledGeometry.ALL_DIRICHLET, CoupledGeometry.POISSON_DD):
        return {'left': FacetTag.DIR_F, 'bottom': FacetTag.DIR_F, 'top': FacetTag.DIR_F,
                'right': FacetTag.INTERFACE}
    return {'left': FacetTag.DIR_F, 'bottom': FacetTag.NEU_F, 'top': FacetTag.NEU_F,
            'right': FacetTag.INTERFACE}


def _porous_tags(geometry):
    if geometry in (CoupledGeometry.ALL_DIRICHLET, CoupledGeometry.POISSON_DD,
                    CoupledGeometry.POISSON_ND):
        return {'right': FacetTag.DIR_P, 'bottom': FacetTag.DIR_P, 'top': FacetTag.DIR_P,
                'left': FacetTag.INTERFACE}
    return {'right': FacetTag.DIR_P, 'bottom': FacetTag.NEU_P, 'top': FacetTag.NEU_P,
            'left': FacetTag.INTERFACE}


def interface_from(mesh, normal):
    """Interface mesh made of the INTERFACE facets of ``mesh``."""
    ids = mesh.interface_facets()
    if len(ids) == 0:
        raise MisalignedMeshError('mesh has no interface facets')
    points = np.unique(mesh.vertices[mesh.facets[ids]].reshape(-1, 2), axis=0)
    points = points[np.argsort(points[:, 1], kind='stable')]
    return InterfaceMesh(vertices=points, normal=np.asarray(normal, dtype=float))


def build_coupled_mesh(h, geometry=CoupledGeometry.DARCY_STOKES):
    """
    Fluid and porous halves of the unit square sharing the interface x = ½,
    with square legs h and boundary tags set by ``geometry``.
    """
    n = cells_per_unit(h)
    fluid = build_rect_mesh(0.0, 0.5, 0.0, 1.0, n // 2, n, _fluid_tags(geometry), Subdomain.FLUID)
    porous = build_rect_mesh(0.5, 1.0, 0.0, 1.0, n // 2, n, _porous_tags(geometry), Subdomain.POROUS)
    interface = interface_from(fluid, normal=(1.0, 0.0))
    align_interface(porous, interface)
    logger.debug('coupled mesh h=%g (%s): %d + %d cells, %d interface segments',
                 h, geometry.value, fluid.num_cells, porous.num_cells, interface.num_segments)
    return CoupledMesh(fluid=fluid, porous=porous, interface=interface, geometry=geometry)


def build_subdomain_mesh(h, layout=Layout.UNIT_SQUARE, subdomain=Subdomain.FLUID):
    """
    Mesh of a standalone subproblem together with its interface.

    UNIT_SQUARE: [0,1]² with the interface on x = 0, Dirichlet on x = 1 and
    Neumann on y = 0, 1. HALF_DOMAIN: one half of the coupled geometry.
    """
    n = cells_per_unit(h)
    dirichlet, neumann = ((FacetTag.DIR_F, FacetTag.NEU_F) if subdomain == Subdomain.FLUID
                          else (FacetTag.DIR_P, FacetTag.NEU_P))
    if layout == Layout.UNIT_SQUARE:
        tags = {'left': FacetTag.INTERFACE, 'right': dirichlet, 'bottom': neumann, 'top': neumann}
        mesh = build_rect_mesh(0.0, 1.0, 0.0, 1.0, n, n, tags, subdomain)
        return mesh, interface_from(mesh, normal=(-1.0, 0.0))

    if subdomain == Subdomain.FLUID:
        tags = _fluid_tags(CoupledGeometry.DARCY_STOKES)
        mesh = build_rect_mesh(0.0, 0.5, 0.0, 1.0, n // 2, n, tags, subdomain)
        return mesh, interface_from(mesh, normal=(1.0, 0.0))
    tags = _porous_tags(CoupledGeometry.DARCY_STOKES)
    mesh = build_rect_mesh(0.5, 1.0, 0.0, 1.0, n // 2, n, tags, subdomain)
    return mesh, interface_from(mesh, normal=(-1.0, 0.0))


def align_interface(mesh, iface):
    """
    Interface facets of ``mesh`` matched to the segments of ``iface``.

    Returns facet indices in segment order.
    """
    ids = mesh.interface_facets()
    if len(ids) != iface.num_segments:
        raise MisalignedMeshError(
            f'{len(ids)} interface facets against {iface.num_segments} interface segments')
    ends = np.sort(mesh.vertices[mesh.facets[ids]][:, :, 1], axis=1)
    expected = np.column_stack([iface.vertices[:-1, 1], iface.vertices[1:, 1]])
    xs = mesh.vertices[mesh.facets[ids]][:, :, 0]
    if (not np.allclose(ends, expected, atol=GEOMETRY_TOL)
            or not np.allclose(xs, iface.vertices[0, 0], atol=GEOMETRY_TOL)):
        raise MisalignedMeshError('interface facet endpoints do not match the interface mesh')
    return ids


def write_mesh(path, mesh):
    """Plain-text dump: ``v x y`` per vertex, ``c i j k`` per cell."""
    path = Path(path)
    with path.open('w') as handle:
        for x, y in mesh.vertices:
            handle.write(f'v {x:.17g} {y:.17g}\n')
        for i, j, k in mesh.cells:
            handle.write(f'c {i} {j} {k}\n')
    return path
