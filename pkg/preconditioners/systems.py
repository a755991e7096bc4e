"""
Coupled and standalone saddle-point systems with their block-diagonal
preconditioners.

Weak forms are assembled with the pressure sign flipped so that every
operator is symmetric; B denotes the matrix of (div u, q).
"""

import enum
import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidArgumentError
from .fem import (
    Family,
    ValueRank,
    apply_dirichlet,
    assemble_boundary_source,
    assemble_div,
    assemble_epsilon_form,
    assemble_hdiv_operator,
    assemble_mass,
    assemble_source,
    assemble_stiffness,
    constrain_square,
    function_space,
    interpolate,
)
from .interface import (
    Flavor,
    FractionalOperator,
    FractionalSpec,
    InterfaceSpace,
    assemble_multiplier_source,
    assemble_normal_trace,
    assemble_tangential_trace_mass,
    assemble_trace,
    build_multiplier_operator,
)
from .mesh import (
    NEUMANN_TAGS,
    CoupledGeometry,
    FacetTag,
    Layout,
    Subdomain,
    build_coupled_mesh,
    build_subdomain_mesh,
)
from .norms import FieldNorm, NormKind

logger = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    """Preconditioner variants."""
    NAIVE = 'naive'
    ROBUST = 'robust'
    FREE = 'free'
    ZERO00 = '00'
    N0 = 'n0'
    T0 = 't0'
    DD = 'dd'
    ND = 'nd'
    NN = 'nn'


class BoundaryMode(str, enum.Enum):
    MIXED = 'mixed'
    ALL_DIRICHLET = 'all-dirichlet'


@dataclass(frozen=True)
class ParameterSet:
    mu: float = 1.0
    K: float = 1.0
    alpha_bjs: float = 1.0
    eta: float = math.inf
    k: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0

    def __post_init__(self):
        for name in ('mu', 'K', 'alpha_bjs', 'eta', 'k', 'kappa1', 'kappa2'):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidArgumentError(f'parameter {name} must be positive, got {value}')

    @property
    def D(self):
        """Beavers-Joseph-Saffman slip coefficient."""
        return self.alpha_bjs * math.sqrt(self.mu / self.K)


@dataclass(frozen=True)
class Field:
    name: str
    space: object
    size: int


class BlockOperator:
    """A square sparse matrix whose rows and columns are split into named fields."""

    def __init__(self, fields, matrix):
        self.fields = tuple(fields)
        self.matrix = sp.csr_matrix(matrix)
        self.offsets = {}
        offset = 0
        for f in self.fields:
            self.offsets[f.name] = offset
            offset += f.size
        if self.matrix.shape != (offset, offset):
            raise InvalidArgumentError(
                f'matrix shape {self.matrix.shape} does not match field sizes ({offset})')

    @classmethod
    def from_blocks(cls, fields, blocks):
        names = [f.name for f in fields]
        grid = [[None] * len(fields) for _ in fields]
        for (row, col), block in blocks.items():
            if block is not None:
                grid[names.index(row)][names.index(col)] = sp.csr_matrix(block)
        for i, f in enumerate(fields):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((f.size, f.size))
        return cls(fields, sp.bmat(grid, format='csr'))

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def ndof(self):
        return self.matrix.shape[0]

    @property
    def field_names(self):
        return [f.name for f in self.fields]

    def field(self, name):
        return next(f for f in self.fields if f.name == name)

    def slice(self, name):
        start = self.offsets[name]
        return slice(start, start + self.field(name).size)

    def block(self, row, col):
        return self.matrix[self.slice(row), self.slice(col)]

    def asymmetry(self):
        """max |A - A'| relative to max |A|."""
        scale = max(abs(self.matrix).max(), 1e-300)
        return abs(self.matrix - self.matrix.T).max() / scale

    def __matmul__(self, x):
        return self.matrix @ x


@dataclass(frozen=True)
class ProblemData:
    """
    Right-hand side and boundary data keyed by field name.

    sources: f(x) integrated against the field's test functions;
    neumann: g(x, n) on the Neumann facets of the field's mesh;
    interface: g(x, n) on the interface facets, n pointing out of the field's domain;
    multiplier: g(x, n) on the interface for multiplier fields, n the interface normal;
    dirichlet: exact values interpolated at the Dirichlet DOFs.
    """
    sources: dict = dc_field(default_factory=dict)
    neumann: dict = dc_field(default_factory=dict)
    interface: dict = dc_field(default_factory=dict)
    multiplier: dict = dc_field(default_factory=dict)
    dirichlet: dict = dc_field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SystemBundle:
    problem: str
    operator: BlockOperator
    preconditioner: BlockOperator
    blocks: dict
    rhs: np.ndarray
    params: ParameterSet
    h: float
    variant: Variant
    norms: dict
    deflation: np.ndarray = None

    @property
    def ndof(self):
        return self.operator.ndof

    def field_sizes(self):
        return {f.name: f.size for f in self.operator.fields}


def _smooth_scalar(x):
    return np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])


def _smooth_vector(x):
    return np.stack([np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]),
                     np.cos(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])], axis=-1)


def _multiplier_scalar(x, n):
    return np.cos(np.pi * x[..., 1])


def _multiplier_vector(x, n):
    return np.stack([np.cos(np.pi * x[..., 1]), np.sin(np.pi * x[..., 1])], axis=-1)


def default_data(fields):
    """Fixed trigonometric loads on the primal fields and the multipliers, homogeneous boundary data."""
    data = ProblemData()
    for f in fields:
        if isinstance(f.space, InterfaceSpace):
            data.multiplier[f.name] = (_multiplier_vector if f.space.value_rank == ValueRank.VECTOR
                                       else _multiplier_scalar)
        elif f.name.startswith('u'):
            data.sources[f.name] = _smooth_vector if f.space.vector_valued else _smooth_scalar
    return data


def _load_vector(fields, data):
    parts = []
    for f in fields:
        b = np.zeros(f.size)
        space = f.space
        if isinstance(space, InterfaceSpace):
            if f.name in data.multiplier:
                b += assemble_multiplier_source(space, data.multiplier[f.name])
        elif space is not None:
            if f.name in data.sources:
                b += assemble_source(space, data.sources[f.name])
            if f.name in data.neumann:
                b += assemble_boundary_source(space, NEUMANN_TAGS, data.neumann[f.name])
            if f.name in data.interface:
                b += assemble_boundary_source(space, [FacetTag.INTERFACE], data.interface[f.name])
        parts.append(b)
    return np.concatenate(parts)


def _dirichlet(fields, data):
    dofs, values = [], []
    offset = 0
    for f in fields:
        space = f.space
        if space is not None and not isinstance(space, InterfaceSpace):
            fixed = space.dofmap.dirichlet_dofs
            if len(fixed):
                dofs.append(offset + fixed)
                if f.name in data.dirichlet:
                    values.append(interpolate(space, data.dirichlet[f.name])[fixed])
                else:
                    values.append(np.zeros(len(fixed)))
        offset += f.size
    if not dofs:
        return np.empty(0, int), np.empty(0)
    return np.concatenate(dofs), np.concatenate(values)


def _bundle(problem, fields, blocks, preconditioner_blocks, params, h, variant, norms,
            data=None, deflation=None):
    """Assemble the monolithic operator, impose Dirichlet data and wrap everything up."""
    data = default_data(fields) if data is None else data
    operator = BlockOperator.from_blocks(fields, blocks)
    rhs = _load_vector(fields, data)
    dofs, values = _dirichlet(fields, data)
    matrix, rhs = apply_dirichlet(operator.matrix, rhs, dofs, values)
    operator = BlockOperator(fields, matrix)

    diagonal = {}
    for f in fields:
        block = preconditioner_blocks[f.name]
        diagonal[(f.name, f.name)] = block.matrix if isinstance(block, FractionalOperator) else block
    preconditioner = BlockOperator.from_blocks(fields, diagonal)
    logger.debug('%s h=%g variant=%s: %d dofs (%s)', problem, h, variant.value, operator.ndof,
                 ', '.join(f'{f.name}={f.size}' for f in fields))
    return SystemBundle(
        problem=problem,
        operator=operator,
        preconditioner=preconditioner,
        blocks=preconditioner_blocks,
        rhs=rhs,
        params=params,
        h=h,
        variant=variant,
        norms=norms,
        deflation=deflation,
    )


def _space_field(name, space):
    return Field(name, space, space.dim)


def _interface_dirichlet(tags, strong):
    return set(tags) | {FacetTag.INTERFACE} if strong else set(tags)


def build_poisson_interface(params, h, variant=Variant.ND, precond_variant=None, data=None):
    """
    Two Poisson problems coupled by a trace multiplier; P2-P2-P0 elements.

    ``variant`` picks the geometry (which subdomain touches Γ through
    Neumann sides); ``precond_variant`` picks the multiplier block.
    """
    variant = Variant(variant)
    precond_variant = Variant(precond_variant or variant)
    geometries = {Variant.DD: CoupledGeometry.POISSON_DD, Variant.ND: CoupledGeometry.POISSON_ND,
                  Variant.NN: CoupledGeometry.POISSON_NN}
    if variant not in geometries or precond_variant not in geometries:
        raise InvalidArgumentError(f'unknown Poisson variant {variant.value}/{precond_variant.value}')
    cm = build_coupled_mesh(h, geometries[variant])
    V1 = function_space(cm.fluid, Family.P2, dirichlet={FacetTag.DIR_F})
    V2 = function_space(cm.porous, Family.P2, dirichlet={FacetTag.DIR_P})
    Q = InterfaceSpace(Family.P0, cm.interface)
    fields = [_space_field('u1', V1), _space_field('u2', V2), Field('lam', Q, Q.dim)]
    k1, k2 = params.kappa1, params.kappa2

    T1 = assemble_trace(V1, Q, constrained=False)
    T2 = assemble_trace(V2, Q, constrained=False)
    blocks = {
        ('u1', 'u1'): assemble_stiffness(V1, k1, constrained=False),
        ('u2', 'u2'): assemble_stiffness(V2, k2, constrained=False),
        ('lam', 'u1'): T1, ('u1', 'lam'): T1.T,
        ('lam', 'u2'): -T2, ('u2', 'lam'): -T2.T,
    }

    first = Flavor.ZERO_TRACE_00 if precond_variant == Variant.DD else Flavor.FREE
    second = Flavor.FREE if precond_variant == Variant.NN else Flavor.ZERO_TRACE_00
    specs = [FractionalSpec(-0.5, first, 1.0 / k1), FractionalSpec(-0.5, second, 1.0 / k2)]
    N = {
        'u1': assemble_stiffness(V1, k1),
        'u2': assemble_stiffness(V2, k2),
        'lam': build_multiplier_operator(Q, specs),
    }
    norms = {
        'u1': FieldNorm(NormKind.H1, k1),
        'u2': FieldNorm(NormKind.H1, k2),
        'lam': FieldNorm(NormKind.FRACTIONAL, specs=tuple(specs)),
    }
    return _bundle(f'poisson-{variant.value}', fields, blocks, N, params, h, precond_variant,
                   norms, data)


def build_darcy_stokes(params, h, precond=Variant.ROBUST, bc_mode=BoundaryMode.MIXED, data=None):
    """
    Stokes (P2-P1) in Ω_f coupled to Darcy (RT0-P0) in Ω_p through a P0
    multiplier for mass conservation, with the BJS slip term on Γ.
    ALL_DIRICHLET adds a scalar field fixing the mean of p_f.
    """
    precond = Variant(precond)
    bc_mode = BoundaryMode(bc_mode)
    if precond not in (Variant.ROBUST, Variant.NAIVE):
        raise InvalidArgumentError(f'Darcy-Stokes preconditioner must be robust or naive, got {precond.value}')
    geometry = (CoupledGeometry.ALL_DIRICHLET if bc_mode == BoundaryMode.ALL_DIRICHLET
                else CoupledGeometry.DARCY_STOKES)
    cm = build_coupled_mesh(h, geometry)
    mu, K, D = params.mu, params.K, params.D

    Vf = function_space(cm.fluid, Family.P2, vector=True, dirichlet={FacetTag.DIR_F})
    Qf = function_space(cm.fluid, Family.P1)
    Vp = function_space(cm.porous, Family.RT0, dirichlet={FacetTag.DIR_P})
    Qp = function_space(cm.porous, Family.P0)
    L = InterfaceSpace(Family.P0, cm.interface)
    fields = [_space_field('u_f', Vf), _space_field('u_p', Vp), _space_field('p_f', Qf),
              _space_field('p_p', Qp), Field('lam', L, L.dim)]

    Tt = assemble_tangential_trace_mass(Vf, cm.interface, D)
    Bf = assemble_div(Vf, Qf, constrained=False)
    Bp = assemble_div(Vp, Qp, constrained=False)
    Tf = assemble_normal_trace(Vf, L, 1.0, constrained=False)
    Tp = assemble_normal_trace(Vp, L, -1.0, constrained=False)
    blocks = {
        ('u_f', 'u_f'): assemble_stiffness(Vf, mu, constrained=False) + Tt,
        ('u_p', 'u_p'): assemble_mass(Vp, 1.0 / K, constrained=False),
        ('p_f', 'u_f'): Bf, ('u_f', 'p_f'): Bf.T,
        ('p_p', 'u_p'): Bp, ('u_p', 'p_p'): Bp.T,
        ('lam', 'u_f'): Tf, ('u_f', 'lam'): Tf.T,
        ('lam', 'u_p'): Tp, ('u_p', 'lam'): Tp.T,
    }

    if precond == Variant.ROBUST:
        pressure_weight = 1.0 / mu
        N = {
            'u_f': constrain_square(assemble_stiffness(Vf, mu, constrained=False) + Tt,
                                    Vf.dofmap.dirichlet_dofs),
            'u_p': assemble_hdiv_operator(Vp, 1.0 / K),
            'p_f': assemble_mass(Qf, pressure_weight),
            'p_p': assemble_mass(Qp, K),
        }
        if bc_mode == BoundaryMode.MIXED:
            specs = [FractionalSpec(0.5, Flavor.ZERO_TRACE_00, K), FractionalSpec(-0.5, Flavor.FREE, 1.0 / mu)]
        else:
            specs = [FractionalSpec(-0.5, Flavor.ZERO_TRACE_00, 1.0 / mu), FractionalSpec(0.5, Flavor.FREE, K)]
        norms = {
            'u_f': FieldNorm(NormKind.H1, mu, D, cm.interface),
            'u_p': FieldNorm(NormKind.HDIV, 1.0 / K),
            'p_f': FieldNorm(NormKind.L2, 1.0 / mu),
            'p_p': FieldNorm(NormKind.L2, K),
            'lam': FieldNorm(NormKind.FRACTIONAL, specs=tuple(specs)),
        }
    else:
        pressure_weight = 1.0
        N = {
            'u_f': constrain_square(assemble_stiffness(Vf, 1.0, constrained=False)
                                    + assemble_tangential_trace_mass(Vf, cm.interface, D),
                                    Vf.dofmap.dirichlet_dofs),
            'u_p': assemble_hdiv_operator(Vp, 1.0 / K),
            'p_f': assemble_mass(Qf, 1.0),
            'p_p': assemble_mass(Qp, K),
        }
        specs = [FractionalSpec(0.5, Flavor.FREE, 1.0)]
        norms = {}
    N['lam'] = build_multiplier_operator(L, specs)

    if bc_mode == BoundaryMode.ALL_DIRICHLET:
        mean = mu * assemble_source(Qf, lambda x: np.ones(x.shape[:-1]))
        fields.append(Field('r', None, 1))
        blocks[('r', 'p_f')] = sp.csr_matrix(mean[None, :])
        blocks[('p_f', 'r')] = sp.csr_matrix(mean[:, None])
        # Schur complement of the mean row against the p_f block
        N['r'] = sp.csr_matrix([[mu ** 2 * cm.fluid.area / pressure_weight]])

    problem = 'darcy-stokes' if bc_mode == BoundaryMode.MIXED else 'darcy-stokes-dirichlet'
    return _bundle(problem, fields, blocks, N, params, h, precond, norms, data)


def build_stokes_subproblem(params, h, precond=Variant.FREE, layout=Layout.UNIT_SQUARE,
                            data=None, strong_interface=False):
    """Stokes with a scalar normal-flux multiplier on Γ and unit tangential slip coefficient."""
    precond = Variant(precond)
    flavor = _scalar_flavor(precond)
    mesh, iface = build_subdomain_mesh(h, Layout(layout), Subdomain.FLUID)
    mu = params.mu
    V = function_space(mesh, Family.P2, vector=True,
                       dirichlet=_interface_dirichlet({FacetTag.DIR_F}, strong_interface))
    Q = function_space(mesh, Family.P1)
    B = assemble_div(V, Q, constrained=False)
    fields = [_space_field('u', V), _space_field('p', Q)]
    if strong_interface:
        velocity = assemble_stiffness(V, mu, constrained=False)
        N = {'u': assemble_stiffness(V, mu), 'p': assemble_mass(Q, 1.0 / mu)}
        norms = {'u': FieldNorm(NormKind.H1, mu), 'p': FieldNorm(NormKind.L2, 1.0 / mu)}
        blocks = {('u', 'u'): velocity, ('p', 'u'): B, ('u', 'p'): B.T}
        return _bundle('stokes-sub', fields, blocks, N, params, h, precond, norms, data)

    L = InterfaceSpace(Family.P0, iface)
    fields.append(Field('lam', L, L.dim))
    velocity = assemble_stiffness(V, mu, constrained=False) + assemble_tangential_trace_mass(V, iface, 1.0)
    T = assemble_normal_trace(V, L, 1.0, constrained=False)
    blocks = {('u', 'u'): velocity, ('p', 'u'): B, ('u', 'p'): B.T, ('lam', 'u'): T, ('u', 'lam'): T.T}
    specs = [FractionalSpec(-0.5, flavor, 1.0 / mu)]
    N = {
        'u': constrain_square(velocity, V.dofmap.dirichlet_dofs),
        'p': assemble_mass(Q, 1.0 / mu),
        'lam': build_multiplier_operator(L, specs),
    }
    norms = {
        'u': FieldNorm(NormKind.H1, mu, 1.0, iface),
        'p': FieldNorm(NormKind.L2, 1.0 / mu),
        'lam': FieldNorm(NormKind.FRACTIONAL, specs=tuple(specs)),
    }
    return _bundle('stokes-sub', fields, blocks, N, params, h, precond, norms, data)


def build_darcy_subproblem(params, h, precond=Variant.ZERO00, layout=Layout.UNIT_SQUARE,
                           data=None, strong_interface=False):
    """Mixed Darcy (RT0-P0) with a scalar normal-flux multiplier on Γ."""
    precond = Variant(precond)
    flavor = _scalar_flavor(precond)
    mesh, iface = build_subdomain_mesh(h, Layout(layout), Subdomain.POROUS)
    K = params.K
    V = function_space(mesh, Family.RT0,
                       dirichlet=_interface_dirichlet({FacetTag.DIR_P}, strong_interface))
    Q = function_space(mesh, Family.P0)
    B = assemble_div(V, Q, constrained=False)
    fields = [_space_field('u', V), _space_field('p', Q)]
    blocks = {('u', 'u'): assemble_mass(V, 1.0 / K, constrained=False), ('p', 'u'): B, ('u', 'p'): B.T}
    N = {'u': assemble_hdiv_operator(V, 1.0 / K), 'p': assemble_mass(Q, K)}
    norms = {'u': FieldNorm(NormKind.HDIV, 1.0 / K), 'p': FieldNorm(NormKind.L2, K)}
    if not strong_interface:
        L = InterfaceSpace(Family.P0, iface)
        fields.append(Field('lam', L, L.dim))
        T = assemble_normal_trace(V, L, 1.0, constrained=False)
        blocks[('lam', 'u')] = T
        blocks[('u', 'lam')] = T.T
        specs = [FractionalSpec(0.5, flavor, K)]
        N['lam'] = build_multiplier_operator(L, specs)
        norms['lam'] = FieldNorm(NormKind.FRACTIONAL, specs=tuple(specs))
    return _bundle('darcy-sub', fields, blocks, N, params, h, precond, norms, data)


def _scalar_flavor(precond):
    if precond == Variant.FREE:
        return Flavor.FREE
    if precond == Variant.ZERO00:
        return Flavor.ZERO_TRACE_00
    raise InvalidArgumentError(f'subproblem preconditioner must be free or 00, got {precond.value}')


def _component_flavors(precond):
    """(normal, tangential) flavors; on a vertical interface these are the x and y components."""
    flavors = {
        Variant.FREE: (Flavor.FREE, Flavor.FREE),
        Variant.ZERO00: (Flavor.ZERO_TRACE_00, Flavor.ZERO_TRACE_00),
        Variant.N0: (Flavor.ZERO_TRACE_00, Flavor.FREE),
        Variant.T0: (Flavor.FREE, Flavor.ZERO_TRACE_00),
    }
    if precond not in flavors:
        raise InvalidArgumentError(f'Navier preconditioner must be free, 00, n0 or t0, got {precond.value}')
    return flavors[precond]


def build_navier_subproblem(params, h, precond=Variant.FREE, layout=Layout.UNIT_SQUARE,
                            data=None, strong_interface=False):
    """Stokes in symmetric-gradient form with a vector multiplier enforcing the full trace on Γ."""
    precond = Variant(precond)
    normal, tangential = _component_flavors(precond)
    mesh, iface = build_subdomain_mesh(h, Layout(layout), Subdomain.FLUID)
    mu = params.mu
    V = function_space(mesh, Family.P2, vector=True,
                       dirichlet=_interface_dirichlet({FacetTag.DIR_F}, strong_interface))
    Q = function_space(mesh, Family.P1)
    B = assemble_div(V, Q, constrained=False)
    fields = [_space_field('u', V), _space_field('p', Q)]
    blocks = {('u', 'u'): assemble_epsilon_form(V, mu, constrained=False), ('p', 'u'): B, ('u', 'p'): B.T}
    N = {'u': assemble_epsilon_form(V, mu), 'p': assemble_mass(Q, 1.0 / mu)}
    norms = {'u': FieldNorm(NormKind.EPSILON, mu), 'p': FieldNorm(NormKind.L2, 1.0 / mu)}
    if not strong_interface:
        L = InterfaceSpace(Family.P0, iface, ValueRank.VECTOR)
        fields.append(Field('lam', L, L.dim))
        T = assemble_trace(V, L, constrained=False)
        blocks[('lam', 'u')] = T
        blocks[('u', 'lam')] = T.T
        specs = ([FractionalSpec(-0.5, normal, 1.0 / mu)], [FractionalSpec(-0.5, tangential, 1.0 / mu)])
        N['lam'] = build_multiplier_operator(L, specs)
        norms['lam'] = FieldNorm(NormKind.FRACTIONAL, specs=specs)
    return _bundle('navier-sub', fields, blocks, N, params, h, precond, norms, data)


def build_stokes_navier(params, h, bc_mode=BoundaryMode.MIXED, data=None, precond=Variant.ROBUST):
    """
    Stokes in Ω_f coupled to a (penalized) Navier/elasticity-type problem
    in Ω_p through a vector multiplier enforcing k u_f = u_p on Γ. The
    penalty block is dropped for eta = inf. ALL_DIRICHLET attaches the
    deflation vector spanning the kernel of the eta = inf operator.
    """
    bc_mode = BoundaryMode(bc_mode)
    precond = Variant(precond)
    if precond != Variant.ROBUST:
        raise InvalidArgumentError('Stokes-Navier supports the robust preconditioner only')
    geometry = (CoupledGeometry.ALL_DIRICHLET if bc_mode == BoundaryMode.ALL_DIRICHLET
                else CoupledGeometry.DARCY_STOKES)
    cm = build_coupled_mesh(h, geometry)
    mu, k, eta = params.mu, params.k, params.eta

    Vf = function_space(cm.fluid, Family.P2, vector=True, dirichlet={FacetTag.DIR_F})
    Vp = function_space(cm.porous, Family.P2, vector=True, dirichlet={FacetTag.DIR_P})
    Qf = function_space(cm.fluid, Family.P1)
    Qp = function_space(cm.porous, Family.P1)
    L = InterfaceSpace(Family.P0, cm.interface, ValueRank.VECTOR)
    fields = [_space_field('u_f', Vf), _space_field('u_p', Vp), _space_field('p_f', Qf),
              _space_field('p_p', Qp), Field('lam', L, L.dim)]

    Bf = assemble_div(Vf, Qf, constrained=False)
    Bp = assemble_div(Vp, Qp, constrained=False)
    Tf = k * assemble_trace(Vf, L, constrained=False)
    Tp = -assemble_trace(Vp, L, constrained=False)
    blocks = {
        ('u_f', 'u_f'): assemble_epsilon_form(Vf, mu, constrained=False),
        ('u_p', 'u_p'): assemble_epsilon_form(Vp, 1.0, constrained=False),
        ('p_f', 'u_f'): Bf, ('u_f', 'p_f'): Bf.T,
        ('p_p', 'u_p'): Bp, ('u_p', 'p_p'): Bp.T,
        ('lam', 'u_f'): Tf, ('u_f', 'lam'): Tf.T,
        ('lam', 'u_p'): Tp, ('u_p', 'lam'): Tp.T,
    }
    if math.isfinite(eta):
        blocks[('p_p', 'p_p')] = -assemble_mass(Qp, 1.0 / eta)

    flavor = Flavor.ZERO_TRACE_00 if bc_mode == BoundaryMode.ALL_DIRICHLET else Flavor.FREE
    weight = k ** 2 / mu + 1.0
    specs = ([FractionalSpec(-0.5, flavor, weight)], [FractionalSpec(-0.5, flavor, weight)])
    N = {
        'u_f': assemble_epsilon_form(Vf, mu),
        'u_p': assemble_epsilon_form(Vp, 1.0),
        'p_f': assemble_mass(Qf, 1.0 / mu),
        'p_p': assemble_mass(Qp, 1.0),
        'lam': build_multiplier_operator(L, specs),
    }
    norms = {
        'u_f': FieldNorm(NormKind.EPSILON, mu),
        'u_p': FieldNorm(NormKind.EPSILON, 1.0),
        'p_f': FieldNorm(NormKind.L2, 1.0 / mu),
        'p_p': FieldNorm(NormKind.L2, 1.0),
        'lam': FieldNorm(NormKind.FRACTIONAL, specs=specs),
    }

    deflation = None
    if bc_mode == BoundaryMode.ALL_DIRICHLET:
        normal = cm.interface.normal
        deflation = np.concatenate([
            np.zeros(Vf.dim),
            np.zeros(Vp.dim),
            k * np.ones(Qf.dim),
            np.ones(Qp.dim),
            np.tile(-normal, L.scalar_dim),
        ])
    problem = 'stokes-navier' if bc_mode == BoundaryMode.MIXED else 'stokes-navier-dirichlet'
    return _bundle(problem, fields, blocks, N, params, h, precond, norms, data, deflation)


PROBLEMS = (
    'poisson-nd', 'poisson-dd', 'poisson-nn',
    'darcy-stokes', 'darcy-stokes-dirichlet',
    'stokes-sub', 'darcy-sub', 'navier-sub',
    'stokes-navier', 'stokes-navier-dirichlet',
)

DEFAULT_VARIANTS = {
    'poisson-nd': Variant.ND,
    'poisson-dd': Variant.DD,
    'poisson-nn': Variant.NN,
    'darcy-stokes': Variant.ROBUST,
    'darcy-stokes-dirichlet': Variant.ROBUST,
    'stokes-sub': Variant.FREE,
    'darcy-sub': Variant.ZERO00,
    'navier-sub': Variant.FREE,
    'stokes-navier': Variant.ROBUST,
    'stokes-navier-dirichlet': Variant.ROBUST,
}


LEGAL_VARIANTS = {
    'poisson-nd': (Variant.ND, Variant.DD, Variant.NN),
    'poisson-dd': (Variant.ND, Variant.DD, Variant.NN),
    'poisson-nn': (Variant.ND, Variant.DD, Variant.NN),
    'darcy-stokes': (Variant.ROBUST, Variant.NAIVE),
    'darcy-stokes-dirichlet': (Variant.ROBUST, Variant.NAIVE),
    'stokes-sub': (Variant.FREE, Variant.ZERO00),
    'darcy-sub': (Variant.FREE, Variant.ZERO00),
    'navier-sub': (Variant.FREE, Variant.ZERO00, Variant.N0, Variant.T0),
    'stokes-navier': (Variant.ROBUST,),
    'stokes-navier-dirichlet': (Variant.ROBUST,),
}


def build_system(problem, params, h, precond=None, data=None, layout=Layout.UNIT_SQUARE,
                 strong_interface=False):
    """Dispatch a problem id to its builder."""
    if problem not in PROBLEMS:
        raise InvalidArgumentError(f'unknown problem {problem!r}')
    precond = Variant(precond) if precond else DEFAULT_VARIANTS[problem]
    if problem.startswith('poisson-'):
        return build_poisson_interface(params, h, Variant(problem.split('-')[1]), precond, data)
    if problem.startswith('darcy-stokes'):
        mode = BoundaryMode.ALL_DIRICHLET if problem.endswith('dirichlet') else BoundaryMode.MIXED
        return build_darcy_stokes(params, h, precond, mode, data)
    if problem.startswith('stokes-navier'):
        mode = BoundaryMode.ALL_DIRICHLET if problem.endswith('dirichlet') else BoundaryMode.MIXED
        return build_stokes_navier(params, h, mode, data, precond)
    builder = {
        'stokes-sub': build_stokes_subproblem,
        'darcy-sub': build_darcy_subproblem,
        'navier-sub': build_navier_subproblem,
    }[problem]
    return builder(params, h, precond, layout, data, strong_interface)


def problem_fields(problem, h, layout=Layout.UNIT_SQUARE):
    """Fields of ``problem`` at cell leg h, built from the spaces alone (nothing is assembled)."""
    if problem not in PROBLEMS:
        raise InvalidArgumentError(f'unknown problem {problem!r}')
    if problem.startswith('poisson-'):
        geometry = {'nd': CoupledGeometry.POISSON_ND, 'dd': CoupledGeometry.POISSON_DD,
                    'nn': CoupledGeometry.POISSON_NN}[problem.split('-')[1]]
        cm = build_coupled_mesh(h, geometry)
        L = InterfaceSpace(Family.P0, cm.interface)
        return [_space_field('u1', function_space(cm.fluid, Family.P2, dirichlet={FacetTag.DIR_F})),
                _space_field('u2', function_space(cm.porous, Family.P2, dirichlet={FacetTag.DIR_P})),
                Field('lam', L, L.dim)]

    if problem.startswith(('darcy-stokes', 'stokes-navier')):
        dirichlet = problem.endswith('dirichlet')
        cm = build_coupled_mesh(h, CoupledGeometry.ALL_DIRICHLET if dirichlet else CoupledGeometry.DARCY_STOKES)
        darcy = problem.startswith('darcy-stokes')
        L = InterfaceSpace(Family.P0, cm.interface, ValueRank.SCALAR if darcy else ValueRank.VECTOR)
        porous_velocity = (function_space(cm.porous, Family.RT0, dirichlet={FacetTag.DIR_P}) if darcy
                           else function_space(cm.porous, Family.P2, vector=True, dirichlet={FacetTag.DIR_P}))
        fields = [
            _space_field('u_f', function_space(cm.fluid, Family.P2, vector=True, dirichlet={FacetTag.DIR_F})),
            _space_field('u_p', porous_velocity),
            _space_field('p_f', function_space(cm.fluid, Family.P1)),
            _space_field('p_p', function_space(cm.porous, Family.P0 if darcy else Family.P1)),
            Field('lam', L, L.dim),
        ]
        if darcy and dirichlet:
            fields.append(Field('r', None, 1))
        return fields

    subdomain = Subdomain.POROUS if problem == 'darcy-sub' else Subdomain.FLUID
    mesh, iface = build_subdomain_mesh(h, Layout(layout), subdomain)
    if problem == 'darcy-sub':
        V = function_space(mesh, Family.RT0, dirichlet={FacetTag.DIR_P})
        Q = function_space(mesh, Family.P0)
        L = InterfaceSpace(Family.P0, iface)
    else:
        V = function_space(mesh, Family.P2, vector=True, dirichlet={FacetTag.DIR_F})
        Q = function_space(mesh, Family.P1)
        L = InterfaceSpace(Family.P0, iface, ValueRank.VECTOR if problem == 'navier-sub' else ValueRank.SCALAR)
    return [_space_field('u', V), _space_field('p', Q), Field('lam', L, L.dim)]
