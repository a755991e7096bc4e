"""
Errors measured in the norms induced by the preconditioner blocks.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .fem import Family, evaluate, quadrature_points, symmetric_gradient, triangle_rule
from .interface import (
    InterfaceQuadrature,
    InterfaceSpace,
    fractional_error_norm,
)

logger = logging.getLogger(__name__)


class NormKind(str, enum.Enum):
    H1 = 'h1'
    EPSILON = 'epsilon'
    HDIV = 'hdiv'
    L2 = 'l2'
    FRACTIONAL = 'fractional'


@dataclass(frozen=True, eq=False)
class FieldNorm:
    """
    Norm of one field. ``tangential_weight`` adds a weighted L2 norm of the
    tangential trace on ``interface``; ``specs`` are the fractional specs
    (one list per component for vector multipliers).
    """
    kind: NormKind
    weight: float = 1.0
    tangential_weight: float = 0.0
    interface: object = None
    specs: tuple = ()


def _volume_error(space, norm, coefficients, exact):
    degree = 2 * (space.degree + 2)
    bary, weights = triangle_rule(degree)
    mesh = space.mesh
    points = quadrature_points(mesh, bary)
    jw = mesh.cell_areas[:, None] * weights[None, :]
    values, gradients, divergence = evaluate(space, coefficients, bary)

    if norm.kind == NormKind.L2:
        e = values - exact.value(points)
        return norm.weight * np.sum(jw * _square(e, values.ndim - 2))
    if norm.kind == NormKind.HDIV:
        e = values - exact.value(points)
        d = divergence - exact.divergence(points)
        return norm.weight * (np.sum(jw * _square(e, 1)) + np.sum(jw * d ** 2))

    g = gradients - exact.gradient(points)
    if norm.kind == NormKind.EPSILON:
        eps = symmetric_gradient(g)
        total = 2.0 * norm.weight * np.sum(jw * _square(eps, 2))
    else:
        total = norm.weight * np.sum(jw * _square(g, g.ndim - 2))

    if norm.tangential_weight > 0 and norm.interface is not None:
        quad = InterfaceQuadrature(space, norm.interface, degree)
        local = np.asarray(coefficients)[quad.cell_dofs]
        trace = np.einsum('mqad,ma->mqd', quad.tab.values, local)
        et = (trace - exact.value(quad.points)) @ norm.interface.tangent
        total += norm.tangential_weight * np.sum(quad.weights * et ** 2)
    return total


def _square(e, trailing):
    """Pointwise squared magnitude summing the last ``trailing`` axes."""
    sq = np.asarray(e) ** 2
    for _ in range(trailing):
        sq = sq.sum(axis=-1)
    return sq


def interpolate_to_p1(space, coefficients, exact_value):
    """
    Nodal P1 interpolant of (discrete - exact) on the vertices of the
    interface mesh. P0 vertex values average the adjacent segments.
    """
    p1 = InterfaceSpace(Family.P1, space.mesh, space.value_rank)
    c = np.asarray(coefficients, dtype=float).reshape(-1, space.components)
    if space.family == Family.P0:
        c = np.vstack([c[:1], 0.5 * (c[:-1] + c[1:]), c[-1:]])
    exact = np.asarray(exact_value(space.mesh.vertices), dtype=float).reshape(c.shape)
    return p1, (c - exact).ravel()


def energy_error(bundle, exact, solution):
    """
    Per-field errors of ``solution`` against the exact fields, each in the
    norm of its preconditioner block. Fields without an exact counterpart
    or without a norm are skipped.
    """
    errors = {}
    for field in bundle.operator.fields:
        norm = bundle.norms.get(field.name)
        reference = exact.fields.get(field.name)
        if norm is None or reference is None:
            continue
        coefficients = solution[bundle.operator.slice(field.name)]
        if norm.kind == NormKind.FRACTIONAL:
            p1, e = interpolate_to_p1(field.space, coefficients, reference.value)
            errors[field.name] = fractional_error_norm(p1, norm.specs, e)
        else:
            errors[field.name] = float(np.sqrt(max(_volume_error(field.space, norm, coefficients, reference), 0.0)))
        logger.debug('%s error %.3e', field.name, errors[field.name])
    return errors
