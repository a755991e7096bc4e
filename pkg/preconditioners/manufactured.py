"""
Manufactured solutions. Exact fields are written symbolically; sources,
tractions and interface data are derived with sympy from the weak forms the
builders in ``systems`` assemble, then compiled to numpy callables.
"""

import math
from dataclasses import dataclass

import numpy as np
import sympy

from .exceptions import InvalidArgumentError
from .systems import ProblemData

X, Y = sympy.symbols('x y', real=True)
NX, NY = sympy.symbols('n_x n_y', real=True)
NORMAL = sympy.Matrix([NX, NY])
TANGENT = sympy.Matrix([-NY, NX])
PI = sympy.pi


def _compile(expr, with_normal=False):
    """numpy callable f(points[, normals]) for a scalar, 2-vector or 2x2 expression."""
    if isinstance(expr, sympy.MatrixBase):
        flat = list(expr)
        trailing = (2,) if expr.shape[1] == 1 else tuple(expr.shape)
    else:
        flat = [expr]
        trailing = ()
    args = (X, Y, NX, NY) if with_normal else (X, Y)
    fn = sympy.lambdify(args, flat, 'numpy')

    def evaluate(points, normals=None):
        points = np.asarray(points, dtype=float)
        coords = [points[..., 0], points[..., 1]]
        if with_normal:
            coords += [normals[..., 0], normals[..., 1]]
        values = [np.broadcast_to(np.asarray(v, dtype=float), points.shape[:-1]) for v in fn(*coords)]
        return np.stack(values, axis=-1).reshape(points.shape[:-1] + trailing)

    return evaluate


def grad(u):
    if isinstance(u, sympy.MatrixBase):
        return u.jacobian([X, Y])
    return sympy.Matrix([sympy.diff(u, X), sympy.diff(u, Y)])


def div(u):
    if u.shape == (2, 1):
        return sympy.diff(u[0], X) + sympy.diff(u[1], Y)
    return sympy.Matrix([sympy.diff(u[i, 0], X) + sympy.diff(u[i, 1], Y) for i in range(2)])


def sym_grad(u):
    J = grad(u)
    return (J + J.T) / 2


@dataclass(frozen=True)
class ExactField:
    value: object
    gradient: object = None
    divergence: object = None


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    problem: str
    fields: dict
    data: ProblemData
    exact_in_space: bool = False


def _vector_field(u):
    return ExactField(_compile(u), _compile(grad(u)), _compile(div(u)))


def _scalar_field(p):
    return ExactField(_compile(p), _compile(grad(p)))


def _multiplier_field(lam):
    return ExactField(_compile(lam))


def stokes_traction(u, p, mu):
    """μ ∇u n + p n, the natural boundary term of μ(∇u, ∇v) + (p, div v)."""
    return mu * grad(u) * NORMAL + p * NORMAL


def stress_traction(u, p, mu):
    """(2μ ε(u) + p I) n."""
    return (2 * mu * sym_grad(u) + p * sympy.eye(2)) * NORMAL


def _tangential(u):
    return (u.dot(TANGENT)) * TANGENT


def _stokes_sub(params, u, p, lam):
    mu = params.mu
    f = -mu * div(grad(u)) - grad(p)
    traction = stokes_traction(u, p, mu)
    data = ProblemData(
        sources={'u': _compile(f), 'p': _compile(div(u))},
        neumann={'u': _compile(traction, True)},
        interface={'u': _compile(traction + _tangential(u) + lam * NORMAL, True)},
        multiplier={'lam': _compile(u.dot(NORMAL), True)},
        dirichlet={'u': _compile(u)},
    )
    fields = {'u': _vector_field(u), 'p': _scalar_field(p), 'lam': _multiplier_field(lam)}
    return fields, data


def _darcy_sub(params, u, p, lam):
    K = params.K
    f = u / K - grad(p)
    data = ProblemData(
        sources={'u': _compile(f), 'p': _compile(div(u))},
        neumann={'u': _compile(p * NORMAL, True)},
        interface={'u': _compile((p + lam) * NORMAL, True)},
        multiplier={'lam': _compile(u.dot(NORMAL), True)},
        dirichlet={'u': _compile(u)},
    )
    fields = {'u': _vector_field(u), 'p': _scalar_field(p), 'lam': _multiplier_field(lam)}
    return fields, data


def _navier_sub(params, u, p, lam):
    mu = params.mu
    stress = 2 * mu * sym_grad(u) + p * sympy.eye(2)
    traction = stress * NORMAL
    data = ProblemData(
        sources={'u': _compile(-div(stress)), 'p': _compile(div(u))},
        neumann={'u': _compile(traction, True)},
        interface={'u': _compile(traction + lam, True)},
        multiplier={'lam': _compile(u, True)},
        dirichlet={'u': _compile(u)},
    )
    fields = {'u': _vector_field(u), 'p': _scalar_field(p), 'lam': _multiplier_field(lam)}
    return fields, data


def _darcy_stokes(params, u_f, p_f, u_p, p_p, lam):
    mu, K, D = params.mu, params.K, params.D
    traction = stokes_traction(u_f, p_f, mu)
    data = ProblemData(
        sources={
            'u_f': _compile(-mu * div(grad(u_f)) - grad(p_f)),
            'u_p': _compile(u_p / K - grad(p_p)),
            'p_f': _compile(div(u_f)),
            'p_p': _compile(div(u_p)),
        },
        neumann={'u_f': _compile(traction, True), 'u_p': _compile(p_p * NORMAL, True)},
        interface={
            'u_f': _compile(traction + D * _tangential(u_f) + lam * NORMAL, True),
            'u_p': _compile((p_p + lam) * NORMAL, True),
        },
        multiplier={'lam': _compile((u_f - u_p).dot(NORMAL), True)},
        dirichlet={'u_f': _compile(u_f), 'u_p': _compile(u_p)},
    )
    fields = {
        'u_f': _vector_field(u_f), 'p_f': _scalar_field(p_f),
        'u_p': _vector_field(u_p), 'p_p': _scalar_field(p_p),
        'lam': _multiplier_field(lam),
    }
    return fields, data


def _stokes_navier(params, u_f, p_f, u_p, p_p, lam):
    mu, k, eta = params.mu, params.k, params.eta
    stress_f = 2 * mu * sym_grad(u_f) + p_f * sympy.eye(2)
    stress_p = 2 * sym_grad(u_p) + p_p * sympy.eye(2)
    penalty = 0 if math.isinf(eta) else p_p / eta
    data = ProblemData(
        sources={
            'u_f': _compile(-div(stress_f)),
            'u_p': _compile(-div(stress_p)),
            'p_f': _compile(div(u_f)),
            'p_p': _compile(div(u_p) - penalty),
        },
        neumann={'u_f': _compile(stress_f * NORMAL, True), 'u_p': _compile(stress_p * NORMAL, True)},
        interface={
            'u_f': _compile(stress_f * NORMAL + k * lam, True),
            'u_p': _compile(stress_p * NORMAL - lam, True),
        },
        multiplier={'lam': _compile(k * u_f - u_p, True)},
        dirichlet={'u_f': _compile(u_f), 'u_p': _compile(u_p)},
    )
    fields = {
        'u_f': _vector_field(u_f), 'p_f': _scalar_field(p_f),
        'u_p': _vector_field(u_p), 'p_p': _scalar_field(p_p),
        'lam': _multiplier_field(lam),
    }
    return fields, data


def _smooth_fields():
    u_f = sympy.Matrix([sympy.sin(PI * X) * sympy.sin(PI * Y), sympy.cos(PI * X) * sympy.cos(PI * Y)])
    p_f = sympy.sin(PI * X) * sympy.cos(2 * PI * Y)
    u_p = sympy.Matrix([sympy.cos(PI * X) * sympy.sin(PI * Y), sympy.sin(2 * PI * X) * sympy.cos(PI * Y)])
    p_p = sympy.cos(PI * X) * sympy.cos(PI * Y)
    lam = sympy.cos(PI * Y)
    lam_vector = sympy.Matrix([sympy.cos(PI * Y), sympy.sin(PI * Y)])
    return u_f, p_f, u_p, p_p, lam, lam_vector


SMOOTH_PROBLEMS = ('stokes-sub', 'darcy-sub', 'navier-sub', 'darcy-stokes', 'darcy-stokes-dirichlet',
                   'stokes-navier', 'stokes-navier-dirichlet')
POLYNOMIAL_PROBLEMS = ('stokes-sub', 'darcy-sub')


def manufactured_solution(problem, params, kind='smooth'):
    """
    Exact solution and matching data for ``problem``. ``kind`` is 'smooth'
    (trigonometric fields) or 'polynomial' (fields inside the discrete
    spaces, for which the discretization is exact).
    """
    if kind == 'polynomial':
        if problem == 'stokes-sub':
            u = sympy.Matrix([Y ** 2, X ** 2 + X * Y])
            fields, data = _stokes_sub(params, u, X + 2 * Y, sympy.Integer(1))
        elif problem == 'darcy-sub':
            u = sympy.Matrix([1 + X, 2 + Y])
            fields, data = _darcy_sub(params, u, sympy.Integer(1), sympy.Integer(2))
        else:
            raise InvalidArgumentError(f'no polynomial solution for {problem!r}')
        return ManufacturedSolution(problem, fields, data, exact_in_space=True)

    if kind != 'smooth':
        raise InvalidArgumentError(f'unknown manufactured solution kind {kind!r}')
    u_f, p_f, u_p, p_p, lam, lam_vector = _smooth_fields()
    if problem == 'stokes-sub':
        fields, data = _stokes_sub(params, u_f, p_f, lam)
    elif problem == 'darcy-sub':
        fields, data = _darcy_sub(params, u_p, p_p, lam)
    elif problem == 'navier-sub':
        fields, data = _navier_sub(params, u_f, p_f, lam_vector)
    elif problem in ('darcy-stokes', 'darcy-stokes-dirichlet'):
        # p_f has zero mean on the fluid half, so the mean-pressure unknown is zero
        fields, data = _darcy_stokes(params, u_f, p_f, u_p, p_p, lam)
    elif problem in ('stokes-navier', 'stokes-navier-dirichlet'):
        if problem.endswith('dirichlet') and math.isinf(params.eta):
            raise InvalidArgumentError('stokes-navier-dirichlet with eta = inf has a pressure kernel; '
                                       'manufactured solutions need a finite eta')
        fields, data = _stokes_navier(params, u_f, p_f, u_p, p_p, lam_vector)
    else:
        raise InvalidArgumentError(f'no manufactured solution for {problem!r}')
    return ManufacturedSolution(problem, fields, data)
