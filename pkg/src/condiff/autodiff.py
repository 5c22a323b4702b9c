"""Derivative jets by forward-mode truncated Taylor arithmetic.

A function is pushed along a set of directions ``d`` at once: every
intermediate quantity is an array of shape ``(order + 1, D)`` holding the
Taylor coefficients of ``t -> g(x + t d)`` for the ``D`` directions.  Mixed
partials are recovered from the directional coefficients by polarization,
so the derivatives are exact up to rounding.

:func:`fd_jet` is an independent central-difference oracle and
:func:`check_jet` compares the two.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NonDifferentiable
from .expr import Expr

EPS = np.finfo(float).eps


@dataclass
class Jet:
    order: int
    value: float
    grad: Optional[np.ndarray] = None
    hess: Optional[np.ndarray] = None
    third: Optional[np.ndarray] = None

    @property
    def n(self):
        return len(self.grad)


# ---------------------------------------------------------------------------
# Taylor backend


def _compose(u, g):
    """Coefficients of ``phi(u(t))`` given ``g = [phi(u0), phi'(u0), ...]``."""
    out = np.empty_like(u)
    out[0] = g[0]
    k = len(u) - 1
    if k >= 1:
        out[1] = g[1] * u[1]
    if k >= 2:
        out[2] = g[1] * u[2] + 0.5 * g[2] * u[1] * u[1]
    if k >= 3:
        out[3] = g[1] * u[3] + g[2] * u[1] * u[2] + g[3] / 6.0 * u[1] ** 3
    return out


class TaylorOps:
    """Arithmetic on truncated Taylor coefficient arrays.

    All directions share the same base point, so the zeroth coefficient is
    the same in every column and domain checks look at ``x[0, 0]``.
    """

    def __init__(self, order, ndir):
        self.order = order
        self.shape = (order + 1, ndir)

    def const(self, value):
        out = np.zeros(self.shape)
        out[0] = value
        return out

    def variable(self, value, direction):
        out = np.zeros(self.shape)
        out[0] = value
        if self.order >= 1:
            out[1] = direction
        return out

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def sub(a, b):
        return a - b

    @staticmethod
    def neg(a):
        return -a

    @staticmethod
    def mul(a, b):
        k = len(a) - 1
        out = np.empty_like(a)
        out[0] = a[0] * b[0]
        if k >= 1:
            out[1] = a[0] * b[1] + a[1] * b[0]
        if k >= 2:
            out[2] = a[0] * b[2] + a[1] * b[1] + a[2] * b[0]
        if k >= 3:
            out[3] = a[0] * b[3] + a[1] * b[2] + a[2] * b[1] + a[3] * b[0]
        return out

    @staticmethod
    def div(a, b):
        b0 = b[0, 0]
        if b0 == 0.0:
            raise DomainError("division by zero")
        out = np.empty_like(a)
        for k in range(len(a)):
            acc = a[k].copy()
            for j in range(1, k + 1):
                acc -= b[j] * out[k - j]
            out[k] = acc / b0
        return out

    def powi(self, x, k):
        if k == 0:
            return self.const(1.0)
        r = x
        for _ in range(abs(k) - 1):
            r = self.mul(r, x)
        if k < 0:
            if r[0, 0] == 0.0:
                raise DomainError("zero raised to a negative power")
            return self.div(self.const(1.0), r)
        return r

    def pow_(self, x, y):
        x0 = x[0, 0]
        if not np.any(y[1:]):
            r = float(y[0, 0])
            if x0 > 0.0:
                g = [x0 ** r, r * x0 ** (r - 1), r * (r - 1) * x0 ** (r - 2),
                     r * (r - 1) * (r - 2) * x0 ** (r - 3)]
                return _compose(x, g)
            if r.is_integer() and abs(r) <= 1 << 16 and (x0 != 0.0 or r >= 0):
                return self.powi(x, int(r))
            if x0 == 0.0:
                raise NonDifferentiable("power of zero base is not differentiable")
            raise DomainError("negative base with non-integer exponent")
        if not x0 > 0.0:
            raise DomainError("variable exponent requires a positive base")
        return self.exp_(self.mul(y, self.log_(x)))

    @staticmethod
    def sin_(x):
        s, c = math.sin(x[0, 0]), math.cos(x[0, 0])
        return _compose(x, [s, c, -s, -c])

    @staticmethod
    def cos_(x):
        s, c = math.sin(x[0, 0]), math.cos(x[0, 0])
        return _compose(x, [c, -s, -c, s])

    @staticmethod
    def exp_(x):
        e = math.exp(x[0, 0])
        return _compose(x, [e, e, e, e])

    @staticmethod
    def log_(x):
        x0 = x[0, 0]
        if not x0 > 0.0:
            raise DomainError(f"log of non-positive value {x0!r}")
        return _compose(x, [math.log(x0), 1 / x0, -1 / x0 ** 2, 2 / x0 ** 3])

    @staticmethod
    def sqrt_(x):
        x0 = x[0, 0]
        if x0 < 0.0:
            raise DomainError(f"sqrt of negative value {x0!r}")
        if x0 == 0.0:
            raise NonDifferentiable("sqrt is not differentiable at 0")
        s = math.sqrt(x0)
        return _compose(x, [s, 0.5 / s, -0.25 / (s * x0), 0.375 / (s * x0 * x0)])

    @staticmethod
    def abs_(x):
        x0 = x[0, 0]
        if x0 == 0.0:
            raise NonDifferentiable("abs is not differentiable at 0")
        return x if x0 > 0 else -x


# ---------------------------------------------------------------------------
# directions and polarization


@functools.lru_cache(maxsize=None)
def _directions(n, order):
    """Integer direction vectors needed to polarize derivatives up to ``order``."""
    if order <= 1:
        return tuple(tuple(int(i == j) for j in range(n)) for i in range(n))
    dirs = set()
    for total in range(1, order + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            if order == 2 and total == 2 and combo[0] == combo[1]:
                continue
            v = [0] * n
            for i in combo:
                v[i] += 1
            dirs.add(tuple(v))
    return tuple(sorted(dirs, key=lambda v: (sum(v), tuple(-x for x in v))))


@functools.lru_cache(maxsize=None)
def _taylor_ops(order, ndir):
    return TaylorOps(order, ndir)


def jet_of_map(fn: Callable, point: Sequence[float], order: int) -> Jet:
    """Jet of ``fn`` at ``point``.

    ``fn(ops, xs)`` receives a :class:`TaylorOps` backend and the list of
    input coordinates as Taylor arrays, and returns a Taylor array.
    """
    point = np.asarray(point, dtype=float)
    n = len(point)
    if order == 0:
        ops = _taylor_ops(0, 1)
        xs = [ops.const(p) for p in point]
        return Jet(0, float(fn(ops, xs)[0, 0]))
    dirs = _directions(n, order)
    col = {d: k for k, d in enumerate(dirs)}
    D = np.array(dirs, dtype=float).T  # n x ndir
    ops = _taylor_ops(order, len(dirs))
    xs = [ops.variable(point[i], D[i]) for i in range(n)]
    out = fn(ops, xs)
    value = float(out[0, 0])

    def unit(*idx):
        v = [0] * n
        for i in idx:
            v[i] += 1
        return col[tuple(v)]

    grad = np.array([out[1, unit(i)] for i in range(n)])
    hess = third = None
    if order >= 2:
        q = 2.0 * out[2]  # quadratic form along each direction
        hess = np.empty((n, n))
        for i in range(n):
            hess[i, i] = q[unit(i)]
        for i, j in itertools.combinations(range(n), 2):
            hess[i, j] = hess[j, i] = 0.5 * (q[unit(i, j)] - hess[i, i] - hess[j, j])
    if order >= 3:
        cub = 6.0 * out[3]  # cubic form along each direction
        third = np.empty((n, n, n))
        for i, j, k in itertools.combinations_with_replacement(range(n), 3):
            idx = (i, j, k)
            acc = 0.0
            for size in (1, 2, 3):
                sign = (-1.0) ** (3 - size)
                for sub in itertools.combinations(idx, size):
                    acc += sign * cub[unit(*sub)]
            val = acc / 6.0
            for perm in set(itertools.permutations(idx)):
                third[perm] = val
    return Jet(order, value, grad, hess, third)


def jet(f: Expr, point: Sequence[float], order: int = 2) -> Jet:
    """Value and derivatives of ``f`` up to ``order`` (0..3) at ``point``."""
    if not 0 <= order <= 3:
        raise ValueError("order must be in 0..3")
    f._check_dim(point)
    return jet_of_map(lambda ops, xs: f.apply(ops, xs), point, order)


# ---------------------------------------------------------------------------
# finite-difference oracle


def _fd_hessian(fun, x):
    n = len(x)
    h = EPS ** 0.25 * (1.0 + np.abs(x))
    f0 = fun(x)
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        H[i, i] = (fun(x + e) - 2.0 * f0 + fun(x - e)) / h[i] ** 2
    for i, j in itertools.combinations(range(n), 2):
        ei = np.zeros(n)
        ej = np.zeros(n)
        ei[i] = h[i]
        ej[j] = h[j]
        H[i, j] = H[j, i] = (fun(x + ei + ej) - fun(x + ei - ej)
                             - fun(x - ei + ej) + fun(x - ei - ej)) / (4.0 * h[i] * h[j])
    return H


def fd_gradient(fun, x):
    x = np.asarray(x, dtype=float)
    h = np.cbrt(EPS) * (1.0 + np.abs(x))
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h[i]
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h[i])
    return g


def fd_jacobian(field_fn, x):
    """Central-difference Jacobian ``J[i, j] = d field_i / d x_j``."""
    x = np.asarray(x, dtype=float)
    h = np.cbrt(EPS) * (1.0 + np.abs(x))
    cols = []
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = h[j]
        cols.append((np.asarray(field_fn(x + e)) - np.asarray(field_fn(x - e))) / (2.0 * h[j]))
    return np.stack(cols, axis=-1)


def fd_hessian(fun, x):
    return _fd_hessian(fun, np.asarray(x, dtype=float))


def fd_jet(f, point: Sequence[float], order: int = 2) -> Jet:
    """Central-difference jet of ``f`` (an :class:`Expr` or a callable).

    Third derivatives are central differences of fd Hessians, Richardson
    extrapolated over the outer step (``h`` and ``h/2``) so the truncation
    error is fourth order and a longer outer step keeps rounding small.
    """
    if not 1 <= order <= 3:
        raise ValueError("order must be in 1..3")
    fun = f.evaluate if isinstance(f, Expr) else f
    x = np.asarray(point, dtype=float)
    n = len(x)
    out = Jet(order, float(fun(x)), fd_gradient(fun, x))
    if order >= 2:
        out.hess = _fd_hessian(fun, x)
    if order >= 3:
        s = EPS ** (1.0 / 6.0) * (1.0 + np.abs(x))

        def outer(step):
            D = np.empty((n, n, n))
            for k in range(n):
                e = np.zeros(n)
                e[k] = step[k]
                D[:, :, k] = (_fd_hessian(fun, x + e) - _fd_hessian(fun, x - e)) / (2.0 * step[k])
            return D

        T = (4.0 * outer(s / 2.0) - outer(s)) / 3.0
        sym = np.zeros_like(T)
        for perm in itertools.permutations(range(3)):
            sym += T.transpose(perm)
        out.third = sym / 6.0
    return out


# ---------------------------------------------------------------------------
# consistency report

THRESHOLDS = {"grad": 1e-6, "hess": 1e-4, "third": 1e-3}


def relative_deviation(a, b):
    """Max-norm deviation relative to the larger operand, floored at 1."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b)) / scale)


@dataclass
class JetCheck:
    order: int
    deviations: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=lambda: dict(THRESHOLDS))
    analytic: Optional[Jet] = None

    @property
    def passed(self):
        return all(self.deviations[k] <= self.thresholds[k] for k in self.deviations)

    def failures(self):
        return {k: v for k, v in self.deviations.items() if v > self.thresholds[k]}


def check_jet(f: Expr, point: Sequence[float], order: int = 2) -> JetCheck:
    """Compare :func:`jet` against :func:`fd_jet`; failures are reported, not raised."""
    a = jet(f, point, order)
    b = fd_jet(f, point, order)
    report = JetCheck(order, analytic=a)
    report.deviations["grad"] = relative_deviation(a.grad, b.grad)
    if order >= 2:
        report.deviations["hess"] = relative_deviation(a.hess, b.hess)
    if order >= 3:
        report.deviations["third"] = relative_deviation(a.third, b.third)
    return report
