"""Constrained gradients, projection kernels and retractions.

Kernel convention: ``projection_kernel`` returns the matrix ``P`` with
``constrained gradient = P @ grad f``.  For one constraint and weights ``u``::

    P = I - grad_c  (u / grad_c)^T

which annihilates ``grad_c`` for every admissible ``u`` and is symmetric only
for ``u_i = (dc/drho_i)^2 / |grad_c|^2``.  For ``k`` constraints under the
orthogonal scheme ``P = I - G^T Q^{-1} G`` with ``G`` the stacked constraint
gradients and ``Q = G G^T`` their Gram matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .autodiff import jet
from .errors import (DimensionMismatch, DomainError, HomogeneityMismatch,
                     NoHomogeneity, NotAffine, ScalingUndefined,
                     SingularConstraint, UnsupportedScheme, WeightSumViolation,
                     ZeroGradientComponent, ZeroSum)
from .expr import Expr

WEIGHT_SUM_TOL = 1e-10
SINGULAR_GRAM_TOL = 1e-12
AFFINE_TOL = 1e-10
HOMOGENEITY_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintSpec:
    """``expr(rho) = target``, optionally declared homogeneous of degree ``homogeneity``."""

    expr: Expr
    target: float
    homogeneity: Optional[int] = None

    def __post_init__(self):
        if self.homogeneity is not None and int(self.homogeneity) == 0:
            raise ValueError("homogeneity degree must be non-zero")

    def value(self, point):
        return self.expr.evaluate(point)

    def violation(self, point):
        """Relative constraint violation ``|c - C| / max(1, |C|)``."""
        return abs(self.value(point) - self.target) / max(1.0, abs(self.target))

    def check_homogeneity(self, trials=20, seed=0):
        """Verify ``c(2 rho) = 2**k c(rho)`` at random points; raise on mismatch."""
        k = self.homogeneity
        if k is None:
            return
        rng = np.random.default_rng(seed)
        n = self.expr.n
        done = attempts = 0
        while done < trials:
            attempts += 1
            if attempts > 50 * trials:
                raise HomogeneityMismatch("could not find points where the constraint is defined")
            # positive orthant first, then anywhere if the constraint is undefined there
            if attempts <= 10 * trials:
                rho = rng.uniform(0.5, 2.0, n)
            else:
                rho = rng.uniform(-4.0, 4.0, n)
            try:
                lhs = self.expr.evaluate(2.0 * rho)
                rhs = 2.0 ** k * self.expr.evaluate(rho)
            except DomainError:
                continue
            if abs(lhs - rhs) > HOMOGENEITY_TOL * max(abs(lhs), abs(rhs), 1e-300):
                raise HomogeneityMismatch(
                    f"declared degree {k} fails: c(2 rho) = {lhs!r}, 2^k c(rho) = {rhs!r} "
                    f"at rho = {rho.tolist()}")
            done += 1


# ---------------------------------------------------------------------------
# weight schemes


@dataclass(frozen=True)
class Orthogonal:
    name = "orthogonal"


@dataclass(frozen=True)
class Homogeneous:
    name = "homogeneous"


@dataclass(frozen=True)
class Custom:
    weights: tuple = field(default_factory=tuple)
    name = "custom"


WeightScheme = Union[Orthogonal, Homogeneous, Custom]
ORTHOGONAL = Orthogonal()
HOMOGENEOUS = Homogeneous()


class RetractionKind(enum.Enum):
    LINEAR = "linear"
    ORDER1 = "order1"
    ORDER2 = "order2"
    ORDER3 = "order3"
    EXACT_SCALING = "exact_scaling"


def _as_list(constraints):
    if isinstance(constraints, ConstraintSpec):
        return [constraints]
    return list(constraints)


def _gradients(constraints, point):
    return np.array([jet(c.expr, point, 1).grad for c in constraints])


# ---------------------------------------------------------------------------
# Gram matrix and weights


@dataclass
class Gram:
    matrix: np.ndarray
    det: float
    grads: np.ndarray  # k x n

    @property
    def scalar(self):
        """Single-constraint ``Q = |grad c|^2``."""
        return float(self.matrix[0, 0])


def _gram_from_grads(G):
    Q = G @ G.T
    det = float(np.linalg.det(Q)) if len(Q) > 1 else float(Q[0, 0])
    bound = SINGULAR_GRAM_TOL * float(np.prod(np.sum(G * G, axis=1)))
    if not det > bound:
        raise SingularConstraint(
            f"constraint gradients are dependent or vanish (|Q| = {det:.3e})", det=det)
    return Gram(Q, det, G)


def gram(constraints, point) -> Gram:
    """Gram matrix ``Q_ij = grad c_i . grad c_j`` and its determinant."""
    return _gram_from_grads(_gradients(_as_list(constraints), point))


def u_weight(scheme: WeightScheme, constraint: ConstraintSpec, point, grad_c=None):
    """Weight vector ``u`` (summing to one) of ``scheme`` at ``point``."""
    point = np.asarray(point, dtype=float)
    if grad_c is None:
        grad_c = jet(constraint.expr, point, 1).grad
    if isinstance(scheme, Orthogonal):
        Q = float(grad_c @ grad_c)
        _gram_from_grads(grad_c[None, :])
        u = grad_c ** 2 / Q
    elif isinstance(scheme, Homogeneous):
        total = float(np.sum(point))
        if abs(total) <= 1e-14 * float(np.sum(np.abs(point))) or total == 0.0:
            raise ZeroSum("homogeneous weights need a non-zero coordinate sum")
        u = point / total
    elif isinstance(scheme, Custom):
        if len(scheme.weights) != len(point):
            raise DimensionMismatch(
                f"{len(scheme.weights)} custom weights for {len(point)} variables")
        u = np.array([w.evaluate(point) for w in scheme.weights])
    else:
        raise UnsupportedScheme(f"unknown weight scheme {scheme!r}")
    if abs(float(np.sum(u)) - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumViolation(f"weights sum to {float(np.sum(u))!r}, not 1")
    return u


def excluded_weights(u, grad_c):
    """``u / grad_c`` component-wise; the variation the kernel sends to zero."""
    scale = float(np.max(np.abs(grad_c)))
    if np.any(np.abs(grad_c) <= 1e-14 * scale) or scale == 0.0:
        raise ZeroGradientComponent("a constraint-gradient component vanishes")
    return u / grad_c


# ---------------------------------------------------------------------------
# kernels and constrained gradients


def _kernel_from(constraints, point, scheme, G):
    n = G.shape[1]
    if isinstance(scheme, Orthogonal):
        gr = _gram_from_grads(G)
        return np.eye(n) - G.T @ np.linalg.solve(gr.matrix, G)
    if len(constraints) != 1:
        raise UnsupportedScheme("several constraints require the orthogonal scheme")
    _gram_from_grads(G)
    g = G[0]
    v = excluded_weights(u_weight(scheme, constraints[0], point, g), g)
    return np.eye(n) - np.outer(g, v)


def projection_kernel(constraints, point, scheme: WeightScheme = ORTHOGONAL):
    """Matrix ``P`` mapping full gradients to constrained gradients."""
    constraints = _as_list(constraints)
    point = np.asarray(point, dtype=float)
    return _kernel_from(constraints, point, scheme, _gradients(constraints, point))


def constrained_gradient(f: Expr, constraints, point, scheme: WeightScheme = ORTHOGONAL):
    point = np.asarray(point, dtype=float)
    return projection_kernel(constraints, point, scheme) @ jet(f, point, 1).grad


# ---------------------------------------------------------------------------
# retractions


def is_affine(constraint: ConstraintSpec, point, samples=5, seed=0):
    """Hessian of ``c`` below tolerance at ``point`` and nearby random points."""
    rng = np.random.default_rng(seed)
    point = np.asarray(point, dtype=float)
    probes = [point]
    tries = 0
    while len(probes) < samples and tries < 20 * samples:
        tries += 1
        probes.append(point + rng.normal(size=len(point)) * (1.0 + np.abs(point)))
    seen = 0
    for p in probes:
        try:
            H = jet(constraint.expr, p, 2).hess
        except DomainError:
            continue
        seen += 1
        if np.max(np.abs(H)) > AFFINE_TOL:
            return False
        if seen >= samples:
            break
    return seen > 0


def scaling_factor(value, target, k):
    """Real ``(target / value)**(1/k)``."""
    if value == 0.0:
        raise ScalingUndefined("constraint vanishes at the point")
    r = target / value
    if r > 0:
        return r ** (1.0 / k)
    if r < 0 and k % 2 != 0:
        return -((-r) ** (1.0 / k))
    raise ScalingUndefined(f"(target/c)^(1/{k}) is not real for target/c = {r!r}")


def retract(point, constraint: ConstraintSpec, kind: RetractionKind = RetractionKind.ORDER1,
            ops=None):
    """Map ``point`` (back) toward the constraint set.

    ``ORDER1``/``ORDER2``/``ORDER3`` satisfy the constraint up to terms of
    order 2/3/4 in the distance from the set; ``LINEAR`` (affine constraints
    only) and ``EXACT_SCALING`` (declared homogeneous constraints) satisfy it
    exactly.

    With an extended-precision backend ``ops`` (see :mod:`condiff.mpops`)
    the constraint value and the update are carried in that precision;
    derivative coefficients are still taken in double precision.
    """
    kind = RetractionKind(kind)
    if ops is None:
        rho = np.asarray(point, dtype=float)
        value = constraint.value(rho)
    else:
        rho = np.array([ops.const(v) for v in point], dtype=object)
        value = constraint.expr.apply(ops, list(rho))
    if kind is RetractionKind.EXACT_SCALING:
        if constraint.homogeneity is None:
            raise NoHomogeneity("exact scaling needs a declared homogeneity degree")
        s = scaling_factor(value, constraint.target, int(constraint.homogeneity))
        return s * rho
    base = rho.astype(float)
    if kind is RetractionKind.LINEAR and not is_affine(constraint, base):
        raise NotAffine("linear retraction applies to affine constraints only")
    order = {RetractionKind.LINEAR: 1, RetractionKind.ORDER1: 1,
             RetractionKind.ORDER2: 2, RetractionKind.ORDER3: 3}[kind]
    j = jet(constraint.expr, base, order)
    g = j.grad
    Q = float(g @ g)
    if not Q > 0.0:
        raise SingularConstraint("constraint gradient vanishes")
    d = value - constraint.target
    out = rho - g * (d / Q)
    if order >= 2:
        w = j.hess @ g
        out = out - w * (d ** 2 / (2.0 * Q ** 2))
    if order >= 3:
        H = j.hess
        grad_Q = 2.0 * w
        hess_Q = 2.0 * (np.einsum("ijk,k->ij", j.third, g) + H @ H)
        out = out + (hess_Q @ g - 4.0 * H @ grad_Q) * (d ** 3 / (12.0 * Q ** 3))
    return out


def retraction_weights(constraint: ConstraintSpec, point, kind: RetractionKind):
    """``u = grad_c * d rho_c / dC`` of an exact retraction, at an on-constraint point."""
    kind = RetractionKind(kind)
    point = np.asarray(point, dtype=float)
    g = jet(constraint.expr, point, 1).grad
    if kind is RetractionKind.EXACT_SCALING:
        if constraint.homogeneity is None:
            raise NoHomogeneity("exact scaling needs a declared homogeneity degree")
        return g * point / (int(constraint.homogeneity) * constraint.value(point))
    if kind is RetractionKind.LINEAR:
        return g * g / float(g @ g)
    raise ValueError(f"no closed-form weights for {kind}")


def retraction_map(ops, xs, constraint: ConstraintSpec, kind: RetractionKind, base=None):
    """Retraction ``rho -> rho_c(rho)`` written in backend arithmetic.

    Used to push Taylor jets through exact retractions.  ``LINEAR`` takes the
    (constant) constraint gradient from ``base``.
    """
    kind = RetractionKind(kind)
    c_val = constraint.expr.apply(ops, xs)
    if kind is RetractionKind.EXACT_SCALING:
        if constraint.homogeneity is None:
            raise NoHomogeneity("exact scaling needs a declared homogeneity degree")
        k = int(constraint.homogeneity)
        c0 = float(np.asarray(c_val).flat[0])
        if c0 == 0.0:
            raise ScalingUndefined("constraint vanishes at the point")
        r = ops.div(ops.const(constraint.target), c_val)
        r0 = constraint.target / c0
        if r0 > 0:
            s = ops.pow_(r, ops.const(1.0 / k))
        elif r0 < 0 and k % 2 != 0:
            s = ops.neg(ops.pow_(ops.neg(r), ops.const(1.0 / k)))
        else:
            raise ScalingUndefined(f"(target/c)^(1/{k}) is not real for target/c = {r0!r}")
        return [ops.mul(s, x) for x in xs]
    if kind is RetractionKind.LINEAR:
        g = jet(constraint.expr, base, 1).grad
        Q = float(g @ g)
        d = ops.sub(c_val, ops.const(constraint.target))
        return [ops.sub(x, ops.mul(ops.const(gi / Q), d)) for x, gi in zip(xs, g)]
    raise ValueError(f"{kind} cannot be propagated through jets")
