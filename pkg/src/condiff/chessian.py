"""Constrained second and third derivatives under a single equality constraint.

Four routes to the constrained Hessian ``M``:

* successive  -- constrained derivative of the constrained gradient field,
  ``M = P J_G^T`` with ``G = P grad f`` (the explicit double-projection
  formula is evaluated alongside as an internal cross-check);
* general     -- chain rule through the second-order retraction,
  ``M = P H_f P + sum_k (df/drho_k) R_k`` with ``R`` from
  :func:`rho_hessian_kernel`;
* stationary  -- ``P (H_f - mu H_c) P^T`` at constrained stationary points;
* retraction  -- Hessian of ``f o rho_c`` through an exact retraction.

Index convention for ``M``: ``M[p, q]`` differentiates first along ``q`` and
then along ``p``.  Only the symmetric part enters quadratic forms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import EPS, jet, jet_of_map
from .errors import (ConstraintViolated, DimensionGuard, InternalConsistencyError,
                     NotAffine, NoHomogeneity, NotStationary, SingularConstraint,
                     UnsupportedScheme)
from .expr import Expr, FloatOps
from .projection import (ORTHOGONAL, ConstraintSpec, Orthogonal, RetractionKind,
                         WeightScheme, is_affine, projection_kernel, retraction_map)

STATIONARITY_TOL = 1e-8
ON_CONSTRAINT_TOL = 1e-9
CROSSCHECK_TOL = 1e-9
MAX_THIRD_DIM = 8


class Method(enum.Enum):
    SUCCESSIVE = "successive"
    GENERAL = "general"
    RETRACTION = "retraction"
    STATIONARY = "stationary"


@dataclass
class ConstrainedJet:
    point: np.ndarray
    scheme: WeightScheme
    cgrad: np.ndarray
    mu: float
    chess: np.ndarray
    method: Method
    raw_asymmetry: float
    grad_norm: float = 0.0
    kind: Optional[RetractionKind] = None
    crosscheck: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def stationarity(self):
        """Scale-free residual ``|cgrad| / (1 + |grad f|)``."""
        return float(np.linalg.norm(self.cgrad) / (1.0 + self.grad_norm))

    def is_stationary(self, tol=STATIONARITY_TOL):
        return self.stationarity <= tol

    @property
    def symmetric(self):
        return 0.5 * (self.chess + self.chess.T)


def asymmetry(M):
    return float(np.max(np.abs(M - M.T))) if M.size else 0.0


@dataclass
class _Pieces:
    a: np.ndarray
    Hf: np.ndarray
    g: np.ndarray
    Hc: np.ndarray
    Q: float

    @property
    def s(self):
        return float(self.g @ self.a)

    @property
    def w(self):
        return self.Hc @ self.g

    @property
    def P(self):
        return np.eye(len(self.g)) - np.outer(self.g, self.g) / self.Q


def _single(constraint):
    if isinstance(constraint, ConstraintSpec):
        return constraint
    constraint = list(constraint)
    if len(constraint) != 1:
        raise UnsupportedScheme("constrained second derivatives need exactly one constraint")
    return constraint[0]


def _pieces(f: Expr, constraint: ConstraintSpec, point) -> _Pieces:
    jf = jet(f, point, 2)
    jc = jet(constraint.expr, point, 2)
    Q = float(jc.grad @ jc.grad)
    if not Q > 0.0:
        raise SingularConstraint("constraint gradient vanishes")
    return _Pieces(jf.grad, jf.hess, jc.grad, jc.hess, Q)


def _require_orthogonal(scheme):
    if not isinstance(scheme, Orthogonal):
        raise UnsupportedScheme(f"this route is defined for the orthogonal scheme only, not {scheme.name}")


def lagrange_multiplier(f: Expr, constraint, point) -> float:
    """Least-squares multiplier ``(grad c . grad f) / |grad c|^2``."""
    constraint = _single(constraint)
    a = jet(f, point, 1).grad
    g = jet(constraint.expr, point, 1).grad
    Q = float(g @ g)
    if not Q > 0.0:
        raise SingularConstraint("constraint gradient vanishes")
    return float(g @ a) / Q


# ---------------------------------------------------------------------------
# successive route


def _successive_compositional(p: _Pieces):
    a, Hf, g, Hc, Q, s, w = p.a, p.Hf, p.g, p.Hc, p.Q, p.s, p.w
    # Jacobian of G(rho) = grad f - grad c (grad c . grad f) / Q
    ds = Hc @ a + Hf @ g
    JG = Hf - Hc * (s / Q) - np.outer(g, ds) / Q + np.outer(g, w) * (2.0 * s / Q ** 2)
    return p.P @ JG.T


def _successive_explicit(p: _Pieces):
    """Term-by-term double-projection formula, rows = outer derivative."""
    a, Hf, g, Hc, Q, s, w = p.a, p.Hf, p.g, p.Hc, p.Q, p.s, p.w
    Hfg = Hf @ g
    Hca = Hc @ a
    first = np.einsum("q,p->pq", g, Hfg + Hca - (2.0 / Q) * w * s) / Q
    second = np.einsum("p,q->pq", g, Hfg - w * s / Q) / Q
    third = np.outer(g, g) * (g @ Hfg + w @ a - (2.0 / Q) * (g @ w) * s) / Q ** 2
    return Hf - first - second + third - Hc * s / Q


def successive_hessian(f: Expr, constraint, point, scheme: WeightScheme = ORTHOGONAL,
                       check=True) -> ConstrainedJet:
    """Constrained Hessian by two successive constrained differentiations."""
    _require_orthogonal(scheme)
    constraint = _single(constraint)
    point = np.asarray(point, dtype=float)
    p = _pieces(f, constraint, point)
    M = _successive_compositional(p)
    dev = None
    if check:
        dev = float(np.max(np.abs(M - _successive_explicit(p))))
        if dev > CROSSCHECK_TOL * max(1.0, float(np.max(np.abs(M)))):
            raise InternalConsistencyError(
                f"successive Hessian routes disagree by {dev:.3e}", deviation=dev)
    return ConstrainedJet(point, scheme, p.P @ p.a, p.s / p.Q, M, Method.SUCCESSIVE,
                          asymmetry(M), float(np.linalg.norm(p.a)), crosscheck=dev)


# ---------------------------------------------------------------------------
# general route


def _rho_kernel(p: _Pieces):
    g, H, Q, w = p.g, p.Hc, p.Q, p.w
    return (-(np.einsum("kj,i->kij", H, g) + np.einsum("ki,j->kij", H, g)
              + np.einsum("ij,k->kij", H, g)) / Q
            + 2.0 * (np.einsum("j,k,i->kij", g, g, w) + np.einsum("i,k,j->kij", g, g, w)) / Q ** 2
            - np.einsum("i,j,k->kij", g, g, w) / Q ** 2)


def rho_hessian_kernel(constraint, point):
    """Second constrained derivative of the coordinates, ``R[k, i, j]``.

    ``R[k]`` is the Hessian of the ``k``-th coordinate of the second-order
    retraction at an on-constraint point.
    """
    constraint = _single(constraint)
    jc = jet(constraint.expr, point, 2)
    Q = float(jc.grad @ jc.grad)
    if not Q > 0.0:
        raise SingularConstraint("constraint gradient vanishes")
    n = len(jc.grad)
    return _rho_kernel(_Pieces(np.zeros(n), np.zeros((n, n)), jc.grad, jc.hess, Q))


def _general_explicit(p: _Pieces):
    """Closed-form general constrained Hessian, written out term by term."""
    a, Hf, g, Hc, Q, s, w = p.a, p.Hf, p.g, p.Hc, p.Q, p.s, p.w
    Hfg = Hf @ g
    Hca = Hc @ a
    row = Hfg + Hca - (2.0 / Q) * w * s
    return (Hf - np.outer(g, row) / Q - np.outer(row, g) / Q
            + np.outer(g, g) * (g @ Hfg - w @ a) / Q ** 2 - Hc * s / Q)


def general_hessian(f: Expr, constraint, point, check=True) -> ConstrainedJet:
    constraint = _single(constraint)
    point = np.asarray(point, dtype=float)
    p = _pieces(f, constraint, point)
    P = p.P
    M = P @ p.Hf @ P + np.einsum("k,kij->ij", p.a, _rho_kernel(p))
    dev = None
    if check:
        dev = float(np.max(np.abs(M - _general_explicit(p))))
        if dev > CROSSCHECK_TOL * max(1.0, float(np.max(np.abs(M)))):
            raise InternalConsistencyError(
                f"general Hessian routes disagree by {dev:.3e}", deviation=dev)
    return ConstrainedJet(point, ORTHOGONAL, P @ p.a, p.s / p.Q, M, Method.GENERAL,
                          asymmetry(M), float(np.linalg.norm(p.a)), crosscheck=dev)


# ---------------------------------------------------------------------------
# stationary route


def stationary_residual(f: Expr, constraint, point):
    """``|P grad f| / (1 + |grad f|)`` under the orthogonal projector."""
    constraint = _single(constraint)
    p = _pieces(f, constraint, point)
    return float(np.linalg.norm(p.P @ p.a) / (1.0 + np.linalg.norm(p.a)))


def require_stationary(constraint, point, residual, tol=STATIONARITY_TOL):
    """Raise :class:`NotStationary` unless ``point`` is feasible and ``residual <= tol``.

    A vanishing projected gradient alone is not enough: off the constraint
    set ``grad f`` may still be parallel to ``grad c`` (e.g. along a symmetry
    line), which makes ``P grad f`` zero at a non-stationary point.
    """
    if residual > tol:
        raise NotStationary(f"constrained gradient residual {residual:.3e} exceeds {tol:.1e}",
                            residual=residual)
    violation = constraint.violation(point)
    if violation > ON_CONSTRAINT_TOL:
        raise NotStationary(f"point violates the constraint by {violation:.3e} (relative)",
                            residual=residual, violation=violation)


def stationary_hessian(f: Expr, constraint, point, scheme: WeightScheme = ORTHOGONAL,
                       tol=STATIONARITY_TOL) -> ConstrainedJet:
    """``P (H_f - mu H_c) P^T`` at a constrained stationary point."""
    constraint = _single(constraint)
    point = np.asarray(point, dtype=float)
    p = _pieces(f, constraint, point)
    cgrad = p.P @ p.a
    res = float(np.linalg.norm(cgrad) / (1.0 + np.linalg.norm(p.a)))
    require_stationary(constraint, point, res, tol)
    mu = p.s / p.Q
    L = p.Hf - mu * p.Hc
    K = p.P if isinstance(scheme, Orthogonal) else projection_kernel(constraint, point, scheme)
    M = K @ L @ K.T
    M = 0.5 * (M + M.T)
    return ConstrainedJet(point, scheme, cgrad, mu, M, Method.STATIONARY, asymmetry(M),
                          float(np.linalg.norm(p.a)))


# ---------------------------------------------------------------------------
# retraction route


def default_retraction(constraint: ConstraintSpec, point) -> RetractionKind:
    """Exact retraction available for ``constraint``: scaling, else linear."""
    if constraint.homogeneity is not None:
        return RetractionKind.EXACT_SCALING
    if is_affine(constraint, point):
        return RetractionKind.LINEAR
    raise NoHomogeneity("no exact retraction: declare a homogeneity degree or use an affine constraint")


def _check_exact_kind(constraint, point, kind):
    kind = RetractionKind(kind)
    if kind is RetractionKind.EXACT_SCALING and constraint.homogeneity is None:
        raise NoHomogeneity("exact scaling needs a declared homogeneity degree")
    if kind is RetractionKind.LINEAR and not is_affine(constraint, point):
        raise NotAffine("linear retraction applies to affine constraints only")
    if kind not in (RetractionKind.EXACT_SCALING, RetractionKind.LINEAR):
        raise ValueError(f"{kind} is not an exact retraction")
    return kind


def _require_on_constraint(constraint, point):
    v = constraint.violation(point)
    if v > ON_CONSTRAINT_TOL:
        raise ConstraintViolated(f"point violates the constraint by {v:.3e} (relative)",
                                 violation=v)


def composite_jet(f: Expr, constraint, point, kind=None, order=2):
    """Jet of ``f o rho_c`` for an exact retraction ``rho_c``."""
    constraint = _single(constraint)
    point = np.asarray(point, dtype=float)
    kind = default_retraction(constraint, point) if kind is None \
        else _check_exact_kind(constraint, point, kind)

    def composite(ops, xs):
        return f.apply(ops, retraction_map(ops, xs, constraint, kind, base=point))

    return jet_of_map(composite, point, order), kind


def retraction_hessian(f: Expr, constraint, point, kind=None) -> ConstrainedJet:
    """Hessian of ``f`` composed with an exact retraction, at an on-constraint point."""
    constraint = _single(constraint)
    point = np.asarray(point, dtype=float)
    _require_on_constraint(constraint, point)
    cj, kind = composite_jet(f, constraint, point, kind, order=2)
    a = jet(f, point, 1).grad
    g = jet(constraint.expr, point, 1).grad
    M = cj.hess
    return ConstrainedJet(point, ORTHOGONAL, cj.grad, float(g @ a) / float(g @ g), M,
                          Method.RETRACTION, asymmetry(M), float(np.linalg.norm(a)), kind=kind)


# ---------------------------------------------------------------------------
# third order and Taylor prediction


def successive_third(f: Expr, constraint, point):
    """Third successive constrained derivative ``T[i, j, l]``.

    ``T[i] = sum_k P[i, k] dM/drho_k`` with ``M`` the successive Hessian field
    and central differences for the outer derivative.
    """
    constraint = _single(constraint)
    point = np.asarray(point, dtype=float)
    n = len(point)
    if n > MAX_THIRD_DIM:
        raise DimensionGuard(f"successive_third limited to n <= {MAX_THIRD_DIM}, got {n}")
    P = _pieces(f, constraint, point).P
    h = np.cbrt(EPS) * (1.0 + np.abs(point))
    dM = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h[k]
        plus = successive_hessian(f, constraint, point + e, check=False).chess
        minus = successive_hessian(f, constraint, point - e, check=False).chess
        dM[k] = (plus - minus) / (2.0 * h[k])
    return np.einsum("ik,kjl->ijl", P, dM)


class Route(enum.Enum):
    RETRACTION = "retraction"
    SUCCESSIVE_AT_STATIONARY = "successive_at_stationary"


def projected_flow(constraint, base, displacement, steps=32):
    """Endpoint of ``sigma' = P(sigma) displacement`` from ``sigma(0) = base`` at time 1.

    The curve stays on the constraint set; it is the path along which the
    successive constrained derivatives are Taylor coefficients.
    """
    constraint = _single(constraint)
    d = np.asarray(displacement, dtype=float)
    x = np.asarray(base, dtype=float).copy()
    h = 1.0 / steps

    def vel(y):
        return projection_kernel(constraint, y) @ d

    for _ in range(steps):
        k1 = vel(x)
        k2 = vel(x + 0.5 * h * k1)
        k3 = vel(x + 0.5 * h * k2)
        k4 = vel(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


@dataclass
class TaylorPrediction:
    value: float
    terms: list
    route: Route
    kind: Optional[RetractionKind] = None

    def target_point(self, constraint, base, displacement):
        """On-constraint point whose objective value the prediction approximates."""
        base = np.asarray(base, dtype=float)
        d = np.asarray(displacement, dtype=float)
        if self.route is Route.RETRACTION:
            point = base + d
            return np.asarray(retraction_map(FloatOps, list(point), constraint, self.kind,
                                             base=base))
        return projected_flow(constraint, base, d)


def constrained_taylor(f: Expr, constraint, base, displacement, order=2,
                       route: Route = Route.RETRACTION, kind=None) -> TaylorPrediction:
    """Truncated constrained Taylor expansion around ``base``.

    ``RETRACTION`` predicts ``f(rho_c(base + d))`` for an exact retraction;
    ``SUCCESSIVE_AT_STATIONARY`` predicts ``f`` at the end of the projected
    flow of ``d`` from a stationary ``base``.
    """
    if not 1 <= order <= 3:
        raise ValueError("order must be in 1..3")
    constraint = _single(constraint)
    route = Route(route)
    base = np.asarray(base, dtype=float)
    d = np.asarray(displacement, dtype=float)
    if route is Route.RETRACTION:
        _require_on_constraint(constraint, base)
        cj, kind = composite_jet(f, constraint, base, kind, order=order)
        terms = [cj.value, float(cj.grad @ d)]
        if order >= 2:
            terms.append(0.5 * float(d @ cj.hess @ d))
        if order >= 3:
            terms.append(float(np.einsum("ijk,i,j,k->", cj.third, d, d, d)) / 6.0)
        return TaylorPrediction(float(sum(terms)), terms, route, kind)
    M = stationary_hessian(f, constraint, base)
    terms = [f.evaluate(base), float(M.cgrad @ d)]
    if order >= 2:
        terms.append(0.5 * float(d @ M.chess @ d))
    if order >= 3:
        T = successive_third(f, constraint, base)
        terms.append(float(np.einsum("ijk,i,j,k->", T, d, d, d)) / 6.0)
    return TaylorPrediction(float(sum(terms)), terms, route)
