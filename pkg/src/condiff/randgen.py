"""Seeded random problem instances for property checks.

Every generator takes a ``numpy.random.Generator`` and returns expression
text (or parsed objects), so instances are reproducible from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Expr, parse
from .projection import ConstraintSpec


def variable_names(n):
    return [f"x{i}" for i in range(n)]


def _coef(rng, lo=0.5, hi=2.0):
    c = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
    return f"({c:.6f})"


def smooth_expression(rng, variables, depth=3):
    """Random expression defined and smooth on all of R^n.

    Uses sums, products, small integer powers, ``sin``, ``cos``, ``exp`` of
    bounded arguments, ``log(1 + u^2)``, ``sqrt(2 + cos u)`` and ``u / (1 + v^2)``.
    """

    def leaf():
        if rng.random() < 0.2:
            return _coef(rng)
        return variables[rng.integers(len(variables))]

    def build(d):
        if d == 0:
            return leaf()
        kind = rng.integers(10)
        a = build(d - 1)
        if kind == 0:
            return f"({a} + {build(d - 1)})"
        if kind == 1:
            return f"({a} - {build(d - 1)})"
        if kind == 2:
            return f"({a} * {build(d - 1)})"
        if kind == 3:
            return f"({a})^{int(rng.integers(2, 4))}"
        if kind == 4:
            return f"sin({a})"
        if kind == 5:
            return f"cos({a})"
        if kind == 6:
            return f"exp(0.3 * sin({a}))"
        if kind == 7:
            return f"log(1 + ({a})^2)"
        if kind == 8:
            return f"sqrt(2 + cos({a}))"
        return f"({a} / (1 + ({build(d - 1)})^2))"

    return build(depth)


def random_smooth(rng, n, depth=3) -> Expr:
    variables = variable_names(n)
    terms = [smooth_expression(rng, variables, depth) for _ in range(2)]
    # a linear part keeps the gradient generically non-degenerate
    linear = " + ".join(f"{_coef(rng)} * {v}" for v in variables)
    return parse(" + ".join(terms + [linear]), variables)


@dataclass
class SmoothProblem:
    objective: Expr
    constraint: ConstraintSpec


def smooth_problem(rng, n, depth=2) -> SmoothProblem:
    """Random smooth objective and constraint; the target is arbitrary."""
    f = random_smooth(rng, n, depth)
    c = random_smooth(rng, n, depth)
    return SmoothProblem(f, ConstraintSpec(c, float(rng.uniform(-1, 1))))


def regular_point(rng, constraint: ConstraintSpec, box=2.0, min_component=1e-3, tries=100):
    """Random point where every constraint-gradient component is non-negligible."""
    from .autodiff import jet

    n = constraint.expr.n
    for _ in range(tries):
        x = rng.uniform(-box, box, n)
        g = jet(constraint.expr, x, 1).grad
        if np.all(np.abs(g) > min_component * max(1.0, float(np.max(np.abs(g))))):
            return x
    raise RuntimeError("no regular point found")


def homogeneous_polynomial(rng, variables, degree, terms=4, positive=False):
    """Sum of random monomials of total degree ``degree``."""
    n = len(variables)
    parts = []
    for _ in range(terms):
        powers = np.zeros(n, dtype=int)
        for _ in range(degree):
            powers[rng.integers(n)] += 1
        c = rng.uniform(0.5, 2.0) if positive else rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        mono = " * ".join(f"{v}^{p}" for v, p in zip(variables, powers) if p)
        parts.append(f"{c:.6f} * {mono}")
    return " + ".join(parts)


def degree_zero_rational(rng, n, degree=2) -> Expr:
    """Ratio of two homogeneous polynomials of equal degree (degree-0 homogeneous).

    The denominator is a positive-definite even form plus positive monomials
    so it stays away from zero on the positive orthant.
    """
    variables = variable_names(n)
    num = homogeneous_polynomial(rng, variables, degree, terms=4)
    sq = " + ".join(f"{rng.uniform(0.5, 2.0):.6f} * {v}^{degree}" for v in variables)
    den = f"{sq} + {homogeneous_polynomial(rng, variables, degree, terms=2, positive=True)}"
    return parse(f"({num}) / ({den})", variables)


def sphere_constraint(n, radius2=1.0) -> ConstraintSpec:
    variables = variable_names(n)
    return ConstraintSpec(parse(" + ".join(f"{v}^2" for v in variables), variables),
                          float(radius2), 2)


def sum_constraint(n, total) -> ConstraintSpec:
    variables = variable_names(n)
    return ConstraintSpec(parse(" + ".join(variables), variables), float(total), 1)


def _quadratic_text(A, b, variables):
    n = len(variables)
    terms = []
    for i in range(n):
        terms.append(f"{float(0.5 * A[i, i])!r} * {variables[i]}^2")
        for j in range(i + 1, n):
            terms.append(f"{float(A[i, j])!r} * {variables[i]} * {variables[j]}")
        terms.append(f"{float(b[i])!r} * {variables[i]}")
    return " + ".join(terms)


@dataclass
class QuadraticInstance:
    """``f = x^T A x / 2 + b^T x`` subject to ``a^T x = target``.

    ``point`` is the unique KKT point and ``reduced`` the exact reduced
    Hessian ``Z^T A Z`` over an orthonormal null-space basis ``Z`` of ``a``.
    """

    objective: Expr
    constraint: ConstraintSpec
    A: np.ndarray
    b: np.ndarray
    a: np.ndarray
    point: np.ndarray
    mu: float
    reduced_eigenvalues: np.ndarray

    @property
    def ground_truth(self):
        """Verdict string from the exact reduced spectrum."""
        neg = int(np.sum(self.reduced_eigenvalues < 0))
        if neg == 0:
            return "LocalMin"
        if neg == len(self.reduced_eigenvalues):
            return "LocalMax"
        return f"Saddle({neg})"


def quadratic_linear(rng, n, definite=None) -> QuadraticInstance:
    """Random quadratic objective with one linear constraint.

    Eigenvalues of the reduced Hessian are kept at least 0.5 away from zero.
    ``definite`` in ``{"min", "max", None}`` fixes or randomizes the signs.
    """
    variables = variable_names(n)
    a = rng.uniform(0.5, 2.0, n) * rng.choice([-1.0, 1.0], n)
    # orthonormal basis whose first vector is a / |a|
    basis = np.linalg.qr(np.column_stack([a, rng.normal(size=(n, n - 1))]))[0]
    Z = basis[:, 1:]
    if definite == "min":
        signs = np.ones(n - 1)
    elif definite == "max":
        signs = -np.ones(n - 1)
    else:
        signs = rng.choice([-1.0, 1.0], n - 1)
    red = signs * rng.uniform(0.5, 3.0, n - 1)
    R = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))[0]
    reduced = R @ np.diag(red) @ R.T
    normal = basis[:, 0]
    A = Z @ reduced @ Z.T + rng.uniform(-2, 2) * np.outer(normal, normal) \
        + (np.outer(normal, Z @ rng.normal(size=n - 1)) + np.outer(Z @ rng.normal(size=n - 1), normal))
    A = 0.5 * (A + A.T)
    b = rng.uniform(-1, 1, n)
    target = float(rng.uniform(-1, 1))
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = A
    K[:n, n] = -a
    K[n, :n] = a
    sol = np.linalg.solve(K, np.concatenate([-b, [target]]))
    f = parse(_quadratic_text(A, b, variables), variables)
    c = ConstraintSpec(parse(" + ".join(f"{float(a[i])!r} * {variables[i]}" for i in range(n)),
                             variables), target)
    return QuadraticInstance(f, c, A, b, a, sol[:n], float(sol[n]), np.sort(red))


@dataclass
class SphereQuadratic:
    """``f = x^T A x`` on the unit sphere, stationary at unit eigenvectors of ``A``."""

    objective: Expr
    constraint: ConstraintSpec
    A: np.ndarray
    points: list


def sphere_quadratic(rng, n) -> SphereQuadratic:
    variables = variable_names(n)
    evals = np.sort(rng.uniform(-3, 3, n))
    Qm = np.linalg.qr(rng.normal(size=(n, n)))[0]
    A = Qm @ np.diag(evals) @ Qm.T
    A = 0.5 * (A + A.T)
    f = parse(_quadratic_text(2.0 * A, np.zeros(n), variables), variables)
    return SphereQuadratic(f, sphere_constraint(n), A, [Qm[:, k].copy() for k in range(n)])


def random_two_constraints(rng, n):
    """Objective plus two random smooth constraints (targets arbitrary)."""
    f = random_smooth(rng, n, 2)
    cs = [ConstraintSpec(random_smooth(rng, n, 2), float(rng.uniform(-1, 1))) for _ in range(2)]
    return f, cs


def random_symmetric(rng, n, scale=1.0):
    X = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (X + X.T)
