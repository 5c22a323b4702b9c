"""Invariant suites: numerical self-checks run by ``condiff verify`` and the tests.

Each suite returns a :class:`SuiteResult` counting individual checks; a
suite passes when none of its checks fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .autodiff import check_jet, fd_hessian, fd_jacobian, jet, relative_deviation
from .chessian import (general_hessian, retraction_hessian, stationary_hessian,
                       require_stationary, stationary_residual, successive_hessian,
                       successive_third)
from .classify import bordered_oracle, chart_oracle, classify, eigensym
from .errors import CondiffError
from .expr import FloatOps, parse
from .projection import (HOMOGENEOUS, ORTHOGONAL, ConstraintSpec, RetractionKind,
                         constrained_gradient, excluded_weights, projection_kernel,
                         retract, u_weight)
from . import randgen


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    failures: List[str] = field(default_factory=list)
    worst: Optional[float] = None   # largest deviation seen, where a suite measures one
    summary: str = ""

    @property
    def passed(self):
        return self.checks > 0 and not self.failures

    def check(self, ok, message, metric=None):
        self.checks += 1
        if metric is not None and np.isfinite(metric):
            self.worst = float(metric) if self.worst is None else max(self.worst, float(metric))
        if not ok:
            self.failures.append(message)
        return ok

    def error(self, message):
        self.checks += 1
        self.failures.append(message)


def _stationary_points(problem):
    out = []
    for name, p in problem.points.items():
        try:
            require_stationary(problem.constraint, p,
                               stationary_residual(problem.objective, problem.constraint, p),
                               problem.tolerances.stationarity)
        except CondiffError:
            continue
        out.append((name, p))
    return out


# ---------------------------------------------------------------------------
# derivatives


def jets_vs_fd(rng, trials=50, problem=None, order=3) -> SuiteResult:
    """Automatic derivatives agree with the finite-difference oracle."""
    res = SuiteResult("jets_vs_fd")
    cases = []
    if problem is not None:
        for name, p in problem.points.items():
            cases.append((f"objective@{name}", problem.objective, p))
            for k, c in enumerate(problem.constraints):
                cases.append((f"constraint{k}@{name}", c.expr, p))
    for t in range(trials):
        n = int(rng.integers(1, 5))
        f = randgen.random_smooth(rng, n, depth=3)
        cases.append((f"random{t}", f, rng.uniform(-1.5, 1.5, n)))
    for label, f, p in cases:
        try:
            chk = check_jet(f, p, order)
        except CondiffError as exc:
            res.error(f"{label}: {exc.code}: {exc}")
            continue
        res.check(chk.passed, f"{label}: {chk.failures()}", max(chk.deviations.values()))
    return res


def vanishing(rng, problems=10, points=10, problem=None, third=True) -> SuiteResult:
    """Constrained derivatives of the constraint itself vanish."""
    res = SuiteResult("vanishing")
    cases = []
    if problem is not None:
        c = problem.constraint
        cases += [(f"{problem.source or 'problem'}@{name}", c, p) for name, p in problem.points.items()]
    for k in range(problems):
        n = int(rng.integers(2, 5))
        sp = randgen.smooth_problem(rng, n)
        for j in range(points):
            cases.append((f"random{k}.{j}", sp.constraint, randgen.regular_point(rng, sp.constraint)))
    for label, c, p in cases:
        try:
            g = jet(c.expr, p, 2)
            scale = max(1.0, float(np.max(np.abs(g.grad))), float(np.max(np.abs(g.hess))))
            cg = constrained_gradient(c.expr, c, p)
            ms = successive_hessian(c.expr, c, p).chess
            mg = general_hessian(c.expr, c, p).chess
        except CondiffError as exc:
            res.error(f"{label}: {exc.code}: {exc}")
            continue
        for what, val in (("gradient", cg), ("successive", ms), ("general", mg)):
            dev = float(np.max(np.abs(val)))
            res.check(dev <= 1e-9 * scale, f"{label}: {what} = {dev:.3e}", dev / scale)
        if third:
            dev = float(np.max(np.abs(successive_third(c.expr, c, p))))
            res.check(dev <= 1e-5 * scale, f"{label}: third = {dev:.3e}", dev / scale)
    return res


# ---------------------------------------------------------------------------
# kernels


def kernel_invariants(rng, trials=20, problem=None) -> SuiteResult:
    """Kernel annihilates the constraint gradient and excludes ``u / grad c``."""
    res = SuiteResult("kernel_invariants")
    cases = []
    if problem is not None:
        cases += [(name, problem.objective, problem.constraint, p) for name, p in problem.points.items()]
    for t in range(trials):
        n = int(rng.integers(2, 5))
        sp = randgen.smooth_problem(rng, n)
        p = randgen.regular_point(rng, sp.constraint)
        p = p if abs(np.sum(p)) > 0.1 else p + 0.5
        cases.append((f"random{t}", sp.objective, sp.constraint, p))
    for label, f, c, p in cases:
        g = jet(c.expr, p, 1).grad
        a = jet(f, p, 1).grad
        for scheme in (ORTHOGONAL, HOMOGENEOUS):
            try:
                P = projection_kernel(c, p, scheme)
                u = u_weight(scheme, c, p, g)
                d = excluded_weights(u, g)
            except CondiffError as exc:
                if scheme is HOMOGENEOUS:
                    continue
                res.error(f"{label}/{scheme.name}: {exc.code}: {exc}")
                continue
            s = max(1.0, float(np.linalg.norm(g)))
            res.check(np.max(np.abs(P @ g)) <= 1e-10 * s, f"{label}/{scheme.name}: P g != 0")
            res.check(np.max(np.abs(P @ P - P)) <= 1e-10 * max(1.0, np.max(np.abs(P))),
                      f"{label}/{scheme.name}: P not idempotent")
            cg = P @ a
            res.check(abs(cg @ d) <= 1e-10 * max(1.0, np.linalg.norm(cg) * np.linalg.norm(d)),
                      f"{label}/{scheme.name}: cgrad not orthogonal to u/g")
            if scheme is ORTHOGONAL:
                res.check(np.max(np.abs(P - P.T)) <= 1e-12, f"{label}: orthogonal P not symmetric")
    return res


def multi_constraint(rng, trials=50) -> SuiteResult:
    """Two-constraint kernel against the explicit formula; gradient orthogonality."""
    res = SuiteResult("multi_constraint")
    for t in range(trials):
        n = int(rng.integers(3, 6))
        f, cons = randgen.random_two_constraints(rng, n)
        p = rng.uniform(-1.5, 1.5, n)
        g1, g2 = (jet(c.expr, p, 1).grad for c in cons)
        Q11, Q12, Q22 = g1 @ g1, g1 @ g2, g2 @ g2
        det = Q11 * Q22 - Q12 ** 2
        if det <= 1e-8 * Q11 * Q22:
            continue
        # P[x, x'] with x the output index and x' the input index
        explicit = np.eye(n) - (Q22 * np.outer(g1, g1) - Q12 * np.outer(g2, g1)
                                - Q12 * np.outer(g1, g2) + Q11 * np.outer(g2, g2)) / det
        P = projection_kernel(cons, p)
        dev = float(np.max(np.abs(P - explicit)))
        res.check(dev <= 1e-12, f"case {t}: kernel deviation {dev:.3e}", dev)
        a = jet(f, p, 1).grad
        formula = a - g1 * (Q22 / det * (g1 @ a) - Q12 / det * (g2 @ a)) \
            - g2 * (Q11 / det * (g2 @ a) - Q12 / det * (g1 @ a))
        cg = constrained_gradient(f, cons, p)
        dev2 = float(np.max(np.abs(cg - formula))) / max(1.0, float(np.max(np.abs(a))))
        res.check(dev2 <= 1e-12, f"case {t}: gradient formula deviation {dev2:.3e}", dev2)
        for k, g in enumerate((g1, g2)):
            o = abs(float(cg @ g)) / max(1.0, np.linalg.norm(cg) * np.linalg.norm(g))
            res.check(o <= 1e-10, f"case {t}: cgrad . grad c{k + 1} = {o:.3e}", o)
    return res


def degree_zero(rng, trials=20, n_range=(2, 5)) -> SuiteResult:
    """Homogeneous weights with ``sum rho = N`` leave degree-0 gradients unchanged."""
    res = SuiteResult("degree_zero")
    for t in range(trials):
        n = int(rng.integers(*n_range))
        f = randgen.degree_zero_rational(rng, n)
        p = rng.uniform(0.5, 2.0, n)
        c = randgen.sum_constraint(n, float(np.sum(p)))
        full = jet(f, p, 1).grad
        cg = constrained_gradient(f, c, p, HOMOGENEOUS)
        dev = relative_deviation(cg, full)
        euler = abs(float(full @ p))
        res.check(dev <= 1e-9, f"case {t}: deviation {dev:.3e} (Euler residual {euler:.1e})", dev)
    return res


# ---------------------------------------------------------------------------
# constrained Hessians


def route_equivalence(problem, tol=1e-8) -> SuiteResult:
    """Successive, general and stationary Hessians coincide at stationary points."""
    res = SuiteResult("route_equivalence")
    f, c = problem.objective, problem.constraint
    for name, p in _stationary_points(problem):
        ms = successive_hessian(f, c, p).chess
        mg = general_hessian(f, c, p).chess
        mt = stationary_hessian(f, c, p).chess
        for label, a, b in (("successive/general", ms, mg), ("successive/stationary", ms, mt),
                            ("general/stationary", mg, mt)):
            dev = float(np.max(np.abs(a - b)))
            res.check(dev <= tol, f"{name}: {label} differ by {dev:.3e}", dev)
    return res


def _successive_field(f, c):
    def field_fn(x):
        return constrained_gradient(f, c, x)
    return field_fn


def _order2_composite(f, c):
    def composite(x):
        return f.evaluate(retract(x, c, RetractionKind.ORDER2))
    return composite


def _exact_composite(f, c, base, kind):
    from .projection import retraction_map

    def composite(x):
        return f.evaluate(retraction_map(FloatOps, list(x), c, kind, base=base))
    return composite


def routes_vs_fd(rng, instances=20, tol=1e-4) -> SuiteResult:
    """Each Hessian route against finite differences of the map it differentiates.

    * successive: ``P (d/drho G)^T`` with ``G`` the constrained-gradient field;
    * general: Hessian of ``f`` composed with the second-order retraction;
    * retraction: Hessian of ``f`` composed with exact scaling onto a sphere;
    * stationary: ``P (H_f - mu H_c) P`` at eigenvector stationary points on a sphere.
    """
    res = SuiteResult("routes_vs_fd")
    for t in range(instances):
        n = int(rng.integers(2, 5))
        sp = randgen.smooth_problem(rng, n)
        f = sp.objective
        p = randgen.regular_point(rng, sp.constraint)
        c = ConstraintSpec(sp.constraint.expr, sp.constraint.expr.evaluate(p))
        P = projection_kernel(c, p)
        fd = P @ fd_jacobian(_successive_field(f, c), p).T
        dev = relative_deviation(successive_hessian(f, c, p).chess, fd)
        res.check(dev <= tol, f"successive {t}: {dev:.3e}", dev)
        fd = fd_hessian(_order2_composite(f, c), p)
        dev = relative_deviation(general_hessian(f, c, p).chess, fd)
        res.check(dev <= tol, f"general {t}: {dev:.3e}", dev)
        s = randgen.sphere_constraint(n)
        q = rng.normal(size=n)
        q /= np.linalg.norm(q)
        fd = fd_hessian(_exact_composite(f, s, q, RetractionKind.EXACT_SCALING), q)
        dev = relative_deviation(retraction_hessian(f, s, q).chess, fd)
        res.check(dev <= tol, f"retraction {t}: {dev:.3e}", dev)
        sq = randgen.sphere_quadratic(rng, n)
        v = sq.points[int(rng.integers(n))]
        mu = float(v @ sq.A @ v)
        lag = parse(f"({sq.objective.source}) - ({float(mu)!r}) * ({sq.constraint.expr.source})",
                    sq.objective.variables)
        Pv = projection_kernel(sq.constraint, v)
        fd = Pv @ fd_hessian(lag, v) @ Pv
        dev = relative_deviation(stationary_hessian(sq.objective, sq.constraint, v).chess, fd)
        res.check(dev <= tol, f"stationary {t}: {dev:.3e}", dev)
    return res


# ---------------------------------------------------------------------------
# retractions


EPSILONS = np.logspace(-1, -3, 5)
# asymptotic window used by ``verify`` at arbitrary base points
TAIL_EPSILONS = np.logspace(-2, -3, 3)

MIN_SLOPES = {RetractionKind.ORDER1: 1.9, RetractionKind.ORDER2: 2.85, RetractionKind.ORDER3: 3.8}


def remainder_slope(constraint, base, direction, kind, epsilons=EPSILONS, digits=None):
    """Least-squares log-log slope of ``|c(retract(base + eps d)) - target|``.

    With ``digits`` the displaced point, the retraction update and the
    residual are carried in that many decimal digits; otherwise in double
    precision, which floors the residual near 1e-16.
    """
    if digits is None:
        errs = np.array([abs(constraint.value(retract(base + e * direction, constraint, kind))
                             - constraint.target) for e in epsilons])
    else:
        from .mpops import MpOps

        errs = []
        with MpOps.precision(digits):
            for e in epsilons:
                x = [MpOps.const(b) + MpOps.const(e) * MpOps.const(v)
                     for b, v in zip(base, direction)]
                out = retract(x, constraint, kind, ops=MpOps)
                val = constraint.expr.apply(MpOps, list(out)) - MpOps.const(constraint.target)
                errs.append(abs(float(val)))
        errs = np.array(errs)
    if np.any(errs == 0.0):
        return np.inf, errs
    return float(np.polyfit(np.log(epsilons), np.log(errs), 1)[0]), errs


def transverse_directions(rng, constraint, base, count, min_cos=0.3):
    """Random unit directions whose cosine with the constraint normal is at least ``min_cos``.

    Along nearly tangent directions the violation itself grows like eps^2
    for eps above ``|cos|`` times the curvature length, so the eps-slope
    there would measure the curve, not the retraction.
    """
    g = jet(constraint.expr, base, 1).grad
    normal = g / np.linalg.norm(g)
    out = []
    while len(out) < count:
        d = rng.normal(size=len(base))
        d /= np.linalg.norm(d)
        if abs(float(d @ normal)) >= min_cos:
            out.append(d)
    return out


def retraction_orders(rng, constraints_and_bases, directions=10, kinds=None,
                      digits=40, epsilons=EPSILONS, min_cos=0.3, min_slopes=None) -> SuiteResult:
    """Remainder slopes of the order-1/2/3 retractions meet their minimum orders."""
    res = SuiteResult("retraction_orders")
    kinds = kinds or list(MIN_SLOPES)
    min_slopes = min_slopes or MIN_SLOPES
    lowest = {}
    for label, c, bases in constraints_and_bases:
        for b_idx, base in enumerate(bases):
            base = np.asarray(base, dtype=float)
            for k, d in enumerate(transverse_directions(rng, c, base, directions, min_cos)):
                for kind in kinds:
                    slope, _ = remainder_slope(c, base, d, kind, epsilons, digits)
                    lowest[kind] = min(lowest.get(kind, np.inf), slope)
                    res.check(slope >= min_slopes[kind],
                              f"{label}[{b_idx}] dir {k} {kind.value}: slope {slope:.3f}")
    res.summary = "min slopes " + ", ".join(f"{k.value} {v:.3f}" for k, v in lowest.items())
    return res


# ---------------------------------------------------------------------------
# classification


def eigensym_suite(rng, trials=20) -> SuiteResult:
    res = SuiteResult("eigensym")
    for t in range(trials):
        n = int(rng.integers(1, 13))
        M = randgen.random_symmetric(rng, n, scale=float(rng.uniform(0.1, 10)))
        spec = eigensym(M)
        V, lam = spec.vectors, spec.values
        res.check(np.max(np.abs(V.T @ V - np.eye(n))) <= 1e-9, f"case {t}: not orthonormal")
        recon = float(np.max(np.abs(V @ np.diag(lam) @ V.T - M)))
        res.check(recon <= 1e-10 * max(1.0, np.max(np.abs(M))), f"case {t}: reconstruction {recon:.3e}")
        res.check(bool(np.all(np.diff(lam) >= 0)), f"case {t}: not ascending")
        res.check(spec.sweeps <= 30, f"case {t}: {spec.sweeps} sweeps")
        hist = spec.off_history
        res.check(all(b <= a for a, b in zip(hist, hist[1:])), f"case {t}: off-diagonal mass rose")
    return res


def _rel_match(a, b, tol):
    a, b = np.sort(a), np.sort(b)
    return len(a) == len(b) and bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))


def oracle_agreement(rng, trials=50, problem=None, eig_tol=1e-4) -> SuiteResult:
    """classify, bordered_oracle and chart_oracle agree; retained spectrum matches the chart."""
    res = SuiteResult("oracle_agreement")
    cases = []
    if problem is not None:
        cases += [(name, problem.objective, problem.constraint, p, None)
                  for name, p in _stationary_points(problem)]
    for t in range(trials):
        n = int(rng.integers(2, 6))
        q = randgen.quadratic_linear(rng, n)
        cases.append((f"quadratic{t}", q.objective, q.constraint, q.point, q.ground_truth))
    for label, f, c, p, truth in cases:
        try:
            cl = classify(successive_hessian(f, c, p), c)
            border = bordered_oracle(f, c, p)
            chart = chart_oracle(f, c, p)
        except CondiffError as exc:
            res.error(f"{label}: {exc.code}: {exc}")
            continue
        res.check(cl.verdict == chart.verdict and cl.verdict.same_kind(border),
                  f"{label}: classify {cl.verdict}, bordered {border}, chart {chart.verdict}")
        if truth is not None:
            res.check(str(cl.verdict) == truth, f"{label}: {cl.verdict} but exact {truth}")
        res.check(_rel_match(cl.retained_values, chart.eigenvalues, eig_tol),
                  f"{label}: retained {cl.retained_values} vs chart {chart.eigenvalues}")
    return res


# ---------------------------------------------------------------------------
# driver


def run_all(problem, rng, trials=None) -> List[SuiteResult]:
    """All suites, with randomized counts scaled by ``trials`` (default: full size)."""
    scale = 1.0 if trials is None else max(1, int(trials)) / 50.0

    def count(full):
        return max(1, int(round(full * scale)))

    unit = [v / np.linalg.norm(v) for v in rng.normal(size=(2, 3))]
    bases = [("problem", problem.constraint, [p for _, p in _stationary_points(problem)]
              or list(problem.points.values())),
             ("sphere", randgen.sphere_constraint(3), unit)]
    suites: List[Tuple[str, Callable[[], SuiteResult]]] = [
        ("jets_vs_fd", lambda: jets_vs_fd(rng, count(50), problem)),
        ("vanishing", lambda: vanishing(rng, count(10), 10, problem)),
        ("kernel_invariants", lambda: kernel_invariants(rng, count(20), problem)),
        ("multi_constraint", lambda: multi_constraint(rng, count(50))),
        ("degree_zero", lambda: degree_zero(rng, count(20))),
        ("route_equivalence", lambda: route_equivalence(problem)),
        ("routes_vs_fd", lambda: routes_vs_fd(rng, count(20))),
        ("retraction_orders", lambda: retraction_orders(rng, bases, directions=count(10),
                                                        epsilons=TAIL_EPSILONS, min_cos=0.05)),
        ("eigensym", lambda: eigensym_suite(rng, count(20))),
        ("oracle_agreement", lambda: oracle_agreement(rng, count(50), problem)),
    ]
    out = []
    for name, suite in suites:
        try:
            out.append(suite())
        except CondiffError as exc:
            r = SuiteResult(name)
            r.error(f"{exc.code}: {exc}")
            out.append(r)
    return out
