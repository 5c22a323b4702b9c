"""Equality-constrained stationary points by damped Newton on the KKT system."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import jet
from .errors import (CondiffError, DomainError, MaxIterations, NoConvergedPoints,
                     SingularKKTMatrix)
from .expr import Expr, FloatOps
from .projection import ConstraintSpec

_GUARD_OFFSETS = (-1.0, -0.5, 0.0, 0.5, 1.0)


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10            # max-norm of the KKT residual
    max_iter: int = 200
    min_step: float = 2.0 ** -30
    guard: float = 0.05           # keep this far from expression singularities
    tau0: float = 1e-8            # first Levenberg shift
    tau_max: float = 1e2
    cond_max: float = 1e14
    diverge: float = 1e8          # give up once |x| exceeds this
    stall_window: int = 10        # give up when the residual norm has not
    stall_factor: float = 0.9     # dropped by this factor within the window


@dataclass
class StationaryPoint:
    coords: np.ndarray
    multipliers: np.ndarray
    residual: float
    iterations: int
    seed_index: Optional[int] = None


def _as_list(constraints):
    if isinstance(constraints, ConstraintSpec):
        return [constraints]
    return list(constraints)


def kkt_residual(f: Expr, constraints, point, multipliers):
    """``(grad f - sum mu_i grad c_i, c_i - target_i)``."""
    cons = _as_list(constraints)
    point = np.asarray(point, dtype=float)
    mu = np.atleast_1d(np.asarray(multipliers, dtype=float))
    r = jet(f, point, 1).grad.copy()
    tail = []
    for m, c in zip(mu, cons):
        jc = jet(c.expr, point, 1)
        r -= m * jc.grad
        tail.append(jc.value - c.target)
    return np.concatenate([r, tail])


class DomainGuard:
    """Rejects points within ``margin`` of a singularity along any coordinate axis.

    A singularity is a zero (or an evaluation failure) of a denominator, a
    negative-power base, or a ``log``/``sqrt`` argument; it is detected as a
    sign change among a few axis-parallel samples.
    """

    def __init__(self, exprs: Sequence[Expr], margin: float):
        self.parts = [(p, [p.variables.index(v) for v in p.vars])
                      for e in exprs for p in e.singular_parts()]
        self.margin = margin

    def admits(self, x):
        if not self.parts or self.margin <= 0:
            return True
        x = [float(v) for v in x]
        offsets = [self.margin * off for off in _GUARD_OFFSETS]
        for part, axes in self.parts:
            for i in axes:
                y = list(x)
                signs = set()
                for off in offsets:
                    y[i] = x[i] + off
                    try:
                        v = part.apply(FloatOps, y)
                    except (DomainError, ZeroDivisionError, OverflowError, ValueError):
                        return False
                    signs.add(v > 0.0 if v != 0.0 else None)
                if len(signs) != 1 or None in signs:
                    return False
        return True


def _evaluate_all(f, cons, x, mu, order):
    jf = jet(f, x, order)
    jcs = [jet(c.expr, x, order) for c in cons]
    r = jf.grad - sum(m * jc.grad for m, jc in zip(mu, jcs))
    F = np.concatenate([r, [jc.value - c.target for jc, c in zip(jcs, cons)]])
    return F, jf, jcs


def _kkt_matrix(jf, jcs, mu, tau):
    n, k = len(jf.grad), len(jcs)
    G = np.array([jc.grad for jc in jcs])
    H = jf.hess - sum(m * jc.hess for m, jc in zip(mu, jcs)) + tau * np.eye(n)
    J = np.zeros((n + k, n + k))
    J[:n, :n] = H
    J[:n, n:] = -G.T
    J[n:, :n] = G
    return J


def _newton_step(jf, jcs, mu, F, opts):
    tau = 0.0
    cond = np.inf
    while True:
        J = _kkt_matrix(jf, jcs, mu, tau)
        cond = np.linalg.cond(J)
        if np.isfinite(cond) and cond <= opts.cond_max:
            return np.linalg.solve(J, -F)
        tau = opts.tau0 if tau == 0.0 else tau * 10.0
        if tau > opts.tau_max:
            raise SingularKKTMatrix(f"KKT matrix singular (condition {cond:.3e})", condition=cond)


def newton_kkt(f: Expr, constraints, start, options: NewtonOptions = NewtonOptions(),
               multipliers=None) -> StationaryPoint:
    """Damped Newton iteration on the KKT equations from ``start``.

    The step is halved until the residual norm decreases and the trial point
    stays inside the domain guard.
    """
    cons = _as_list(constraints)
    k = len(cons)
    x = np.asarray(start, dtype=float).copy()
    guard = DomainGuard([f] + [c.expr for c in cons], options.guard)
    if not guard.admits(x):
        raise DomainError("start lies within the guard band of a singularity")
    if multipliers is None:
        G = np.array([jet(c.expr, x, 1).grad for c in cons])
        mu = np.linalg.lstsq(G.T, jet(f, x, 1).grad, rcond=None)[0]
    else:
        mu = np.atleast_1d(np.asarray(multipliers, dtype=float)).copy()
    F, jf, jcs = _evaluate_all(f, cons, x, mu, 2)
    best, best_it = np.inf, 0
    for it in range(options.max_iter + 1):
        res = float(np.max(np.abs(F)))
        if res <= options.tol:
            return StationaryPoint(x, mu, res, it)
        if it == options.max_iter:
            break
        norm = float(np.linalg.norm(F))
        if norm < options.stall_factor * best:
            best, best_it = norm, it
        elif it - best_it >= options.stall_window:
            raise MaxIterations(f"residual stagnated at {res:.3e}", iterations=it)
        step = _newton_step(jf, jcs, mu, F, options)
        alpha = 1.0
        accepted = False
        saw_admissible = False
        while alpha >= options.min_step:
            xt = x + alpha * step[:-k]
            mt = mu + alpha * step[-k:]
            if guard.admits(xt):
                try:
                    Ft = _evaluate_all(f, cons, xt, mt, 1)[0]
                except DomainError:
                    Ft = None
                if Ft is not None and np.all(np.isfinite(Ft)):
                    saw_admissible = True
                    if np.linalg.norm(Ft) < norm:
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            if not saw_admissible:
                raise DomainError("no admissible step inside the domain guard")
            raise MaxIterations(f"line search stalled at residual {res:.3e}", iterations=it)
        x, mu = xt, mt
        F, jf, jcs = _evaluate_all(f, cons, x, mu, 2)
        if float(np.max(np.abs(x))) > options.diverge:
            raise MaxIterations("iterates diverged", iterations=it)
    raise MaxIterations(f"no convergence in {options.max_iter} iterations "
                        f"(residual {float(np.max(np.abs(F))):.3e})", iterations=options.max_iter)


@dataclass
class MultistartResult:
    points: List[StationaryPoint]
    failures: Counter = field(default_factory=Counter)
    starts: int = 0


def _sample_start(rng, lo, hi, guard, exprs, tries=200):
    for _ in range(tries):
        x = lo + (hi - lo) * rng.random(len(lo))
        if not guard.admits(x):
            continue
        try:
            for e in exprs:
                e.evaluate(x)
        except DomainError:
            continue
        return x
    return None


def same_point(a, b, rel=1e-6):
    return float(np.max(np.abs(a - b))) <= rel * (1.0 + float(np.max(np.abs(a))))


def dedup(points: Sequence[StationaryPoint], rel=1e-6) -> List[StationaryPoint]:
    """Merge coincident points (first occurrence wins), sorted lexicographically."""
    kept: List[StationaryPoint] = []
    for p in sorted(points, key=lambda s: (s.seed_index is None, s.seed_index or 0)):
        if not any(same_point(q.coords, p.coords, rel) for q in kept):
            kept.append(p)
    return sorted(kept, key=lambda s: tuple(s.coords))


def multistart(f: Expr, constraints, box, count: int, seed: int = 0,
               options: NewtonOptions = NewtonOptions(), detail=False):
    """Run :func:`newton_kkt` from ``count`` seeded uniform starts in ``box``.

    Starts that are undefined or inside the domain guard are resampled.
    Returns the deduplicated points, or a :class:`MultistartResult` when
    ``detail`` is set.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cons = _as_list(constraints)
    box = np.asarray(box, dtype=float)
    if box.shape != (f.n, 2) or not np.all(np.isfinite(box)) or np.any(box[:, 1] < box[:, 0]):
        raise ValueError(f"box must be {f.n} finite [lo, hi] pairs")
    lo, hi = box[:, 0], box[:, 1]
    exprs = [f] + [c.expr for c in cons]
    guard = DomainGuard(exprs, options.guard)
    rng = np.random.default_rng(seed)
    found, failures = [], Counter()
    for i in range(count):
        x0 = _sample_start(rng, lo, hi, guard, exprs)
        if x0 is None:
            failures["NoAdmissibleStart"] += 1
            continue
        try:
            sp = newton_kkt(f, cons, x0, options)
        except CondiffError as exc:
            failures[exc.code] += 1
            continue
        except np.linalg.LinAlgError:
            failures["SingularKKTMatrix"] += 1
            continue
        sp.seed_index = i
        found.append(sp)
    points = dedup(found)
    if not points:
        raise NoConvergedPoints(f"no start converged: {dict(failures)}", failures=dict(failures))
    if detail:
        return MultistartResult(points, failures, count)
    return points
