"""Spectral classification of constrained stationary points.

The constrained Hessian always carries one zero mode along the direction the
weight scheme removes (``u_i / (dc/drho_i)``).  :func:`classify` drops that
mode and reads the verdict off the signs of the remaining eigenvalues; the
number of negative ones is the Morse index.

Two independent classifiers are provided for cross-checking:
:func:`bordered_oracle` (leading principal minors of the bordered Hessian)
and :func:`chart_oracle` (brute-force Hessian in a local chart).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .autodiff import EPS, jet
from .chessian import ConstrainedJet, Method, require_stationary, stationary_residual
from .errors import (AmbiguousExclusion, ChartFailure, InconclusiveMinorTest,
                     NotSymmetric, ZeroGradientComponent)
from .expr import Expr
from .projection import (ConstraintSpec, RetractionKind, WeightScheme,
                         excluded_weights, retraction_weights, u_weight)

SYMMETRY_TOL = 1e-8
JACOBI_TOL = 1e-12
MAX_SWEEPS = 50


@dataclass(frozen=True)
class Tolerances:
    """Thresholds used when turning a spectrum into a verdict."""

    zero_rel: float = 1e-7        # |lambda| <= zero_rel * max(1, spectral radius) counts as zero
    cosine: float = 0.999         # eigenvector / excluded-direction match
    stationarity: float = 1e-8    # |cgrad| / (1 + |grad f|)

    def zero_threshold(self, eigenvalues):
        radius = float(np.max(np.abs(eigenvalues))) if len(eigenvalues) else 0.0
        return self.zero_rel * max(1.0, radius)


DEFAULT_TOLERANCES = Tolerances()


# ---------------------------------------------------------------------------
# symmetric eigenproblem


@dataclass
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray           # column k belongs to values[k]
    sweeps: int = 0
    off_history: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    def pairs(self):
        return [(float(self.values[k]), self.vectors[:, k]) for k in range(len(self.values))]


def _off(A):
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def _canonical_sign(V):
    for k in range(V.shape[1]):
        col = V[:, k]
        big = np.flatnonzero(np.abs(col) > 1e-8)
        if big.size and col[big[0]] < 0:
            V[:, k] = -col
    return V


def eigensym(M) -> Spectrum:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues ascend; each eigenvector's first non-negligible component is
    positive, so identical input gives identical output.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix required, got shape {A.shape}")
    n = A.shape[0]
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e} * {scale:.3e}",
                           asymmetry=asym)
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    target = JACOBI_TOL * float(np.linalg.norm(A))
    history = [_off(A)]
    sweeps = 0
    while history[-1] > target and sweeps < MAX_SWEEPS:
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:   # theta^2 would overflow; t ~ 1 / (2 theta)
                    t = 0.5 / theta
                elif theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
        history.append(_off(A))
    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    return Spectrum(values[order], _canonical_sign(V[:, order]), sweeps, history)


# ---------------------------------------------------------------------------
# verdicts


class VerdictKind(enum.Enum):
    LOCAL_MIN = "LocalMin"
    LOCAL_MAX = "LocalMax"
    SADDLE = "Saddle"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    index: Optional[int] = None   # Morse index for saddles

    def __str__(self):
        if self.kind is VerdictKind.SADDLE and self.index is not None:
            return f"Saddle({self.index})"
        return self.kind.value

    @classmethod
    def parse(cls, text):
        if text.startswith("Saddle(") and text.endswith(")"):
            return cls(VerdictKind.SADDLE, int(text[7:-1]))
        return cls(VerdictKind(text))

    def same_kind(self, other):
        return self.kind is other.kind


def verdict_from(values, threshold) -> Verdict:
    values = np.asarray(values, dtype=float)
    if np.any(np.abs(values) <= threshold):
        return Verdict(VerdictKind.DEGENERATE)
    neg = int(np.sum(values < 0))
    if neg == 0:
        return Verdict(VerdictKind.LOCAL_MIN)
    if neg == len(values):
        return Verdict(VerdictKind.LOCAL_MAX)
    return Verdict(VerdictKind.SADDLE, neg)


@dataclass
class Classification:
    spectrum: List[Tuple[float, np.ndarray]]
    excluded: List[Tuple[int, float]]     # (index into spectrum, |cosine| with excluded direction)
    verdict: Verdict
    tolerances: Tolerances
    threshold: float
    direction: np.ndarray
    diagnostics: List[str] = field(default_factory=list)

    @property
    def retained(self):
        drop = {i for i, _ in self.excluded}
        return [pair for k, pair in enumerate(self.spectrum) if k not in drop]

    @property
    def retained_values(self):
        return np.array([v for v, _ in self.retained])

    @property
    def index(self):
        return self.verdict.index if self.verdict.kind is VerdictKind.SADDLE else \
            int(np.sum(self.retained_values < -self.threshold))


def excluded_direction(scheme: WeightScheme, constraint: ConstraintSpec, point,
                       kind: Optional[RetractionKind] = None):
    """Unit vector ``u_i / (dc/drho_i)`` removed by the weights in use.

    ``kind`` selects the weights of an exact retraction; otherwise the weight
    scheme's ``u`` is used.
    """
    point = np.asarray(point, dtype=float)
    g = jet(constraint.expr, point, 1).grad
    if kind is not None:
        u = retraction_weights(constraint, point, kind)
    else:
        u = u_weight(scheme, constraint, point, g)
    d = excluded_weights(u, g)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ZeroGradientComponent("excluded direction vanishes")
    return d / norm


def classify(M: ConstrainedJet, constraint: ConstraintSpec,
             tolerances: Tolerances = DEFAULT_TOLERANCES) -> Classification:
    """Verdict for a constrained Hessian computed at a stationary point."""
    require_stationary(constraint, M.point, M.stationarity, tolerances.stationarity)
    kind = M.kind if M.method is Method.RETRACTION else None
    direction = excluded_direction(M.scheme, constraint, M.point, kind)
    spec = eigensym(M.symmetric)
    values, vectors = spec.values, spec.vectors.copy()
    threshold = tolerances.zero_threshold(values)
    zeros = [k for k in range(len(values)) if abs(values[k]) <= threshold]
    excluded, notes = [], []
    if len(zeros) == 1:
        k = zeros[0]
        cos = abs(float(vectors[:, k] @ direction))
        excluded.append((k, cos))
        if cos < tolerances.cosine:
            notes.append(f"non-degenerate zero mode excluded with direction cosine {cos:.6f}")
    elif len(zeros) > 1:
        basis = vectors[:, zeros]
        coef = basis.T @ direction
        cos = float(np.linalg.norm(coef))
        if cos >= tolerances.cosine:
            # rotate the zero eigenspace so its first vector is the excluded direction
            first = coef / cos
            rest = np.linalg.qr(np.column_stack([first, np.eye(len(zeros))]))[0]
            rest[:, 0] *= np.sign(rest[:, 0] @ first)
            vectors[:, zeros] = basis @ rest[:, :len(zeros)]
            values[zeros] = [float(vectors[:, k] @ M.symmetric @ vectors[:, k]) for k in zeros]
            excluded.append((zeros[0], cos))
        else:
            notes.append(f"{AmbiguousExclusion.code}: {len(zeros)} near-zero eigenvalues, "
                         f"best direction match {cos:.6f}")
    else:
        notes.append("no zero eigenvalue found; nothing excluded")
    drop = {k for k, _ in excluded}
    retained = [values[k] for k in range(len(values)) if k not in drop]
    verdict = verdict_from(retained, threshold)
    spectrum = [(float(values[k]), vectors[:, k].copy()) for k in range(len(values))]
    return Classification(spectrum, excluded, verdict, tolerances, threshold, direction, notes)


# ---------------------------------------------------------------------------
# oracles


def _lagrangian_hessian(f: Expr, constraint: ConstraintSpec, point, tol):
    point = np.asarray(point, dtype=float)
    require_stationary(constraint, point, stationary_residual(f, constraint, point), tol)
    jf = jet(f, point, 2)
    jc = jet(constraint.expr, point, 2)
    mu = float(jc.grad @ jf.grad) / float(jc.grad @ jc.grad)
    return jf.hess - mu * jc.hess, jc.grad


def _minor_signs(L, g, order):
    n = len(g)
    L, g = L[np.ix_(order, order)], g[order]
    B = np.zeros((n + 1, n + 1))
    B[0, 1:] = B[1:, 0] = g
    B[1:, 1:] = L
    signs = []
    for r in range(3, n + 2):
        sub = B[:r, :r]
        det = float(np.linalg.det(sub))
        if abs(det) <= 1e-10 * float(np.linalg.norm(sub)) ** r:
            return None
        signs.append(np.sign(det))
    return signs


def _orderings(g):
    n = len(g)
    lead = list(np.argsort(-np.abs(g), kind="stable"))
    yield lead
    pool = itertools.permutations(range(n)) if n <= 6 else \
        (lead[k:] + lead[:k] for k in range(1, n))
    for perm in pool:
        if g[perm[0]] != 0.0:
            yield list(perm)


def bordered_oracle(f: Expr, constraint: ConstraintSpec, point,
                    tolerances: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
    """Leading-principal-minor test on the bordered Hessian ``[[0, g^T], [g, L]]``.

    The test needs every leading bordered minor to be non-zero, which depends
    on the variable order; orderings are tried (largest ``|g_i|`` first) until
    one qualifies.  Only the verdict kind is determined, not the Morse index.
    """
    L, g = _lagrangian_hessian(f, constraint, point, tolerances.stationarity)
    n = len(g)
    for order in _orderings(g):
        signs = _minor_signs(L, g, order)
        if signs is not None:
            break
    else:
        raise InconclusiveMinorTest("a bordered leading minor vanishes for every variable order")
    if all(s < 0 for s in signs):
        return Verdict(VerdictKind.LOCAL_MIN)
    # a minor over p variables has sign (-1)^p at a maximum
    if all(s == (-1) ** p for s, p in zip(signs, range(2, n + 1))):
        return Verdict(VerdictKind.LOCAL_MAX)
    return Verdict(VerdictKind.SADDLE)


def tangent_basis(grad):
    """Orthonormal basis of the complement of ``grad`` by modified Gram-Schmidt."""
    g = np.asarray(grad, dtype=float)
    n = len(g)
    kept = [g / np.linalg.norm(g)]
    for i in np.argsort(np.abs(g), kind="stable"):
        v = np.zeros(n)
        v[i] = 1.0
        for b in kept:
            v = v - (b @ v) * b
        for b in kept:
            v = v - (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            kept.append(v / norm)
        if len(kept) == n:
            break
    return np.column_stack(kept[1:])


@dataclass
class ChartResult:
    reduced: np.ndarray
    eigenvalues: np.ndarray
    verdict: Verdict
    index: int


def chart_oracle(f: Expr, constraint: ConstraintSpec, point,
                 tolerances: Tolerances = DEFAULT_TOLERANCES) -> ChartResult:
    """Reduced Hessian of ``f`` in a local chart of the constraint surface.

    ``phi(t) = point + T t + s(t) n`` with ``T`` a tangent basis, ``n`` the
    unit normal and ``s`` found by Newton so the constraint holds to ~1e-12.
    """
    point = np.asarray(point, dtype=float)
    _lagrangian_hessian(f, constraint, point, tolerances.stationarity)
    g = jet(constraint.expr, point, 1).grad
    normal = g / np.linalg.norm(g)
    T = tangent_basis(g)
    target = constraint.target
    ctol = 1e-12 * max(1.0, abs(target))

    def phi(t):
        y0 = point + T @ t
        s = 0.0
        for _ in range(60):
            y = y0 + s * normal
            r = constraint.expr.evaluate(y) - target
            slope = float(jet(constraint.expr, y, 1).grad @ normal)
            if slope == 0.0:
                break
            s -= r / slope
            if abs(r) <= ctol:   # one polishing step past the tolerance
                return y0 + s * normal
        raise ChartFailure("normal correction did not converge")

    m = T.shape[1]
    h = EPS ** 0.25 * (1.0 + float(np.max(np.abs(point))))

    def F(t):
        return f.evaluate(phi(np.asarray(t, dtype=float)))

    E = np.eye(m) * h
    f0 = F(np.zeros(m))
    R = np.empty((m, m))
    for i in range(m):
        R[i, i] = (F(E[i]) - 2.0 * f0 + F(-E[i])) / h ** 2
        for j in range(i + 1, m):
            R[i, j] = R[j, i] = (F(E[i] + E[j]) - F(E[i] - E[j])
                                 - F(E[j] - E[i]) + F(-E[i] - E[j])) / (4.0 * h ** 2)
    values = np.linalg.eigvalsh(R)
    verdict = verdict_from(values, tolerances.zero_threshold(values) if m else 0.0)
    return ChartResult(R, values, verdict, int(np.sum(values < 0)))
