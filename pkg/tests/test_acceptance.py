"""Acceptance criteria 1-11, each at its stated tolerance.

Every criterion prints one ``PASS``/``FAIL`` line; the lines are repeated in
the pytest terminal summary.  ``python tests/test_acceptance.py`` runs them
without pytest.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import (RETRACTION_P11M1, STATIONARY_POINTS, SUCCESSIVE_P11M1,  # noqa: E402
                      SUCCESSIVE_P333)
from condiff import randgen, verify  # noqa: E402
from condiff.autodiff import jet  # noqa: E402
from condiff.chessian import retraction_hessian, successive_hessian  # noqa: E402
from condiff.classify import Verdict, VerdictKind, classify, eigensym  # noqa: E402
from condiff.probio import bundled_problem_path, load_problem  # noqa: E402
from condiff.projection import constrained_gradient, projection_kernel  # noqa: E402
from condiff.solver import kkt_residual, multistart, same_point  # noqa: E402

SEED = 20240601
RESULTS = []
SADDLES = ["P11m1", "P1m11", "Pm111"]


def _problem():
    return load_problem(bundled_problem_path())


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _suite_detail(*suites):
    parts = []
    for s in suites:
        worst = "" if s.worst is None else f", worst {s.worst:.2e}"
        parts.append(f"{s.name} {s.checks - len(s.failures)}/{s.checks}{worst}"
                     + (f" [{s.summary}]" if s.summary else ""))
        parts += [f"  {m}" for m in s.failures[:3]]
    return "; ".join(parts)


# ---------------------------------------------------------------------------
# criteria


def criterion_1():
    """Golden matrices within 1e-9, runtime < 1 s."""
    problem = _problem()
    f, c = problem.objective, problem.constraint
    start = time.perf_counter()
    dev = [float(np.max(np.abs(successive_hessian(f, c, [3, 3, 3]).chess - SUCCESSIVE_P333))),
           float(np.max(np.abs(successive_hessian(f, c, [1, 1, -1]).chess - SUCCESSIVE_P11M1))),
           float(np.max(np.abs(retraction_hessian(f, c, [1, 1, -1]).chess - RETRACTION_P11M1)))]
    elapsed = time.perf_counter() - start
    ok = max(dev) <= 1e-9 and elapsed < 1.0
    return ok, f"max deviation {max(dev):.2e} (<= 1e-9), {elapsed * 1e3:.1f} ms (< 1 s)"


def criterion_2():
    """Golden spectra within 1e-8; retraction eigenvectors with cosine >= 1 - 1e-9."""
    problem = _problem()
    f, c = problem.objective, problem.constraint
    cases = [(successive_hessian(f, c, [3, 3, 3]).chess, [0, 36, 36]),
             (successive_hessian(f, c, [1, 1, -1]).chess, [-4, 0, 12]),
             (retraction_hessian(f, c, [1, 1, -1]).chess, [-36, 0, 12])]
    dev = 0.0
    for M, expected in cases:
        dev = max(dev, float(np.max(np.abs(eigensym(0.5 * (M + M.T)).values - expected))))
    vectors = eigensym(cases[2][0]).vectors
    cosines = [abs(float(vectors[:, k] @ _unit(v)))
               for k, v in enumerate([(1, 1, 2), (1, 1, -1), (1, -1, 0)])]
    ok = dev <= 1e-8 and min(cosines) >= 1 - 1e-9
    return ok, f"eigenvalue deviation {dev:.2e} (<= 1e-8), min eigenvector cosine 1 - {1 - min(cosines):.1e}"


def criterion_3():
    """Verdicts and excluded zero modes under the successive and retraction routes."""
    problem = _problem()
    f, c = problem.objective, problem.constraint
    expected = {"P333": Verdict(VerdictKind.LOCAL_MIN)}
    expected.update({name: Verdict(VerdictKind.SADDLE, 1) for name in SADDLES})
    wrong = []
    for name, p in STATIONARY_POINTS.items():
        for route, direction in ((successive_hessian, _unit(-1.0 / p ** 2)),
                                 (retraction_hessian, _unit(-p))):
            cl = classify(route(f, c, p), c)
            if cl.verdict != expected[name]:
                wrong.append(f"{name}/{route.__name__}: {cl.verdict}")
            if len(cl.excluded) != 1:
                wrong.append(f"{name}/{route.__name__}: {len(cl.excluded)} excluded")
                continue
            k, cos = cl.excluded[0]
            if abs(cl.spectrum[k][0]) > cl.threshold or abs(cl.spectrum[k][1] @ direction) < 0.999:
                wrong.append(f"{name}/{route.__name__}: excluded mode {cl.spectrum[k][0]:.2e}")
    ok = not wrong
    return ok, "LocalMin at P333, Saddle(1) at the three others, on both routes" if ok else "; ".join(wrong)


def criterion_4():
    """Multistart recovers exactly the four points with KKT residual <= 1e-10, < 10 s."""
    problem = _problem()
    f = problem.objective
    start = time.perf_counter()
    points = multistart(f, problem.constraints, [[-3.0, 5.0]] * 3, 400, 42)
    elapsed = time.perf_counter() - start
    matched = all(sum(same_point(sp.coords, p) for sp in points) == 1
                  for p in STATIONARY_POINTS.values())
    worst = max(float(np.max(np.abs(kkt_residual(f, problem.constraints, sp.coords,
                                                  sp.multipliers)))) for sp in points)
    ok = len(points) == 4 and matched and worst <= 1e-10 and elapsed < 10.0
    return ok, (f"{len(points)} points, all four matched: {matched}, worst KKT residual "
                f"{worst:.1e} (<= 1e-10), {elapsed:.2f} s (< 10 s)")


def criterion_5():
    """Successive, general and stationary Hessians agree within 1e-8 at the four points."""
    res = verify.route_equivalence(_problem(), tol=1e-8)
    ok = res.passed and res.checks == 12
    return ok, _suite_detail(res)


def criterion_6():
    """Vanishing constrained derivatives of c at 100 points of 10 random problems."""
    res = verify.vanishing(np.random.default_rng(SEED + 6), problems=10, points=10)
    ok = res.passed and res.checks == 400
    return ok, _suite_detail(res) + " (gradient/Hessians <= 1e-9 scale, third <= 1e-5 scale)"


def criterion_7():
    """Retraction remainder slopes over eps in 1e-1..1e-3, 10 directions per constraint."""
    rng = np.random.default_rng(SEED + 7)
    problem = _problem()
    sphere_point = _unit(rng.normal(size=3))
    res = verify.retraction_orders(
        rng, [("reciprocal", problem.constraint, [np.array([3.0, 3.0, 3.0])]),
              ("sphere", randgen.sphere_constraint(3), [sphere_point])],
        directions=10, epsilons=verify.EPSILONS, digits=40, min_cos=0.3)
    ok = res.passed and res.checks == 60
    return ok, _suite_detail(res) + " (thresholds 1.9 / 2.85 / 3.8)"


def criterion_8():
    """classify, bordered and chart oracles agree; retained spectra match within 1e-4."""
    res = verify.oracle_agreement(np.random.default_rng(SEED + 8), trials=50,
                                  problem=_problem(), eig_tol=1e-4)
    ok = res.passed and res.checks == 4 * 2 + 50 * 3
    return ok, _suite_detail(res)


def criterion_9():
    """check_jet on 50 random pairs; every Hessian route against fd on 20 instances."""
    rng = np.random.default_rng(SEED + 9)
    jets = verify.jets_vs_fd(rng, trials=50)
    routes = verify.routes_vs_fd(rng, instances=20, tol=1e-4)
    ok = jets.passed and jets.checks == 50 and routes.passed and routes.checks == 80
    return ok, _suite_detail(jets, routes)


def criterion_10():
    """Two-constraint kernel vs the explicit inverse-Gram formula; orthogonality."""
    rng = np.random.default_rng(SEED + 10)
    kernel_dev, orth = 0.0, 0.0
    instances = 0
    while instances < 50:
        n = int(rng.integers(3, 6))
        f, cons = randgen.random_two_constraints(rng, n)
        p = rng.uniform(-1.5, 1.5, n)
        g1, g2 = (jet(c.expr, p, 1).grad for c in cons)
        Q11, Q12, Q22 = g1 @ g1, g1 @ g2, g2 @ g2
        det = Q11 * Q22 - Q12 ** 2
        if det <= 1e-8 * Q11 * Q22:
            continue   # nearly parallel gradients: the Gram inverse is ill-conditioned
        instances += 1
        explicit = np.eye(n) - (Q22 * np.outer(g1, g1) - Q12 * np.outer(g2, g1)
                                - Q12 * np.outer(g1, g2) + Q11 * np.outer(g2, g2)) / det
        kernel_dev = max(kernel_dev, float(np.max(np.abs(projection_kernel(cons, p) - explicit))))
        cg = constrained_gradient(f, cons, p)
        for g in (g1, g2):
            orth = max(orth, abs(float(cg @ g)))
    ok = kernel_dev <= 1e-12 and orth <= 1e-10
    return ok, (f"50 instances: kernel deviation {kernel_dev:.1e} (<= 1e-12), "
                f"max |cgrad . grad c_k| {orth:.1e} (<= 1e-10)")


def criterion_11():
    """Homogeneous scheme on sum(rho) = N leaves degree-0 gradients unchanged."""
    res = verify.degree_zero(np.random.default_rng(SEED + 11), trials=20)
    ok = res.passed and res.checks == 20
    return ok, _suite_detail(res) + " (<= 1e-9 relative)"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


def run_criterion(number):
    ok, detail = CRITERIA[number - 1]()
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    RESULTS.append(line)
    return ok, line


@pytest.mark.parametrize("number", range(1, len(CRITERIA) + 1))
def test_criterion(number):
    ok, line = run_criterion(number)
    assert ok, line


if __name__ == "__main__":
    failed = sum(not run_criterion(k)[0] for k in range(1, len(CRITERIA) + 1))
    sys.exit(1 if failed else 0)
