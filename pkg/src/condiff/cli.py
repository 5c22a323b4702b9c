"""Command-line interface: ``condiff analyze | solve | verify | compare``.

Exit codes: 0 success, 1 numerical or input error, 2 a requested point is
not stationary, 3 classification routes disagree (``compare``), 64 usage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, verify
from .chessian import (default_retraction, general_hessian, retraction_hessian,
                       stationary_hessian, successive_hessian)
from .classify import VerdictKind, bordered_oracle, chart_oracle, classify
from .errors import CondiffError, NotStationary
from .probio import (PointRecord, Report, bundled_problem_path, error_record,
                     load_problem)
from .projection import HOMOGENEOUS, ORTHOGONAL, Orthogonal
from .solver import multistart

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_STATIONARY = 2
EXIT_DISAGREE = 3
EXIT_USAGE = 64

METHODS = ("successive", "general", "retraction", "stationary")
SCHEMES = {"orthogonal": ORTHOGONAL, "homogeneous": HOMOGENEOUS}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit status 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condiff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"condiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="constrained Hessian and verdict at named points")
    p.add_argument("file")
    p.add_argument("--point", action="append", metavar="NAME|csv",
                   help="named point or comma-separated coordinates (repeatable; default: all)")
    p.add_argument("--method", choices=METHODS, default="successive")
    p.add_argument("--scheme", choices=sorted(SCHEMES))
    p.add_argument("--json", metavar="out")

    p = sub.add_parser("solve", help="locate stationary points by multistart Newton")
    p.add_argument("file")
    p.add_argument("--starts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--classify", action="store_true")
    p.add_argument("--json", metavar="out")

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("file")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="verdicts of every classification route side by side")
    p.add_argument("file")
    p.add_argument("--point", required=True, metavar="NAME|csv")
    return parser


def resolve_path(path) -> Path:
    """``path`` itself, or the bundled problem file of the same name."""
    path = Path(path)
    if path.exists():
        return path
    bundled = bundled_problem_path(path.name)
    if bundled.exists():
        return bundled
    raise UsageError(f"no such problem file: {path}")


def _point(problem, spec):
    try:
        return problem.point(spec)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def constrained_jet(problem, point, method, scheme=None):
    """Constrained Hessian of the problem objective at ``point`` by ``method``."""
    scheme = problem.scheme if scheme is None else scheme
    f, c = problem.objective, problem.constraint
    if method == "successive":
        return successive_hessian(f, c, point, scheme)
    if method == "general":
        return general_hessian(f, c, point)
    if method == "retraction":
        return retraction_hessian(f, c, point)
    return stationary_hessian(f, c, point, scheme, problem.tolerances.stationarity)


def _fmt(x, width=12):
    return f"{x:>{width}.6g}"


def _matrix_lines(M, indent="    "):
    return [indent + " ".join(_fmt(v) for v in row) for row in M]


def _emit(report: Report, json_out, lines):
    if json_out:
        report.write(json_out)
    else:
        print("\n".join(lines))


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args) -> int:
    problem = load_problem(resolve_path(args.file))
    scheme = SCHEMES[args.scheme] if args.scheme else None
    names = args.point or list(problem.points)
    if not names:
        raise UsageError("the problem has no named points; pass --point")
    report = Report("analyze", problem.digest)
    lines = []
    status = EXIT_OK
    for name in names:
        point = _point(problem, name)
        try:
            cj = constrained_jet(problem, point, args.method, scheme)
            cls = classify(cj, problem.constraint, problem.tolerances)
        except CondiffError as exc:
            report.errors.append(error_record(exc, point=name))
            lines.append(f"{name:<10} {exc.code}: {exc}")
            code = EXIT_NOT_STATIONARY if isinstance(exc, NotStationary) else EXIT_ERROR
            status = code if status == EXIT_OK else min(status, code)
            continue
        record = PointRecord.build(name, cj, cls)
        report.points.append(record)
        lines.append(f"{name:<10} method={record.method} scheme={record.scheme} "
                     f"mu={record.mu:.10g} residual={record.residual:.3e} "
                     f"verdict={record.verdict}")
        lines.extend(_matrix_lines(cj.chess))
        values = " ".join(_fmt(v) for v, _ in cls.spectrum)
        lines.append(f"    eigenvalues: {values}")
        for k, cos in cls.excluded:
            lines.append(f"    excluded: eigenvalue {cls.spectrum[k][0]:.3g} "
                         f"(direction cosine {cos:.12f})")
        lines.extend(f"    note: {d}" for d in cls.diagnostics)
    _emit(report, args.json, lines)
    return status


def cmd_solve(args) -> int:
    problem = load_problem(resolve_path(args.file))
    if problem.solver is None:
        raise UsageError("the problem file has no solver section (box)")
    cfg = problem.solver
    starts = cfg.starts if args.starts is None else args.starts
    seed = cfg.seed if args.seed is None else args.seed
    if starts < 1:
        raise UsageError("--starts must be positive")
    result = multistart(problem.objective, problem.constraints, cfg.box, starts, seed,
                        cfg.options, detail=True)
    report = Report("solve", problem.digest)
    report.extra = {"starts": starts, "seed": seed, "failures": dict(result.failures),
                    "stationary_points": []}
    header = f"{'#':>3} {'point':<44} {'mu':>14} {'residual':>10}"
    if args.classify:
        header += f"  {'verdict':<12}"
    lines = [header]
    status = EXIT_OK
    for i, sp in enumerate(result.points, 1):
        name = f"S{i}"
        coords = [float(v) for v in sp.coords]
        report.extra["stationary_points"].append(
            {"name": name, "point": coords, "multipliers": [float(m) for m in sp.multipliers],
             "residual": float(sp.residual), "iterations": int(sp.iterations)})
        text = "(" + ", ".join(f"{v:.10g}" for v in coords) + ")"
        row = f"{i:>3} {text:<44} {float(sp.multipliers[0]):>14.8g} {sp.residual:>10.2e}"
        if args.classify:
            method = "successive" if isinstance(problem.scheme, Orthogonal) else "stationary"
            try:
                cj = constrained_jet(problem, sp.coords, method)
                cls = classify(cj, problem.constraint, problem.tolerances)
                report.points.append(PointRecord.build(name, cj, cls))
                row += f"  {str(cls.verdict):<12}"
            except CondiffError as exc:
                report.errors.append(error_record(exc, point=name))
                row += f"  {exc.code}"
                status = EXIT_ERROR
        lines.append(row)
    lines.append(f"{len(result.points)} stationary points from {starts} starts (seed {seed})")
    _emit(report, args.json, lines)
    return status


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    problem = load_problem(resolve_path(args.file))
    suites = verify.run_all(problem, np.random.default_rng(args.seed), args.trials)
    print(f"{'suite':<20} {'status':<6} {'checks':>7} {'failed':>7} {'worst':>11}  summary")
    for s in suites:
        worst = "-" if s.worst is None else f"{s.worst:.3e}"
        print(f"{s.name:<20} {'PASS' if s.passed else 'FAIL':<6} {s.checks:>7} "
              f"{len(s.failures):>7} {worst:>11}  {s.summary}")
        for msg in s.failures[:5]:
            print(f"    {msg}")
    failed = sum(not s.passed for s in suites)
    print(f"{len(suites) - failed}/{len(suites)} suites passed")
    return EXIT_OK if failed == 0 else EXIT_ERROR


def compare_verdicts(problem, point):
    """``[(route, verdict or None, detail)]`` for every applicable route."""
    f, c, tol = problem.objective, problem.constraint, problem.tolerances
    rows = []
    if isinstance(problem.scheme, Orthogonal):
        cls = classify(successive_hessian(f, c, point), c, tol)
        rows.append(("successive", cls.verdict, ""))
    else:
        cls = classify(stationary_hessian(f, c, point, problem.scheme, tol.stationarity), c, tol)
        rows.append(("stationary", cls.verdict, problem.scheme.name))
    try:
        default_retraction(c, point)
    except CondiffError as exc:
        rows.append(("retraction", None, f"not applicable ({exc.code})"))
    else:
        cj = retraction_hessian(f, c, point)
        rows.append(("retraction", classify(cj, c, tol).verdict, cj.kind.value))
    rows.append(("bordered", bordered_oracle(f, c, point, tol), "kind only"))
    chart = chart_oracle(f, c, point, tol)
    rows.append(("chart", chart.verdict, " ".join(f"{v:.6g}" for v in chart.eigenvalues)))
    return rows


def routes_agree(verdicts) -> bool:
    """Same kind everywhere, and the same Morse index wherever one is reported."""
    verdicts = [v for v in verdicts if v is not None]
    if len({v.kind for v in verdicts}) > 1:
        return False
    indices = {v.index for v in verdicts if v.kind is VerdictKind.SADDLE and v.index is not None}
    return len(indices) <= 1


def cmd_compare(args) -> int:
    problem = load_problem(resolve_path(args.file))
    point = _point(problem, args.point)
    rows = compare_verdicts(problem, point)
    print(f"{'route':<12} {'verdict':<12} detail")
    for route, verdict, detail in rows:
        print(f"{route:<12} {str(verdict) if verdict else '-':<12} {detail}")
    agree = routes_agree([v for _, v, _ in rows])
    print("agreement" if agree else "DISAGREEMENT")
    return EXIT_OK if agree else EXIT_DISAGREE


COMMANDS = {"analyze": cmd_analyze, "solve": cmd_solve, "verify": cmd_verify,
            "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"condiff: error: {exc}\n")
        return EXIT_USAGE
    except NotStationary as exc:
        sys.stderr.write(f"condiff: {exc.code}: {exc}\n")
        return EXIT_NOT_STATIONARY
    except CondiffError as exc:
        sys.stderr.write(f"condiff: {exc.code}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
