import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condiff.chessian import successive_hessian
from condiff.classify import classify
from condiff.errors import ExprSyntaxError, HomogeneityMismatch, SchemaError
from condiff.probio import (PointRecord, Report, bundled_problem_path, dumps, format_float,
                            load_problem, problem_from_dict)
from condiff.projection import HOMOGENEOUS, ORTHOGONAL, Custom


def fixture_doc():
    return json.loads(bundled_problem_path().read_text())


class TestLoadProblem:
    def test_bundled_fixture(self, problem):
        assert problem.variables == ["x", "y", "z"]
        assert len(problem.constraints) == 1
        assert problem.constraint.homogeneity == -1
        assert sorted(problem.points) == ["P11m1", "P1m11", "P333", "Pm111"]
        assert problem.scheme is ORTHOGONAL
        assert problem.solver.starts == 400 and problem.solver.seed == 42
        assert len(problem.digest) == 64

    def test_point_lookup(self, problem):
        np.testing.assert_array_equal(problem.point("P333"), [3, 3, 3])
        np.testing.assert_array_equal(problem.point("1, 2.5, -3"), [1, 2.5, -3])
        with pytest.raises(KeyError):
            problem.point("nowhere")
        with pytest.raises(KeyError):
            problem.point("1,2")

    def test_missing_target(self):
        doc = fixture_doc()
        del doc["constraints"][0]["target"]
        with pytest.raises(SchemaError) as info:
            problem_from_dict(doc)
        assert info.value.path == "/constraints/0/target"

    def test_wrong_type_path(self):
        doc = fixture_doc()
        doc["points"]["P333"] = [3, "three", 3]
        with pytest.raises(SchemaError) as info:
            problem_from_dict(doc)
        assert info.value.path == "/points/P333/1"

    def test_wrong_homogeneity(self):
        doc = fixture_doc()
        doc["constraints"][0]["homogeneity"] = 2
        with pytest.raises(HomogeneityMismatch):
            problem_from_dict(doc)

    def test_expression_errors_propagate(self):
        doc = fixture_doc()
        doc["objective"] = "x^3 + * y"
        with pytest.raises(ExprSyntaxError):
            problem_from_dict(doc)

    def test_point_dimension(self):
        doc = fixture_doc()
        doc["points"]["bad"] = [1, 2]
        with pytest.raises(SchemaError) as info:
            problem_from_dict(doc)
        assert info.value.path == "/points/bad"

    def test_schemes(self):
        doc = fixture_doc()
        doc["scheme"] = "homogeneous"
        assert problem_from_dict(doc).scheme is HOMOGENEOUS
        doc["scheme"] = {"custom": ["x^2", "y^2", "z^2"]}
        assert isinstance(problem_from_dict(doc).scheme, Custom)
        doc["scheme"] = {"custom": ["x"]}
        with pytest.raises(SchemaError):
            problem_from_dict(doc)

    def test_tolerance_overrides(self):
        doc = fixture_doc()
        doc["tolerances"] = {"zero_rel": 1e-6, "kkt": 1e-11}
        p = problem_from_dict(doc)
        assert p.tolerances.zero_rel == 1e-6
        assert p.solver.options.tol == 1e-11

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            load_problem(path)


class TestFormatFloat:
    @pytest.mark.parametrize("value,text", [(1.0, "1.0"), (-243.0, "-243.0"), (0.1, "0.10000000000000001"),
                                            (1e300, "1.0000000000000001e+300"), (float("inf"), "Infinity")])
    def test_examples(self, value, text):
        assert format_float(value) == text

    @settings(max_examples=300, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_round_trip(self, x):
        assert float(format_float(x)) == x
        assert json.loads(format_float(x)) == x

    def test_nan(self):
        assert math.isnan(json.loads(dumps([float("nan")]))[0])


class TestReport:
    def _report(self, problem):
        report = Report("analyze", problem.digest)
        for name, p in problem.points.items():
            cj = successive_hessian(problem.objective, problem.constraint, p)
            report.points.append(PointRecord.build(name, cj, classify(cj, problem.constraint)))
        report.extra = {"values": [np.pi, 1 / 3, -2.5e-17]}
        return report

    def test_round_trip_is_bit_exact(self, problem):
        report = self._report(problem)
        again = Report.loads(report.dumps())
        assert again.to_dict() == report.to_dict()
        assert again.dumps() == report.dumps()
        for a, b in zip(report.points, again.points):
            for row_a, row_b in zip(a.hessian, b.hessian):
                assert [x.hex() for x in row_a] == [x.hex() for x in row_b]

    def test_fields(self, problem):
        record = self._report(problem).points[0]
        doc = json.loads(dumps(vars(record)))
        assert set(doc) >= {"point", "residual", "mu", "method", "hessian", "raw_asymmetry",
                            "spectrum", "excluded", "verdict", "morse_index"}

    def test_key_order_is_stable(self, problem):
        keys = list(json.loads(self._report(problem).dumps()))
        assert keys == ["tool", "command", "input_sha256", "points", "suites", "errors", "extra"]

    def test_write_read(self, problem, tmp_path):
        report = self._report(problem)
        path = tmp_path / "out.json"
        report.write(path)
        assert Report.read(path).to_dict() == report.to_dict()

