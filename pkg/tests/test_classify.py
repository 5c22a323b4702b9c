import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (RETRACTION_P11M1, STATIONARY_POINTS, SUCCESSIVE_P11M1, SUCCESSIVE_P333,
                      permuted)
from condiff import randgen
from condiff.chessian import (retraction_hessian, stationary_hessian, successive_hessian)
from condiff.classify import (MAX_SWEEPS, Tolerances, Verdict, VerdictKind, bordered_oracle,
                              chart_oracle, classify, eigensym, excluded_direction,
                              tangent_basis, verdict_from)
from condiff.errors import NotStationary, NotSymmetric, ZeroGradientComponent
from condiff.expr import parse
from condiff.projection import HOMOGENEOUS, ORTHOGONAL, ConstraintSpec, RetractionKind

SADDLES = ["P11m1", "P1m11", "Pm111"]
LOCAL_MIN = Verdict(VerdictKind.LOCAL_MIN)
SADDLE1 = Verdict(VerdictKind.SADDLE, 1)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class TestEigensym:
    def test_minimum_matrix(self):
        np.testing.assert_allclose(eigensym(SUCCESSIVE_P333).values, [0, 36, 36], atol=1e-8)

    def test_saddle_matrix(self):
        np.testing.assert_allclose(eigensym(SUCCESSIVE_P11M1).values, [-4, 0, 12], atol=1e-8)

    def test_retraction_matrix_and_vectors(self):
        spec = eigensym(RETRACTION_P11M1)
        np.testing.assert_allclose(spec.values, [-36, 0, 12], atol=1e-8)
        for k, expected in enumerate([(1, 1, 2), (1, 1, -1), (1, -1, 0)]):
            assert abs(spec.vectors[:, k] @ unit(expected)) >= 1 - 1e-9

    def test_identity(self):
        spec = eigensym(np.eye(5))
        np.testing.assert_array_equal(spec.values, np.ones(5))
        assert spec.sweeps == 0

    def test_rejects_asymmetric(self):
        with pytest.raises(NotSymmetric):
            eigensym([[1.0, 2.0], [0.0, 1.0]])

    def test_non_square(self):
        with pytest.raises(ValueError):
            eigensym(np.zeros((2, 3)))

    def test_sign_convention_and_determinism(self, rng):
        M = randgen.random_symmetric(rng, 6)
        a, b = eigensym(M), eigensym(M.copy())
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.vectors, b.vectors)
        for k in range(6):
            col = a.vectors[:, k]
            assert col[np.flatnonzero(np.abs(col) > 1e-8)[0]] > 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
    def test_decomposition_properties(self, n, seed, scale):
        M = randgen.random_symmetric(np.random.default_rng(seed), n, scale)
        spec = eigensym(M)
        V, lam = spec.vectors, spec.values
        np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-9)
        np.testing.assert_allclose(V @ np.diag(lam) @ V.T, M, atol=1e-10 * np.max(np.abs(M)))
        assert np.all(np.diff(lam) >= 0)
        np.testing.assert_allclose(lam, np.linalg.eigvalsh(M), atol=1e-10 * np.max(np.abs(M)))
        assert spec.sweeps <= 30 < MAX_SWEEPS
        hist = spec.off_history
        assert all(b <= a for a, b in zip(hist, hist[1:]))
        assert hist[-1] <= 1e-12 * np.linalg.norm(M)


class TestExcludedDirection:
    def test_orthogonal_is_the_gradient_direction(self, constraint):
        d = excluded_direction(ORTHOGONAL, constraint, [1, 1, -1])
        assert abs(d @ unit([1, 1, 1])) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("point,expected", [((1, 1, -1), (1, 1, -1)), ((3, 3, 3), (1, 1, 1))])
    def test_exact_scaling_is_the_position(self, constraint, point, expected):
        d = excluded_direction(ORTHOGONAL, constraint, point, RetractionKind.EXACT_SCALING)
        assert abs(d @ unit(expected)) == pytest.approx(1.0, abs=1e-14)

    def test_homogeneous_scheme(self, constraint):
        # u = rho, so the direction is rho / (dc/drho) = -rho^3
        p = np.array([2.0, 3.0, 6.0])
        d = excluded_direction(HOMOGENEOUS, constraint, p)
        assert abs(d @ unit(p ** 3)) == pytest.approx(1.0, abs=1e-14)

    def test_zero_gradient_component(self):
        # the homogeneous weights divide by dc/dy, which vanishes at y = 0
        c = ConstraintSpec(parse("x + y^2", ["x", "y"]), 1.0, 1)
        with pytest.raises(ZeroGradientComponent):
            excluded_direction(HOMOGENEOUS, c, [1.0, 0.0])


class TestVerdictFrom:
    @pytest.mark.parametrize("values,expected", [
        ([1, 2], "LocalMin"), ([-1, -2], "LocalMax"), ([-1, 2, 3], "Saddle(1)"),
        ([-1, -2, 3], "Saddle(2)"), ([0.0, 1.0], "Degenerate")])
    def test_rules(self, values, expected):
        assert str(verdict_from(values, 1e-7)) == expected

    def test_round_trip_text(self):
        for text in ["LocalMin", "LocalMax", "Degenerate", "Saddle(3)"]:
            assert str(Verdict.parse(text)) == text


class TestClassify:
    def test_minimum(self, objective, constraint):
        cl = classify(successive_hessian(objective, constraint, [3, 3, 3]), constraint)
        assert cl.verdict == LOCAL_MIN
        np.testing.assert_allclose(sorted(cl.retained_values), [36, 36], atol=1e-8)
        (k, cos), = cl.excluded
        assert cos >= 0.999
        assert abs(cl.spectrum[k][1] @ unit([1, 1, 1])) >= 1 - 1e-9

    @pytest.mark.parametrize("name", SADDLES)
    def test_saddles_successive(self, objective, constraint, name):
        p = STATIONARY_POINTS[name]
        cl = classify(successive_hessian(objective, constraint, p), constraint)
        assert cl.verdict == SADDLE1
        assert cl.index == 1
        np.testing.assert_allclose(sorted(cl.retained_values), [-4, 12], atol=1e-8)
        (k, cos), = cl.excluded
        assert abs(cl.spectrum[k][1] @ unit(-1.0 / p ** 2)) >= 0.999

    @pytest.mark.parametrize("name", SADDLES)
    def test_saddles_retraction(self, objective, constraint, name):
        p = STATIONARY_POINTS[name]
        cl = classify(retraction_hessian(objective, constraint, p), constraint)
        assert cl.verdict == SADDLE1
        np.testing.assert_allclose(sorted(cl.retained_values), [-36, 12], atol=1e-8)
        (k, cos), = cl.excluded
        assert cos >= 1 - 1e-9
        assert abs(cl.spectrum[k][1] @ unit(p)) >= 1 - 1e-9

    def test_minimum_retraction(self, objective, constraint):
        cl = classify(retraction_hessian(objective, constraint, [3, 3, 3]), constraint)
        assert cl.verdict == LOCAL_MIN

    @pytest.mark.parametrize("name", list(STATIONARY_POINTS))
    def test_retained_vectors_are_tangent_for_orthogonal(self, objective, constraint, name):
        p = STATIONARY_POINTS[name]
        g = -1.0 / p ** 2
        cl = classify(successive_hessian(objective, constraint, p), constraint)
        for _, v in cl.retained:
            assert abs(g @ v) <= 1e-8 * np.linalg.norm(g) * np.linalg.norm(v)

    def test_retraction_vectors_need_not_be_tangent(self, objective, constraint):
        p = np.array([1.0, 1.0, -1.0])
        cl = classify(retraction_hessian(objective, constraint, p), constraint)
        # the (1,1,2) mode has a normal component
        assert max(abs((-1.0 / p ** 2) @ v) for _, v in cl.retained) > 0.1

    def test_not_stationary(self, objective, constraint):
        off = successive_hessian(objective, constraint, [2.0, 3.0, 6.0])
        with pytest.raises(NotStationary):
            classify(off, constraint)
        with pytest.raises(NotStationary):
            classify(successive_hessian(objective, constraint, [2.0, 2.0, 2.0]), constraint)

    def test_degenerate_zero_eigenspace_rotated_onto_direction(self):
        # (x - y)^2 is flat along (1, 1, -2) within the plane x + y + z = 0
        xyz = ["x", "y", "z"]
        f = parse("(x - y)^2", xyz)
        c = ConstraintSpec(parse("x + y + z", xyz), 0.0)
        cl = classify(successive_hessian(f, c, [0.0, 0.0, 0.0]), c)
        assert len(cl.excluded) == 1
        assert cl.verdict.kind is VerdictKind.DEGENERATE

    def test_stationary_route_other_scheme(self, objective, constraint):
        cl = classify(stationary_hessian(objective, constraint, [1, 1, -1], HOMOGENEOUS), constraint)
        assert cl.verdict == SADDLE1

    def test_permuted_goldens_give_matching_spectra(self):
        for name in SADDLES:
            p = STATIONARY_POINTS[name]
            np.testing.assert_allclose(eigensym(permuted(p, SUCCESSIVE_P11M1)).values,
                                       [-4, 0, 12], atol=1e-8)


class TestBorderedOracle:
    def test_minimum(self, objective, constraint):
        assert bordered_oracle(objective, constraint, [3, 3, 3]) == LOCAL_MIN

    @pytest.mark.parametrize("name", SADDLES)
    def test_saddles(self, objective, constraint, name):
        assert bordered_oracle(objective, constraint, STATIONARY_POINTS[name]).kind is VerdictKind.SADDLE

    def test_convex_over_affine(self):
        xyz = ["x", "y", "z"]
        f = parse("x^2 + y^2 + z^2", xyz)
        c = ConstraintSpec(parse("x + y + z", xyz), 1.0)
        assert bordered_oracle(f, c, [1 / 3, 1 / 3, 1 / 3]) == LOCAL_MIN

    def test_maximum(self):
        xyz = ["x", "y", "z"]
        f = parse("-(x^2 + 2*y^2 + 3*z^2)", xyz)
        c = ConstraintSpec(parse("x + y + z", xyz), 0.0)
        assert bordered_oracle(f, c, [0.0, 0.0, 0.0]).kind is VerdictKind.LOCAL_MAX

    def test_not_stationary(self, objective, constraint):
        with pytest.raises(NotStationary):
            bordered_oracle(objective, constraint, [2.0, 3.0, 6.0])


class TestChartOracle:
    def test_minimum(self, objective, constraint):
        res = chart_oracle(objective, constraint, [3, 3, 3])
        assert res.reduced.shape == (2, 2)
        np.testing.assert_allclose(res.eigenvalues, [36, 36], rtol=1e-4)
        assert res.verdict == LOCAL_MIN

    @pytest.mark.parametrize("name", SADDLES)
    def test_saddles(self, objective, constraint, name):
        res = chart_oracle(objective, constraint, STATIONARY_POINTS[name])
        assert res.verdict == SADDLE1 and res.index == 1
        np.testing.assert_allclose(res.eigenvalues, [-4, 12], rtol=1e-4)

    def test_coordinate_chart(self):
        xyz = ["x", "y", "z"]
        f = parse("x^2 - y^2", xyz)
        c = ConstraintSpec(parse("z", xyz), 0.0)
        res = chart_oracle(f, c, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(sorted(np.diag(res.reduced)), [-2, 2], atol=1e-6)
        np.testing.assert_allclose(res.reduced[0, 1], 0.0, atol=1e-6)
        assert res.verdict == SADDLE1

    def test_tangent_basis_is_orthonormal_complement(self, rng):
        for n in range(2, 7):
            g = rng.normal(size=n)
            T = tangent_basis(g)
            assert T.shape == (n, n - 1)
            np.testing.assert_allclose(T.T @ T, np.eye(n - 1), atol=1e-12)
            np.testing.assert_allclose(g @ T, 0.0, atol=1e-12)


class TestOracleAgreement:
    @pytest.mark.parametrize("name", list(STATIONARY_POINTS))
    def test_fixture_points(self, objective, constraint, name):
        p = STATIONARY_POINTS[name]
        cl = classify(successive_hessian(objective, constraint, p), constraint)
        chart = chart_oracle(objective, constraint, p)
        assert cl.verdict == chart.verdict
        assert cl.verdict.same_kind(bordered_oracle(objective, constraint, p))
        np.testing.assert_allclose(sorted(cl.retained_values), chart.eigenvalues, rtol=1e-4)

    def test_random_quadratic_instances(self, rng):
        for t in range(50):
            q = randgen.quadratic_linear(rng, int(rng.integers(2, 6)))
            cl = classify(successive_hessian(q.objective, q.constraint, q.point), q.constraint)
            chart = chart_oracle(q.objective, q.constraint, q.point)
            border = bordered_oracle(q.objective, q.constraint, q.point)
            assert str(cl.verdict) == q.ground_truth == str(chart.verdict), t
            assert cl.verdict.same_kind(border), t
            np.testing.assert_allclose(sorted(cl.retained_values), q.reduced_eigenvalues,
                                       rtol=1e-8, atol=1e-8)
            np.testing.assert_allclose(chart.eigenvalues, q.reduced_eigenvalues, rtol=1e-4)

    def test_tolerances_drive_zero_threshold(self):
        assert Tolerances().zero_threshold([36.0, -4.0]) == pytest.approx(36e-7)
        assert Tolerances().zero_threshold([0.1]) == pytest.approx(1e-7)
