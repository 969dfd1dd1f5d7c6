import numpy as np
import pytest

from kccdyn.exprdsl import BinOp, Expression, Num, Var
from kccdyn.models import lcdm_system
from kccdyn.odesys import VectorField
from kccdyn.stability import (
    CharPoly,
    NotAFixedPointError,
    analyze_fixed_point,
    characteristic_polynomial,
    descartes_bound,
    eigenvalues,
    find_fixed_points,
    hurwitz_determinants,
    hurwitz_matrix,
    is_hurwitz_stable,
    jacobi_classify,
    lyapunov_classify,
    polynomial_roots,
)

from helpers import assert_complex_multisets_close


def _poly(*coeffs):
    return CharPoly(np.asarray(coeffs, dtype=float))


def _linear_field(A):
    n = A.shape[0]
    names = tuple(f"x{i + 1}" for i in range(n))
    comps = []
    for row in A:
        root = None
        for j, c in enumerate(row):
            term = BinOp("*", Num(float(c)), Var(j))
            root = term if root is None else BinOp("+", root, term)
        comps.append(Expression(root=root, variables=names))
    return VectorField(components=tuple(comps))


class TestCharacteristicPolynomial:
    def test_diagonal(self):
        p = characteristic_polynomial(np.diag([2.0, 3.0]))
        assert np.array_equal(p.coefficients, [1.0, -5.0, 6.0])

    def test_triangular_reference(self):
        # hand: trace -7, det 12
        p = characteristic_polynomial([[-4.0, 0.0], [1.0, -3.0]])
        assert np.array_equal(p.coefficients, [1.0, 7.0, 12.0])

    def test_three_by_three_closed_form(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A = rng.standard_normal((3, 3))
            p = characteristic_polynomial(A)
            tr = np.trace(A)
            closed = np.array([
                1.0,
                -tr,
                0.5 * (tr * tr - np.trace(A @ A)),
                -np.linalg.det(A),
            ])
            assert np.max(np.abs(p.coefficients - closed)) <= 1e-12 * max(
                1.0, np.max(np.abs(closed)))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            characteristic_polynomial(np.ones((2, 3)))

    def test_monic_required(self):
        with pytest.raises(ValueError):
            _poly(2.0, 1.0)


class TestEigenvalues:
    def test_rotation_generator(self):
        assert_complex_multisets_close(eigenvalues([[0.0, 1.0], [-1.0, 0.0]]),
                                       [1j, -1j], 1e-12)

    def test_triangular(self):
        assert_complex_multisets_close(eigenvalues([[-4.0, 0.0], [1.0, -3.0]]),
                                       [-4.0, -3.0], 1e-9)

    def test_diagonal_saddle(self):
        assert_complex_multisets_close(eigenvalues(np.diag([-1.0, 3.0])),
                                       [-1.0, 3.0], 1e-12)

    def test_double_root(self):
        assert_complex_multisets_close(eigenvalues(np.diag([2.0, 2.0])),
                                       [2.0, 2.0], 1e-6)

    def test_exact_zero_roots_stripped(self):
        A = np.zeros((3, 3))
        A[2, 2] = 1.0
        roots = eigenvalues(A)
        assert roots.count(0j) == 2
        assert_complex_multisets_close(roots, [0.0, 0.0, 1.0], 1e-12)

    def test_conjugate_pairing(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            eigs = eigenvalues(rng.standard_normal((n, n)))
            complex_part = [z for z in eigs if abs(z.imag) > 1e-9]
            conjugates = [z.conjugate() for z in complex_part]
            assert_complex_multisets_close(complex_part, conjugates, 1e-9)

    def test_residual_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            A = rng.standard_normal((n, n))
            p = characteristic_polynomial(A)
            for lam in polynomial_roots(p):
                assert abs(p(lam)) <= 1e-7 * (1.0 + abs(lam) ** n)

    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            A = rng.standard_normal((n, n))
            assert_complex_multisets_close(eigenvalues(A), np.linalg.eigvals(A), 1e-7)


class TestHurwitz:
    def test_quadratic_by_hand(self):
        # D1 = 3, D2 = |3 0; 1 2| = 6
        p = _poly(1, 3, 2)
        assert np.array_equal(hurwitz_determinants(p), [3.0, 6.0])
        assert is_hurwitz_stable(p)

    def test_lcdm_attractor_polynomial(self):
        p = _poly(1, 7, 12)
        assert np.array_equal(hurwitz_determinants(p), [7.0, 84.0])
        assert is_hurwitz_stable(p)

    def test_negative_middle_coefficient(self):
        p = _poly(1, -1, 1)
        assert hurwitz_determinants(p)[0] == -1.0
        assert not is_hurwitz_stable(p)

    def test_quartic_matrix_pattern(self):
        p = _poly(1, 2, 3, 4, 5)
        expected = np.array([
            [2.0, 4.0, 0.0, 0.0],
            [1.0, 3.0, 5.0, 0.0],
            [0.0, 2.0, 4.0, 0.0],
            [0.0, 1.0, 3.0, 5.0],
        ])
        assert np.array_equal(hurwitz_matrix(p), expected)

    def test_agrees_with_roots(self):
        rng = np.random.default_rng(4)
        for _ in range(150):
            coeffs, roots = _random_real_polynomial(rng)
            if min(abs(r.real) for r in roots) <= 1e-6:
                continue
            truth = all(r.real < 0 for r in roots)
            assert is_hurwitz_stable(CharPoly(coeffs)) == truth


def _random_real_polynomial(rng, max_degree=6):
    """Monic real polynomial from conjugate-closed random roots."""
    degree = int(rng.integers(1, max_degree + 1))
    coeffs = np.array([1.0])
    roots = []
    remaining = degree
    while remaining > 0:
        if remaining >= 2 and rng.uniform() < 0.5:
            alpha = rng.uniform(-2, 2)
            beta = rng.uniform(0.1, 2)
            coeffs = np.convolve(coeffs, [1.0, -2.0 * alpha, alpha * alpha + beta * beta])
            roots += [complex(alpha, beta), complex(alpha, -beta)]
            remaining -= 2
        else:
            r = rng.uniform(-2, 2)
            coeffs = np.convolve(coeffs, [1.0, -r])
            roots.append(complex(r, 0.0))
            remaining -= 1
    return coeffs, roots


class TestDescartes:
    def test_no_sign_changes(self):
        assert descartes_bound(_poly(1, 3, 2)) == 0

    def test_two_sign_changes(self):
        assert descartes_bound(_poly(1, -3, 2)) == 2

    def test_zero_root_stripped_then_counted(self):
        # lambda^3 - lambda: strip the zero root, then +,0,- gives one change
        assert descartes_bound(_poly(1, 0, -1, 0)) == 1

    def test_positive_root_count_in_bound_family(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            degree = int(rng.integers(1, 7))
            roots = rng.uniform(-2, 2, degree)
            roots = roots[np.abs(roots) > 1e-3]
            if roots.size == 0:
                continue
            coeffs = np.array([1.0])
            for r in roots:
                coeffs = np.convolve(coeffs, [1.0, -r])
            m = descartes_bound(CharPoly(coeffs))
            positives = int(np.sum(roots > 0))
            assert positives <= m
            assert (m - positives) % 2 == 0


class TestLyapunovClassify:
    @pytest.mark.parametrize("eigs,label", [
        ([-4, -3], "stable-node"),
        ([2, 5], "unstable-node"),
        ([-1, 3], "saddle"),
        ([-1 + 2j, -1 - 2j], "stable-focus"),
        ([1 + 2j, 1 - 2j], "unstable-focus"),
        ([2j, -2j], "center"),
        ([-1 + 2j, -1 - 2j, -3], "focus"),
        ([-1 + 2j, -1 - 2j, 3], "saddle-focus"),
        ([2j, -2j, -3], "center"),
        ([-1, -2, -3], "stable-node"),
        ([-1, 2, -3], "saddle"),
        ([1e-12, -3], "non-hyperbolic"),
        ([1e-12 + 2j, 1e-12 - 2j, 1e-12], "non-hyperbolic"),
        ([-2 + 1j, -2 - 1j, -1 + 3j, -1 - 3j], "stable-focus"),
        ([-2 + 1j, -2 - 1j, 1 + 3j, 1 - 3j], "saddle-focus"),
    ])
    def test_labels(self, eigs, label):
        assert lyapunov_classify(eigs) == label


class TestJacobiClassify:
    def test_stable_complex_pair(self):
        verdict, margin, spectrum = jacobi_classify([-1 + 2j, -1 - 2j])
        assert verdict == "Jacobi-stable"
        assert margin == pytest.approx(-3.0, abs=1e-12)
        assert_complex_multisets_close(spectrum, [-0.75 + 1j, -0.75 - 1j], 1e-12)

    def test_stable_node_is_jacobi_unstable(self):
        verdict, margin, spectrum = jacobi_classify([-4.0, -3.0])
        assert verdict == "Jacobi-unstable"
        assert margin == pytest.approx(16.0)
        assert_complex_multisets_close(spectrum, [4.0, 2.25], 1e-12)

    def test_three_dimensional_never_stable(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            eigs = eigenvalues(rng.standard_normal((3, 3)))
            verdict, _, _ = jacobi_classify(eigs, 3)
            assert verdict != "Jacobi-stable"

    def test_boundary_indeterminate(self):
        verdict, margin, _ = jacobi_classify([1 + 1j, 1 - 1j])
        assert verdict == "indeterminate"
        assert margin == pytest.approx(0.0, abs=1e-12)

    def test_scaling_lemma(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 7))
            A = rng.standard_normal((n, n))
            k = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
            base = eigenvalues(A)
            scaled = eigenvalues(k * A)
            assert_complex_multisets_close(scaled, [k * z for z in base], 1e-7)

    def test_square_lemma(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            n = int(rng.integers(2, 7))
            A = rng.standard_normal((n, n))
            base = eigenvalues(A)
            quarter = eigenvalues(0.25 * (A @ A))
            assert_complex_multisets_close(quarter, [z * z / 4.0 for z in base], 1e-7)


class TestFindFixedPoints:
    def test_lcdm_grid(self):
        search = find_fixed_points(lcdm_system(), box=((0, 1), (0, 1)), grid=5)
        assert len(search.points) == 3
        expected = [np.array(p) for p in ([0.0, 0.0], [0.0, 1.0], [1.0, 0.0])]
        for found, want in zip(search.points, expected):
            assert np.max(np.abs(found - want)) <= 1e-7

    def test_linear_unique_zero(self):
        vf = _linear_field(np.array([[2.0, 1.0], [0.5, -1.0]]))
        search = find_fixed_points(vf, seeds=[[3.0, -2.0], [0.1, 0.1]])
        assert len(search.points) == 1
        assert np.max(np.abs(search.points[0])) <= 1e-10

    def test_scalar_quadratic(self):
        vf = VectorField.from_expressions(["x1^2 - 1"], ["x1"])
        search = find_fixed_points(vf, seeds=[[-2.0], [2.0]])
        assert len(search.points) == 2
        assert search.points[0][0] == pytest.approx(-1.0, abs=1e-10)
        assert search.points[1][0] == pytest.approx(1.0, abs=1e-10)

    def test_singular_jacobian_reported(self):
        vf = VectorField.from_expressions(["x1^2 - 1"], ["x1"])
        search = find_fixed_points(vf, seeds=[[0.0]])
        assert not search.points
        assert len(search.failures) == 1
        assert "singular" in search.failures[0].reason

    def test_no_real_root_reports_failures(self):
        vf = VectorField.from_expressions(["x1^2 + 1"], ["x1"])
        search = find_fixed_points(vf, seeds=[[0.5], [-1.5]])
        assert not search.points
        assert len(search.failures) == 2

    def test_duplicate_seeds_merge(self):
        search = find_fixed_points(
            lcdm_system(), seeds=[[0, 0], [1e-9, -1e-9], [0, 1], [0, 1]])
        assert len(search.points) == 2

    def test_requires_seeds_or_box(self):
        with pytest.raises(ValueError):
            find_fixed_points(lcdm_system())


class TestAnalyzeFixedPoint:
    def test_lcdm_attractor(self):
        report = analyze_fixed_point(lcdm_system(), [0.0, 1.0])
        assert report.lyapunov_class == "stable-node"
        assert report.jacobi_verdict == "Jacobi-unstable"
        assert_complex_multisets_close(report.eigenvalues, [-4.0, -3.0], 1e-9)
        assert_complex_multisets_close(report.jacobi_spectrum, [4.0, 2.25], 1e-7)
        assert report.jacobi_margin == pytest.approx(16.0, abs=1e-7)
        assert np.allclose(report.hurwitz, [7.0, 84.0], atol=1e-12)
        assert report.descartes_bound == 0
        assert not report.jacobi_saddle_focus

    def test_lcdm_saddle(self):
        report = analyze_fixed_point(lcdm_system(), [0.0, 0.0])
        assert report.lyapunov_class == "saddle"
        assert report.jacobi_verdict == "Jacobi-unstable"
        assert_complex_multisets_close(report.eigenvalues, [-1.0, 3.0], 1e-9)
        assert_complex_multisets_close(report.jacobi_spectrum, [0.25, 2.25], 1e-7)

    def test_lcdm_past_attractor(self):
        report = analyze_fixed_point(lcdm_system(), [1.0, 0.0])
        assert report.lyapunov_class == "unstable-node"
        assert report.jacobi_verdict == "Jacobi-unstable"
        assert_complex_multisets_close(report.eigenvalues, [1.0, 4.0], 1e-9)
        assert_complex_multisets_close(report.jacobi_spectrum, [0.25, 4.0], 1e-7)
        assert report.descartes_bound == 2

    def test_rejects_non_fixed_point(self):
        with pytest.raises(NotAFixedPointError):
            analyze_fixed_point(lcdm_system(), [0.5, 0.5])

    def test_saddle_focus_flag(self):
        A = np.array([[-1.0, 2.0, 0.0], [-2.0, -1.0, 0.0], [0.0, 0.0, 3.0]])
        report = analyze_fixed_point(_linear_field(A), [0.0, 0.0, 0.0])
        assert report.lyapunov_class == "saddle-focus"
        assert report.jacobi_saddle_focus
        assert report.jacobi_verdict == "Jacobi-unstable"

    def test_planar_center_is_jacobi_stable(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        report = analyze_fixed_point(_linear_field(A), [0.0, 0.0])
        assert report.lyapunov_class == "center"
        assert report.jacobi_verdict == "Jacobi-stable"
        assert report.jacobi_margin == pytest.approx(-1.0, abs=1e-9)

    def test_concurrent_analyses_match_serial(self):
        from concurrent.futures import ThreadPoolExecutor
        vf = lcdm_system()
        points = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]] * 4
        serial = [analyze_fixed_point(vf, p) for p in points]
        with ThreadPoolExecutor(max_workers=6) as pool:
            threaded = list(pool.map(lambda p: analyze_fixed_point(vf, p), points))
        for a, b in zip(serial, threaded):
            assert a.lyapunov_class == b.lyapunov_class
            assert a.jacobi_verdict == b.jacobi_verdict
            assert a.eigenvalues == b.eigenvalues
