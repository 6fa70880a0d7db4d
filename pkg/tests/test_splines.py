import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline as ScipyBSpline

from splinefda import (
    BasisSpec,
    ConditioningError,
    DomainError,
    InputError,
    KnotVector,
    RankError,
    bspline_evaluate,
    basis_evaluate_all,
    gram_matrix,
    orthonormalize,
    project_1d,
    uniform_knots,
)
from splinefda.splines import basis_matrix, gauss_legendre_cells


def scipy_bspline_values(spec, index, x):
    """Independent oracle: scipy's piecewise-polynomial B-spline element."""
    t = spec.knots.knots
    el = ScipyBSpline.basis_element(t[index - 1 : index + spec.degree + 1], extrapolate=False)
    return np.nan_to_num(el(np.atleast_1d(x)))


def fine_l2_norm(f, breaks):
    nodes, w = gauss_legendre_cells(np.unique(breaks), 6)
    return np.sqrt(np.sum(w * f(nodes) ** 2))


class TestKnotVector:
    def test_rejects_unsorted(self):
        with pytest.raises(InputError):
            KnotVector([0.0, 2.0, 1.0])

    def test_rejects_near_coincident(self):
        with pytest.raises(InputError):
            KnotVector([0.0, 0.5, 0.5 + 1e-14, 1.0])

    def test_rejects_too_short(self):
        with pytest.raises(InputError):
            KnotVector([0.0])

    def test_dimension_count(self):
        spec = BasisSpec(uniform_knots(0, 1, 10), 3)
        assert spec.dimension == 10 - 3 + 1


class TestBsplineEvaluate:
    def test_hat_peak(self):
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0]), 1)
        assert bspline_evaluate(spec, 1, 1.0) == 1.0

    def test_hat_support_boundary(self):
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0]), 1)
        assert bspline_evaluate(spec, 1, 2.0) == 0.0

    def test_quadratic_midpoint(self):
        # hand expansion of the de Boor recursion on knots {0,1,2,3} gives 3/4
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0, 3.0]), 2)
        value = bspline_evaluate(spec, 1, 1.5)
        npt.assert_allclose(value, 0.75, atol=1e-15)
        npt.assert_allclose(value, scipy_bspline_values(spec, 1, 1.5)[0], atol=1e-14)

    def test_index_out_of_range(self):
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0]), 1)
        with pytest.raises(DomainError):
            bspline_evaluate(spec, 2, 1.0)
        with pytest.raises(DomainError):
            bspline_evaluate(spec, 0, 1.0)

    def test_x_outside_domain(self):
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0]), 1)
        with pytest.raises(DomainError):
            bspline_evaluate(spec, 1, 2.5)

    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_matches_scipy_oracle(self, degree):
        rng = np.random.default_rng(7 + degree)
        interior = np.sort(rng.uniform(0.05, 0.95, size=9))
        spec = BasisSpec(KnotVector(np.concatenate([[0.0], interior, [1.0]])), degree)
        xs = np.linspace(0, 1, 601)[:-1]  # scipy's element is open at the right end
        B = basis_matrix(spec, xs)
        for i in range(1, spec.dimension + 1):
            npt.assert_allclose(B[:, i - 1], scipy_bspline_values(spec, i, xs), atol=1e-12)


class TestBasisEvaluateAll:
    def test_single_hat(self):
        spec = BasisSpec(KnotVector([0.0, 0.5, 1.0]), 1)
        npt.assert_allclose(basis_evaluate_all(spec, 0.5), [1.0])

    def test_degree0_indicators(self):
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0]), 0)
        npt.assert_allclose(basis_evaluate_all(spec, 0.5), [1.0, 0.0])
        npt.assert_allclose(basis_evaluate_all(spec, 1.5), [0.0, 1.0])

    def test_partition_of_unity_interior(self):
        spec = BasisSpec(uniform_knots(0, 5, 4), 2)
        t = spec.knots.knots
        for x in np.linspace(t[spec.degree], t[-spec.degree - 1], 41):
            npt.assert_allclose(np.sum(basis_evaluate_all(spec, x)), 1.0, atol=1e-12)

    @given(
        degree=st.integers(0, 3),
        n_interior=st.integers(6, 20),
        u=st.floats(0.0, 1.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_of_unity_property(self, degree, n_interior, u):
        spec = BasisSpec(uniform_knots(0.0, 1.0, n_interior), degree)
        t = spec.knots.knots
        lo, hi = t[degree], t[-degree - 1] if degree else t[-1]
        x = lo + u * (hi - lo)
        npt.assert_allclose(np.sum(basis_evaluate_all(spec, x)), 1.0, atol=1e-12)

    @given(degree=st.integers(0, 3), u=st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative_and_compact_support(self, degree, u):
        rng = np.random.default_rng(3)
        interior = np.sort(rng.uniform(0.1, 0.9, size=8))
        spec = BasisSpec(KnotVector(np.concatenate([[0.0], interior, [1.0]])), degree)
        x = u  # anywhere in [0, 1]
        vals = basis_evaluate_all(spec, x)
        assert np.all(vals >= 0)
        t = spec.knots.knots
        for i in range(spec.dimension):
            if x < t[i] or x > t[i + degree + 1]:
                assert vals[i] == 0.0


class TestGramMatrix:
    def test_degree1_closed_form(self):
        # analytic integrals of hat-function products on a uniform grid
        h = 0.25
        spec = BasisSpec(uniform_knots(0, 1, 3), 1)
        G = gram_matrix(spec)
        npt.assert_allclose(np.diag(G), 2 * h / 3, atol=1e-14)
        npt.assert_allclose(np.diag(G, 1), h / 6, atol=1e-14)

    def test_degree0_interval_lengths(self):
        spec = BasisSpec(KnotVector([0.0, 0.3, 1.0, 1.5]), 0)
        npt.assert_allclose(gram_matrix(spec), np.diag([0.3, 0.7, 0.5]), atol=1e-14)

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(11)
        interior = np.sort(rng.uniform(0.05, 0.95, size=12))
        spec = BasisSpec(KnotVector(np.concatenate([[0.0], interior, [1.0]])), 3)
        G = gram_matrix(spec)
        npt.assert_allclose(G, G.T, atol=1e-15)
        assert np.linalg.eigvalsh(G)[0] > 0

    def test_against_fine_quadrature_oracle(self):
        spec = BasisSpec(uniform_knots(0, 1, 7), 2)
        xs = np.linspace(0, 1, 20001)
        B = basis_matrix(spec, xs)
        oracle = np.trapezoid(B[:, :, None] * B[:, None, :], xs, axis=0)
        npt.assert_allclose(gram_matrix(spec), oracle, atol=1e-8)


class TestOrthonormalize:
    def test_degree0_closed_form(self):
        spec = BasisSpec(KnotVector([0.0, 0.5, 2.0]), 0)
        C = orthonormalize(spec).change_of_basis
        npt.assert_allclose(C, np.diag([1 / np.sqrt(0.5), 1 / np.sqrt(1.5)]), atol=1e-12)

    def test_identity_for_unit_intervals(self):
        spec = BasisSpec(KnotVector([0.0, 1.0, 2.0, 3.0]), 0)
        npt.assert_allclose(orthonormalize(spec).change_of_basis, np.eye(3), atol=1e-12)

    def test_degree2_uniform(self):
        spec = BasisSpec(uniform_knots(0, 10, 9), 2)
        ob = orthonormalize(spec)
        G = gram_matrix(spec)
        resid = ob.change_of_basis.T @ G @ ob.change_of_basis - np.eye(spec.dimension)
        assert np.max(np.abs(resid)) < 1e-10

    @pytest.mark.parametrize("degree", [1, 2, 3])
    @pytest.mark.parametrize("n_interior", [10, 17, 25, 40])
    def test_orthonormality_random_knots(self, degree, n_interior):
        rng = np.random.default_rng(degree * 100 + n_interior)
        interior = np.sort(rng.uniform(0.02, 0.98, size=n_interior))
        spec = BasisSpec(KnotVector(np.concatenate([[0.0], interior, [1.0]])), degree)
        ob = orthonormalize(spec)
        G = gram_matrix(spec)
        resid = ob.change_of_basis.T @ G @ ob.change_of_basis - np.eye(spec.dimension)
        assert np.max(np.abs(resid)) < 1e-8

    def test_span_preservation_round_trip(self):
        spec = BasisSpec(uniform_knots(0, 1, 12), 3)
        ob = orthonormalize(spec)
        rng = np.random.default_rng(5)
        v = rng.standard_normal(spec.dimension)
        back = ob.to_bspline_coeffs(ob.from_bspline_coeffs(v))
        npt.assert_allclose(back, v, atol=1e-8)

    def test_locality_of_block_scheme(self):
        # functions combine mostly nearby B-splines: mass far from the
        # diagonal stays small relative to the column norm
        spec = BasisSpec(uniform_knots(0, 1, 20), 2)
        C = orthonormalize(spec).change_of_basis
        dim = spec.dimension
        for j in range(dim):
            col = np.abs(C[:, j])
            far = col[np.abs(np.arange(dim) - j) > dim // 2]
            if far.size:
                assert np.max(far) < 0.5 * np.max(col)


class TestProject1d:
    def test_recovers_basis_element(self):
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 10), 3))
        target = np.zeros(basis.dimension)
        target[2] = 1.0
        xs = np.linspace(0, 1, 8001)
        coeffs = project_1d(xs, basis.spline(target)(xs), basis).coefficients
        npt.assert_allclose(coeffs, target, atol=1e-6)

    def test_zero_samples(self):
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 6), 2))
        xs = np.linspace(0, 1, 101)
        npt.assert_allclose(project_1d(xs, np.zeros_like(xs), basis).coefficients, 0.0)

    def test_sine_reconstruction_error(self):
        # oracle value: the best approximation carries a boundary-layer
        # error ~|f'(0)|*h^{3/2} because every basis function has k zero
        # derivatives at the ends while sin(2*pi*x) has slope 2*pi there
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 34), 3))
        xs = np.linspace(0, 1, 4001)
        s = project_1d(xs, np.sin(2 * np.pi * xs), basis)
        breaks = np.concatenate([basis.spec.knots.knots, np.linspace(0, 1, 4097)])
        err = fine_l2_norm(lambda x: np.sin(2 * np.pi * x) - s(x), breaks)
        npt.assert_allclose(err, 2.3779e-2, rtol=1e-3)

    def test_boundary_compatible_function_reaches_high_accuracy(self):
        # sin(pi*x)^3 satisfies the zero boundary conditions of order 3
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 32), 3))
        xs = np.linspace(0, 1, 4001)
        f = lambda x: np.sin(np.pi * x) ** 3
        s = project_1d(xs, f(xs), basis)
        breaks = np.concatenate([basis.spec.knots.knots, np.linspace(0, 1, 4097)])
        assert fine_l2_norm(lambda x: f(x) - s(x), breaks) < 2e-6

    def test_idempotence(self):
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 14), 2))
        rng = np.random.default_rng(9)
        xs = np.linspace(0, 1, 3001)
        s1 = project_1d(xs, np.interp(xs, [0, 0.4, 0.7, 1], rng.standard_normal(4)), basis)
        s2 = project_1d(xs, s1(xs), basis)
        npt.assert_allclose(s2.coefficients, s1.coefficients, atol=1e-6)

    def test_too_few_samples(self):
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 10), 2))
        xs = np.linspace(0, 1, basis.dimension - 1)
        with pytest.raises(RankError):
            project_1d(xs, np.zeros_like(xs), basis)

    def test_abscissae_outside_domain(self):
        basis = orthonormalize(BasisSpec(uniform_knots(0, 1, 6), 1))
        xs = np.linspace(-0.1, 1.0, 50)
        with pytest.raises(DomainError):
            project_1d(xs, np.zeros_like(xs), basis)
