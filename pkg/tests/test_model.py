import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ortho_group

from conftest import C, F, L, R1, R2, random_psd, random_stable
from hidden_reach import ObserverDesign, SteadyState, SystemModel, solve_discrete_lyapunov, spectral_radius, sqrt_sym
from hidden_reach import steady_state
from hidden_reach.errors import DegeneracyError, DimensionError, InstabilityError, ValidationError
from hidden_reach.model import KRONECKER_MAX_N, Tolerances


def series(A, Q, terms=10_000):
    X = np.zeros_like(Q)
    term = Q.copy()
    for _ in range(terms):
        X += term
        term = A @ term @ A.T
        if np.abs(term).max() < 1e-300:
            break
    return X


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(2)) == pytest.approx(1.0, rel=1e-9)

    def test_example_plant(self):
        # roots of l^2 - 0.96 l + 0.2089
        root = abs((0.96 + np.sqrt(complex(0.96**2 - 4 * 0.2089))) / 2)
        assert spectral_radius(F) == pytest.approx(root, rel=1e-9)
        assert spectral_radius(F) == pytest.approx(0.6266, abs=1e-3)

    def test_zero(self):
        assert spectral_radius(np.zeros((3, 3))) == 0.0

    def test_nonsquare(self):
        with pytest.raises(DimensionError):
            spectral_radius(np.ones((2, 3)))


class TestLyapunov:
    def test_zero_dynamics(self):
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(solve_discrete_lyapunov(np.zeros((2, 2)), Q), Q)

    def test_scalar(self):
        np.testing.assert_allclose(solve_discrete_lyapunov([[0.5]], [[1.0]]), [[4.0 / 3.0]], rtol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_series(self, seed):
        rng = np.random.default_rng(seed)
        A = random_stable(rng, 3, 0.9)
        X = solve_discrete_lyapunov(A, np.eye(3))
        np.testing.assert_allclose(X, series(A, np.eye(3)), atol=1e-8)

    def test_doubling_branch(self):
        rng = np.random.default_rng(3)
        n = KRONECKER_MAX_N + 2
        A = random_stable(rng, n, 0.8)
        Q = random_psd(rng, n)
        X = solve_discrete_lyapunov(A, Q)
        assert np.linalg.norm(A @ X @ A.T - X + Q) <= 1e-8 * np.linalg.norm(Q)

    def test_unstable(self):
        with pytest.raises(InstabilityError):
            solve_discrete_lyapunov(np.diag([1.01, 0.2]), np.eye(2))

    def test_asymmetric_q(self):
        with pytest.raises(ValidationError):
            solve_discrete_lyapunov(np.zeros((2, 2)), np.array([[1.0, 0.3], [0.0, 1.0]]))

    @given(st.integers(1, 6), st.integers(0, 2**31 - 1), st.floats(0.05, 0.97))
    def test_property_symmetric_psd_series(self, n, seed, rho):
        rng = np.random.default_rng(seed)
        A = random_stable(rng, n, rho)
        Q = random_psd(rng, n)
        X = solve_discrete_lyapunov(A, Q)
        np.testing.assert_array_equal(X, X.T)
        assert np.linalg.eigvalsh(X).min() >= -1e-9 * max(1.0, np.abs(X).max())
        assert np.linalg.norm(A @ X @ A.T - X + Q) <= 1e-8 * max(1.0, np.linalg.norm(Q))


class TestSqrtSym:
    def test_identity(self):
        np.testing.assert_allclose(sqrt_sym(np.eye(3)), np.eye(3))

    def test_diag(self):
        np.testing.assert_allclose(sqrt_sym(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    @given(st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_reconstruction(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, n))
        S = A.T @ A
        W = sqrt_sym(S)
        np.testing.assert_array_equal(W, W.T)
        assert np.abs(W @ W - S).max() <= 1e-10 * max(1.0, np.abs(S).max())

    @given(st.integers(2, 5), st.integers(0, 2**31 - 1))
    def test_commutes_with_rotation(self, n, seed):
        rng = np.random.default_rng(seed)
        S = random_psd(rng, n)
        Q = ortho_group.rvs(n, random_state=seed)
        np.testing.assert_allclose(sqrt_sym(Q @ S @ Q.T), Q @ sqrt_sym(S) @ Q.T, atol=1e-9 * max(1, np.abs(S).max()))

    def test_negative(self):
        with pytest.raises(ValidationError):
            sqrt_sym(np.diag([1.0, -1e-3]))


class TestSystemModel:
    def test_dimensions(self, model):
        assert (model.n, model.m) == (2, 1)
        assert model.G.shape == (2, 1)

    def test_bad_c(self):
        with pytest.raises(DimensionError):
            SystemModel(F, np.ones((1, 3)), R1, R2)

    def test_bad_cov(self):
        with pytest.raises(ValidationError):
            SystemModel(F, C, -R1, R2)

    def test_frozen_arrays(self, model):
        with pytest.raises(ValueError):
            model.F[0, 0] = 1.0

    def test_open_loop_unstable(self):
        from hidden_reach.errors import UnboundedSetError

        with pytest.raises(UnboundedSetError):
            SystemModel(np.diag([1.2, 0.1]), C, R1, R2).require_open_loop_stable()

    def test_observer_not_schur(self, model):
        with pytest.raises(InstabilityError):
            ObserverDesign(np.array([[5.0], [0.0]])).require_schur(model)

    def test_tolerances_override(self):
        tol = Tolerances(psd=1e-2)
        SystemModel(F, C, R1 - 1e-3 * np.eye(2) * 0 + np.diag([0.0, 0.0]), R2, tol=tol)


class TestSteadyState:
    def test_sigma_value(self, steady):
        # Lyapunov solution of the example; the published rounding differs, see the acceptance suite
        assert steady.Sigma[0, 0] == pytest.approx(3.23163345, abs=1e-6)

    @pytest.mark.xfail(strict=True, reason="published residual covariance 3.26 does not follow from the stated data")
    def test_sigma_published(self, steady):
        assert abs(steady.Sigma[0, 0] - 3.26) <= 0.01

    def test_fields_consistent(self, model, observer, steady):
        A = observer.error_matrix(model)
        Q = model.R1 + L @ model.R2 @ L.T
        assert np.linalg.norm(A @ steady.P_err @ A.T - steady.P_err + Q) <= 1e-8 * np.linalg.norm(Q)
        np.testing.assert_allclose(steady.Sigma_sqrt @ steady.Sigma_sqrt, steady.Sigma, atol=1e-12)
        np.testing.assert_allclose(steady.Sigma_inv @ steady.Sigma, np.eye(1), atol=1e-12)

    def test_matches_recursion(self, model, observer, steady):
        A = observer.error_matrix(model)
        Q = model.R1 + L @ model.R2 @ L.T
        P = model.R0.copy()
        for _ in range(10_000):
            P = A @ P @ A.T + Q
        np.testing.assert_allclose(steady.P_err, P, atol=1e-6)

    def test_zero_output(self):
        m = SystemModel(F, np.zeros((1, 2)), R1, R2)
        s = steady_state(m, ObserverDesign(L))
        np.testing.assert_allclose(s.Sigma, R2)

    def test_zero_gain(self, model):
        s = steady_state(model, ObserverDesign(np.zeros((2, 1))))
        np.testing.assert_allclose(s.P_err, solve_discrete_lyapunov(F, R1), atol=1e-12)

    def test_singular_sigma(self):
        m = SystemModel(F, np.zeros((1, 2)), R1, np.zeros((1, 1)))
        with pytest.raises(DegeneracyError, match="min eigenvalue"):
            steady_state(m, ObserverDesign(L))

    def test_immutable(self, steady):
        assert isinstance(steady, SteadyState)
        with pytest.raises(ValueError):
            steady.Sigma[0, 0] = 0.0
