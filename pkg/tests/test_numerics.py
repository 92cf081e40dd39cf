import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flis.errors import InvalidArgumentError, NotPSDError, SingularMatrixError
from flis.numerics import (
    dict_update,
    eig_extremes,
    lasso_batch,
    lasso_objective,
    nonneg_lasso,
    omp_batch,
    ridge_classifier,
    trace_objective,
)

from conftest import unit_columns
from oracles import charpoly_eigs, naive_omp, nnlasso_objective, pgd_dict, projected_gradient_nnlasso


class TestOmp:
    def test_identity_dictionary_selects_matching_atom(self, backend):
        x = omp_batch(np.eye(3), np.array([0.0, 2.0, 0.0]), 1)
        np.testing.assert_array_equal(x[:, 0], [0.0, 2.0, 0.0])

    def test_full_support_reproduces_signal(self, backend, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        Y = rng.standard_normal((6, 5))
        X = omp_batch(Q, Y, 6)
        assert np.abs(Y - Q @ X).max() < 1e-10

    @pytest.mark.parametrize("L", [1, 2, 3])
    def test_matches_naive_omp(self, backend, rng, L):
        for _ in range(100):
            D = unit_columns(rng.standard_normal((8, 12)))
            y = rng.standard_normal(8)
            x = omp_batch(D, y, L)[:, 0]
            np.testing.assert_allclose(x, naive_omp(D, y, L), atol=1e-10, rtol=0)

    def test_support_and_orthogonal_residual(self, backend, rng):
        D = unit_columns(rng.standard_normal((10, 20)))
        Y = rng.standard_normal((10, 40))
        X = omp_batch(D, Y, 4)
        assert ((X != 0).sum(axis=0) <= 4).all()
        R = Y - D @ X
        for i in range(Y.shape[1]):
            sel = np.flatnonzero(X[:, i])
            assert np.abs(D[:, sel].T @ R[:, i]).max() <= 1e-8

    def test_tie_breaks_to_lowest_index(self, backend):
        D = unit_columns(np.array([[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 1.0]]))
        x = omp_batch(D, np.array([1.0, 0.0, 0.0]), 1)[:, 0]
        assert x[0] != 0 and x[1] == 0

    def test_rejects_bad_sparsity(self):
        with pytest.raises(InvalidArgumentError):
            omp_batch(np.eye(3), np.ones(3), 4)
        with pytest.raises(InvalidArgumentError):
            omp_batch(np.eye(3), np.ones(3), 0)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            omp_batch(np.eye(3), np.array([np.nan, 0, 0]), 1)


class TestNonnegLasso:
    def test_large_lambda_gives_zero(self, backend, rng):
        D = unit_columns(rng.standard_normal((6, 10)))
        m = rng.standard_normal(6)
        lam = 2.0 * np.max(D.T @ m) + 1e-9
        np.testing.assert_array_equal(nonneg_lasso(D, m, lam), np.zeros(10))

    def test_orthonormal_exact_recovery(self, backend, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        a_true = np.abs(rng.standard_normal(5))
        np.testing.assert_allclose(nonneg_lasso(Q, Q @ a_true, 0.0), a_true, atol=1e-9)

    def test_matches_projected_gradient_oracle(self, backend):
        rng = np.random.default_rng(2)
        D = rng.standard_normal((20, 6, 10))
        m = rng.standard_normal((20, 6))
        ref = projected_gradient_nnlasso(D, m, 0.1)
        for b in range(20):
            a = nonneg_lasso(D[b], m[b], 0.1)
            assert (a >= 0).all()
            assert nnlasso_objective(D[b], m[b], a, 0.1) <= \
                nnlasso_objective(D[b], m[b], ref[b], 0.1) + 1e-5

    def test_kkt_conditions(self, backend, rng):
        for _ in range(20):
            D = unit_columns(rng.standard_normal((12, 8)))
            m = rng.standard_normal(12)
            lam = 0.2
            a = nonneg_lasso(D, m, lam)
            g = -2.0 * D.T @ (m - D @ a) + lam
            pos = a > 0
            assert np.abs(g[pos]).max(initial=0.0) <= 1e-6
            assert g[~pos].min(initial=0.0) >= -1e-6

    def test_objective_helper(self):
        assert lasso_objective(np.eye(2), np.array([1.0, 0.0]), np.array([1.0, 0.0]), 0.5) == 0.5

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            nonneg_lasso(np.eye(2), np.array([np.inf, 0.0]), 0.1)


class TestRidge:
    def test_identity_codes(self, rng):
        H = rng.standard_normal((3, 4))
        np.testing.assert_allclose(ridge_classifier(np.eye(4), H, 0.0), H, atol=1e-12)

    def test_huge_regulariser_vanishes(self, rng):
        W = ridge_classifier(rng.uniform(-1, 1, (5, 20)), rng.uniform(-1, 1, (3, 20)), 1e9)
        assert np.abs(W).max() < 1e-6

    def test_matches_direct_inverse(self, rng):
        X = rng.standard_normal((5, 20))
        H = rng.standard_normal((3, 20))
        ref = H @ X.T @ np.linalg.inv(X @ X.T + 0.3 * np.eye(5))
        np.testing.assert_allclose(ridge_classifier(X, H, 0.3), ref, atol=1e-9)

    def test_singular_without_regulariser(self):
        with pytest.raises(SingularMatrixError):
            ridge_classifier(np.zeros((3, 5)), np.ones((3, 5)), 0.0)


class TestEig:
    def test_diagonal(self):
        assert eig_extremes(np.diag([1.0, 2.0, 3.0])) == pytest.approx((1.0, 3.0), rel=1e-12)

    def test_rank_one(self, rng):
        x = rng.standard_normal(4)
        lo, hi = eig_extremes(np.outer(x, x))
        assert abs(lo) <= 1e-10
        assert hi == pytest.approx(x @ x, rel=1e-10)

    def test_matches_characteristic_polynomial(self, rng):
        for _ in range(10):
            A = rng.standard_normal((5, 5))
            S = A + A.T
            ev = charpoly_eigs(S)
            lo, hi = eig_extremes(S)
            assert lo == pytest.approx(ev[0], abs=1e-7)
            assert hi == pytest.approx(ev[-1], abs=1e-7)

    def test_rayleigh_bounds(self, rng):
        A = rng.standard_normal((6, 6))
        S = A @ A.T - 2 * np.eye(6)
        lo, hi = eig_extremes(S)
        for _ in range(100):
            x = rng.standard_normal(6)
            q = x @ S @ x / (x @ x)
            assert lo - 1e-12 <= q <= hi + 1e-12

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidArgumentError):
            eig_extremes(np.array([[1.0, 2.0], [0.0, 1.0]]))


def _random_psd(rng, K):
    A = rng.standard_normal((K, K + 2))
    return A @ A.T / K


class TestDictUpdate:
    def test_identity_f_recovers_e(self, rng):
        E = unit_columns(rng.standard_normal((5, 4))) * rng.uniform(0.1, 1.0, 4)
        D = dict_update(E, np.eye(4), rng.standard_normal((5, 4)))
        np.testing.assert_allclose(D, E, atol=1e-12)

    def test_stationary_point_is_fixed(self, rng):
        D0 = unit_columns(rng.standard_normal((6, 4))) * 0.9
        F = _random_psd(rng, 4)
        D = dict_update(D0 @ F, F, D0)
        np.testing.assert_allclose(D, D0, atol=1e-12)

    def test_beats_projected_gradient_oracle(self, rng):
        for _ in range(5):
            F = _random_psd(rng, 4)
            E = rng.standard_normal((7, 4))
            D0 = unit_columns(rng.standard_normal((7, 4)))
            D = dict_update(E, F, D0, max_sweeps=5000, tol=0.0)
            ref = pgd_dict(E, F, D0)
            assert trace_objective(E, F, D) <= trace_objective(E, F, ref) + 1e-6
            assert (np.linalg.norm(D, axis=0) <= 1 + 1e-12).all()

    def test_monotone_sweeps(self, rng):
        trace = []
        dict_update(rng.standard_normal((8, 5)), _random_psd(rng, 5),
                    rng.standard_normal((8, 5)), trace=trace)
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_zero_weight_column_untouched(self, rng):
        F = np.diag([1.0, 0.0, 2.0])
        D0 = rng.standard_normal((4, 3))
        D = dict_update(rng.standard_normal((4, 3)), F, D0)
        np.testing.assert_array_equal(D[:, 1], D0[:, 1])

    def test_rejects_indefinite(self, rng):
        with pytest.raises(NotPSDError):
            dict_update(np.zeros((2, 2)), np.diag([1.0, -1.0]), np.zeros((2, 2)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-5, 5)))
def test_eig_extremes_bracket_diagonal(A):
    S = A + A.T
    lo, hi = eig_extremes(S)
    assert lo - 1e-9 <= np.diag(S).min() and np.diag(S).max() <= hi + 1e-9


class TestLassoSolvers:
    """The active-set solver and coordinate descent must land on the same optimum."""

    @pytest.mark.parametrize("positive", [True, False])
    def test_active_set_matches_coordinate_descent(self, backend, positive):
        rng = np.random.default_rng(5)
        for trial in range(12):
            d, K = int(rng.integers(3, 12)), int(rng.integers(3, 25))
            D = rng.standard_normal((d, K))
            if trial % 2:
                D = np.abs(D)  # strongly coherent atoms, the hard case for CD
            D = unit_columns(D)
            Y = rng.standard_normal((d, 8))
            A = lasso_batch(D, Y, 0.1, positive=positive)
            C = lasso_batch(D, Y, 0.1, positive=positive, method="cd", tol=1e-12,
                            max_sweeps=200_000)
            fa = ((Y - D @ A) ** 2).sum(0) + 0.1 * np.abs(A).sum(0)
            fc = ((Y - D @ C) ** 2).sum(0) + 0.1 * np.abs(C).sum(0)
            assert (fa <= fc + 1e-9).all()
            if positive:
                assert (A >= 0).all()

    def test_signed_kkt(self, backend, rng):
        D = unit_columns(rng.standard_normal((10, 16)))
        Y = rng.standard_normal((10, 20))
        lam = 0.3
        A = lasso_batch(D, Y, lam)
        G = -2.0 * D.T @ (Y - D @ A)
        on = A != 0
        np.testing.assert_allclose(G[on], -lam * np.sign(A[on]), atol=1e-8)
        assert np.abs(G[~on]).max(initial=0.0) <= lam + 1e-8

    def test_unknown_method(self):
        with pytest.raises(InvalidArgumentError):
            lasso_batch(np.eye(2), np.ones(2), 0.1, method="magic")


def test_backends_agree_on_nnqp(rng):
    from flis import _fallback
    try:
        from flis import _kernels
    except ImportError:
        pytest.skip("extension not built")
    D = unit_columns(np.abs(rng.standard_normal((9, 20))))
    G = D.T @ D
    B = D.T @ np.abs(rng.standard_normal((9, 30))) - 0.05
    np.testing.assert_allclose(_kernels.nnqp_gram(G, B), _fallback.nnqp_gram(G, B), atol=1e-10)
