import math

import numpy as np
import pytest

from flis.errors import InvalidArgumentError
from flis.numerics import eig_extremes, lasso_batch
from flis.train import (
    ClassModel,
    ClassTrainingSet,
    FlisHyperParams,
    assemble_partition_model,
    estimate_sparsity,
    odl_init,
    rho_max,
    task_seed,
    train_class,
)

from conftest import unit_columns


def _odl_obj(Y, D, X, lam):
    return float(((Y - D @ X) ** 2).sum() + lam * np.abs(X).sum())


class TestOdlInit:
    def test_recovers_generators(self):
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(rng.standard_normal((12, 4)))
        Y = Q[:, rng.integers(0, 4, 400)]
        D, X = odl_init(Y, 4, 1e-3, seed=1)
        err = ((Y - D @ X) ** 2).sum() / Y.shape[1]
        assert err < 1e-3

    def test_k_equals_n_orthonormal(self):
        Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((6, 6)))
        D, X = odl_init(Q, 6, 1e-8, seed=0)
        assert ((Q - D @ X) ** 2).sum() < 1e-6

    def test_unit_columns_and_beats_random_start(self):
        rng = np.random.default_rng(3)
        Y = unit_columns(np.abs(rng.standard_normal((10, 300))))
        D, X = odl_init(Y, 8, 0.1, seed=4)
        np.testing.assert_allclose(np.linalg.norm(D, axis=0), 1.0, atol=1e-8)
        D0 = unit_columns(rng.standard_normal((10, 8)))
        assert _odl_obj(Y, D, X, 0.1) <= _odl_obj(Y, D0, lasso_batch(D0, Y, 0.1), 0.1)

    def test_deterministic(self):
        Y = np.random.default_rng(5).standard_normal((8, 100))
        a = odl_init(Y, 5, 0.1, seed=9)
        b = odl_init(Y, 5, 0.1, seed=9)
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()

    def test_k_larger_than_n(self):
        with pytest.raises(InvalidArgumentError):
            odl_init(np.ones((3, 2)), 3, 0.1, seed=0)


class TestSparsity:
    def test_mean_of_counts(self):
        X = np.zeros((5, 3))
        X[0, 0] = 1
        X[:2, 1] = 1
        X[:3, 2] = 1
        assert estimate_sparsity(X) == 2

    def test_constant_count(self):
        X = np.zeros((9, 4))
        X[:5] = 0.3
        assert estimate_sparsity(X) == 5

    def test_half_rounds_up(self):
        X = np.zeros((4, 2))
        X[0, 0] = 1
        X[:2, 1] = 1
        assert estimate_sparsity(X) == 2

    def test_tiny_entries_ignored_and_zero_floor(self):
        assert estimate_sparsity(np.full((3, 4), 1e-12)) == 1
        assert estimate_sparsity(np.zeros((3, 4))) == 1


class TestRhoMax:
    def test_identity(self):
        assert rho_max(np.eye(4), np.eye(4)) == pytest.approx(1.0)

    def test_rank_deficient(self):
        X = np.zeros((3, 5))
        X[0] = 1.0
        assert rho_max(X, np.eye(3)) == 0.0

    def test_zero_complement_is_unbounded(self):
        assert math.isinf(rho_max(np.eye(3), np.zeros((3, 4))))
        assert math.isinf(rho_max(np.eye(3), np.zeros((3, 0))))

    def test_sufficient_on_random_codes(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            X = rng.standard_normal((4, 30))
            Xh = rng.standard_normal((4, 60))
            r = rho_max(X, Xh)
            F = X @ X.T / 30 - 0.99 * r * Xh @ Xh.T / 60
            assert eig_extremes(F)[0] > 0

    def test_tight_when_extreme_directions_coincide(self):
        # shared left singular vectors, weakest in-class direction = strongest complement one
        rng = np.random.default_rng(12)
        U, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        V1, _ = np.linalg.qr(rng.standard_normal((30, 4)))
        V2, _ = np.linalg.qr(rng.standard_normal((60, 4)))
        X = U @ np.diag([3.0, 2.5, 2.0, 1.0]) @ V1.T
        Xh = U @ np.diag([1.0, 1.2, 1.5, 4.0]) @ V2.T
        r = rho_max(X, Xh)
        F = lambda rho: X @ X.T / 30 - rho * Xh @ Xh.T / 60  # noqa: E731
        assert eig_extremes(F(0.99 * r))[0] > 0
        assert eig_extremes(F(1.01 * r))[0] < 0


def _subspace_sets(seed=0, n=120, d=16, k=3):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, 3 * k)))
    bases = [Q[:, i * k:(i + 1) * k] for i in range(3)]

    def draw(c, m):
        return bases[c] @ np.abs(rng.standard_normal((k, m)))

    return bases, draw


def _small_hp(**kw):
    base = dict(K=6, max_iters=8, odl_epochs=3, odl_batch=64, dict_sweeps=10)
    base.update(kw)
    return FlisHyperParams(**base)


class TestTrainClass:
    def _set(self, draw, c=0, n=120):
        others = np.hstack([draw(j, n) for j in range(3) if j != c])
        return ClassTrainingSet.for_class(draw(c, n), others, c)

    def test_invariants_along_the_run(self):
        _, draw = _subspace_sets(1)
        cm = train_class(self._set(draw), _small_hp(), seed=3)
        tr = cm.trace
        np.testing.assert_allclose(np.linalg.norm(cm.D, axis=0), 1.0, atol=1e-8)
        assert cm.W.shape == (3, 6) and cm.L >= 1
        assert min(tr.f_min_eig) >= -1e-8
        assert all(r <= m for r, m in zip(tr.rho_eff, tr.rho_max))
        assert min(tr.objective) <= tr.objective[0] + 1e-6
        assert tr.objective[tr.best_iter] == min(tr.objective)
        for sweeps in tr.surrogate:
            assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(sweeps, sweeps[1:]))

    def test_rho_zero_ignores_complements(self):
        _, draw = _subspace_sets(2)
        ts = self._set(draw)
        bare = ClassTrainingSet(ts.Y, ts.Y[:, :0], ts.H, ts.H[:, :0])
        a = train_class(ts, _small_hp(rho=0.0), seed=4)
        b = train_class(bare, _small_hp(rho=0.5), seed=4)
        assert np.linalg.norm(a.D - b.D) <= 1e-10
        assert np.linalg.norm(a.W - b.W) <= 1e-10

    def test_deterministic(self):
        _, draw = _subspace_sets(3)
        ts = self._set(draw)
        a = train_class(ts, _small_hp(), seed=7)
        b = train_class(ts, _small_hp(), seed=7)
        assert a.D.tobytes() == b.D.tobytes() and a.W.tobytes() == b.W.tobytes()

    def test_orthogonal_subspaces_margin(self):
        _, draw = _subspace_sets(4)
        cm = train_class(self._set(draw, c=1), _small_hp(), seed=0)
        inside, outside = draw(1, 50), draw(0, 50)

        def resid(Y):
            X = lasso_batch(cm.D, Y, 0.01, positive=True)
            return float(((Y - cm.D @ X) ** 2).sum(0).mean())

        assert 2.0 * resid(inside) <= resid(outside)

    def test_beta_zero_fits_classifier_afterwards(self):
        _, draw = _subspace_sets(5)
        cm = train_class(self._set(draw, c=2), _small_hp(beta=0.0), seed=1)
        assert np.isfinite(cm.W).all() and np.abs(cm.W[2]).sum() > 0

    def test_too_few_samples(self):
        ts = ClassTrainingSet.for_class(np.ones((4, 3)), np.ones((4, 6)), 0)
        with pytest.raises(InvalidArgumentError):
            train_class(ts, _small_hp(K=5))

    def test_rejects_bad_labels(self):
        ts = ClassTrainingSet(np.ones((4, 3)), np.ones((4, 0)), np.ones((3, 3)), np.ones((3, 0)))
        with pytest.raises(InvalidArgumentError):
            train_class(ts, _small_hp(K=2))

    def test_hyperparameter_validation(self):
        with pytest.raises(InvalidArgumentError):
            FlisHyperParams(rho=-1).validate()
        with pytest.raises(InvalidArgumentError):
            FlisHyperParams(lam=0).validate()


class TestAssemble:
    def _cm(self, v, K=2, d=3):
        return ClassModel(np.full((d, K), v), np.full((3, K), v), 1)

    def test_layout(self):
        pm = assemble_partition_model(self._cm(0.0), self._cm(1.0), self._cm(2.0))
        assert pm.D.shape == (3, 6)
        for j in range(6):
            assert (pm.D[:, j] == j // 2).all() and (pm.W[:, j] == j // 2).all()

    def test_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            assemble_partition_model(self._cm(0.0), self._cm(1.0, K=3), self._cm(2.0))


def test_task_seeds_are_distinct_and_stable():
    seeds = {task_seed(7, p, c) for p in range(4) for c in range(3)}
    assert len(seeds) == 12
    assert task_seed(7, 1, 2) == task_seed(7, 1, 2)
