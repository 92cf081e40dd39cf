"""Per-class discriminative dictionary learning with an out-of-class penalty.

Each class gets a dictionary ``D`` and linear classifier ``W`` that represent
in-class features well and complementary-class features poorly. Training
alternates L0 sparse coding (OMP) of the label-augmented data with a convex
trace-form dictionary update, keeping the discrimination weight small enough
that the update stays convex.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .numerics import dict_update, eig_extremes, lasso_batch, omp_batch, ridge_classifier

log = logging.getLogger(__name__)

N_CLASSES = 3
CLASS_NAMES = ("brain", "csf", "subdural")


@dataclass
class FlisHyperParams:
    K: int = 80
    beta: float = 2.0
    rho: float = 0.5
    lam: float = 0.1
    lam1: float = 0.01
    max_iters: int = 30
    tol: float = 1e-4
    odl_epochs: int = 20
    odl_batch: int = 256
    dict_sweeps: int = 30

    def validate(self):
        if self.K < 1:
            raise InvalidArgumentError("K must be >= 1")
        if self.beta < 0 or self.rho < 0:
            raise InvalidArgumentError("beta and rho must be >= 0")
        if self.lam <= 0 or self.lam1 < 0:
            raise InvalidArgumentError("lam must be > 0 and lam1 >= 0")
        if self.max_iters < 0 or self.odl_epochs < 1 or self.odl_batch < 1:
            raise InvalidArgumentError("iteration counts must be positive")


def one_hot(cls, n, n_classes=N_CLASSES):
    H = np.zeros((n_classes, n))
    H[cls, :] = 1.0
    return H


@dataclass
class ClassTrainingSet:
    Y: np.ndarray
    Yhat: np.ndarray
    H: np.ndarray
    Htilde: np.ndarray

    @property
    def N(self):
        return self.Y.shape[1]

    @property
    def Nhat(self):
        return self.Yhat.shape[1]

    @classmethod
    def for_class(cls, Y, Yhat, label):
        """In-class ``Y`` against complements ``Yhat``; both label sets are the class's one-hot."""
        Y = np.asarray(Y, dtype=np.float64)
        Yhat = np.asarray(Yhat, dtype=np.float64).reshape(Y.shape[0], -1)
        return cls(Y, Yhat, one_hot(label, Y.shape[1]), one_hot(label, Yhat.shape[1]))

    def validate(self):
        if self.Y.ndim != 2 or self.Yhat.ndim != 2 or self.Y.shape[0] != self.Yhat.shape[0]:
            raise InvalidArgumentError("training set: Y and Yhat must share feature length")
        if self.H.shape[1] != self.N or self.Htilde.shape[1] != self.Nhat:
            raise InvalidArgumentError("training set: label matrices misaligned")
        for H in (self.H, self.Htilde):
            if H.size and not (np.isin(H, (0.0, 1.0)).all() and (H.sum(axis=0) == 1).all()):
                raise InvalidArgumentError("training set: label columns must be one-hot")
        if not (np.isfinite(self.Y).all() and np.isfinite(self.Yhat).all()):
            raise InvalidArgumentError("training set: non-finite features")


@dataclass
class TrainingTrace:
    L: int = 0
    objective: list = field(default_factory=list)  # index 0 = after initialisation
    rho_eff: list = field(default_factory=list)
    rho_max: list = field(default_factory=list)
    f_min_eig: list = field(default_factory=list)
    surrogate: list = field(default_factory=list)  # one list of sweep values per update
    best_iter: int = 0
    converged: bool = False


@dataclass
class ClassModel:
    D: np.ndarray
    W: np.ndarray
    L: int
    trace: TrainingTrace | None = field(default=None, repr=False, compare=False)

    @property
    def converged(self):
        return self.trace is None or self.trace.converged


@dataclass
class PartitionModel:
    D: np.ndarray
    W: np.ndarray


def _unit_columns(A, rng=None, pool=None):
    A = np.array(A, dtype=np.float64, copy=True)
    norms = np.linalg.norm(A, axis=0)
    dead = norms < 1e-10
    if dead.any() and pool is not None and pool.shape[1]:
        picks = rng.integers(0, pool.shape[1], dead.sum())
        A[:, dead] = pool[:, picks]
        norms = np.linalg.norm(A, axis=0)
        dead = norms < 1e-10
    norms[dead] = 1.0
    return A / norms


def _odl_objective(Y, D, X, lam):
    R = Y - D @ X
    return float(np.sum(R * R) + lam * np.abs(X).sum())


def odl_init(Y, K, lam, seed, epochs=20, batch=256):
    """Online dictionary learning initialisation.

    Mini-batches alternate L1 coding and one block-coordinate pass over
    decayed sufficient statistics; atoms left unused for a whole epoch are
    replaced by the worst-represented sample of the last batch. Returns
    ``(D0, X0)`` where ``X0`` codes all of ``Y`` against the final ``D0``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    d, N = Y.shape
    if K > N:
        raise InvalidArgumentError(f"odl_init: K={K} exceeds number of samples N={N}")
    if lam <= 0:
        raise InvalidArgumentError("odl_init: lam must be > 0")
    rng = np.random.default_rng(seed)
    D = _unit_columns(Y[:, rng.choice(N, K, replace=False)], rng, Y)
    A = np.zeros((K, K))
    B = np.zeros((d, K))
    n_batches = max(1, math.ceil(N / batch))
    decay = 1.0 - 1.0 / n_batches
    for _ in range(epochs):
        used = np.zeros(K, dtype=bool)
        order = rng.permutation(N)
        for b in range(n_batches):
            idx = order[b * batch:(b + 1) * batch]
            Yb = Y[:, idx]
            Xb = lasso_batch(D, Yb, lam)
            used |= (Xb != 0).any(axis=1)
            A = decay * A + Xb @ Xb.T / len(idx)
            B = decay * B + Yb @ Xb.T / len(idx)
            D = dict_update(B, 0.5 * (A + A.T), D, max_sweeps=1)
            D = _unit_columns(D, rng, Y)
        if not used.all():
            resid = np.linalg.norm(Yb - D @ Xb, axis=0)
            worst = np.argsort(-resid, kind="stable")
            dead = np.flatnonzero(~used)
            D[:, dead] = _unit_columns(Yb[:, worst[: len(dead)]], rng, Y)
            A[dead, :] = 0.0
            A[:, dead] = 0.0
            B[:, dead] = 0.0
    X = lasso_batch(D, Y, lam)
    return D, X


def estimate_sparsity(X0):
    """Average number of nonzeros per code column, rounded half up, in [1, K]."""
    X0 = np.asarray(X0)
    K = X0.shape[0]
    if X0.size == 0 or not np.any(np.abs(X0) > 1e-10):
        return 1
    mean = float((np.abs(X0) > 1e-10).sum(axis=0).mean())
    return int(min(max(math.floor(mean + 0.5), 1), K))


def rho_max(X, Xhat):
    """Largest discrimination weight keeping ``XX^T/N - rho XhXh^T/Nh`` positive definite.

    Returns ``inf`` when the complementary codes are all zero.
    """
    X = np.asarray(X, dtype=np.float64)
    Xhat = np.asarray(Xhat, dtype=np.float64)
    N, Nhat = X.shape[1], Xhat.shape[1]
    if Nhat == 0:
        return math.inf
    _, top_hat = eig_extremes(Xhat @ Xhat.T)
    if top_hat <= 0:
        return math.inf
    low, top = eig_extremes(X @ X.T)
    if low <= 1e-12 * max(top, 1.0):
        return 0.0
    return (Nhat / N) * low / top_hat


def _objective(Ynew, Yhnew, Dnew, X, Xh, rho):
    R = Ynew - Dnew @ X
    val = float(np.sum(R * R)) / Ynew.shape[1]
    if rho > 0 and Yhnew.shape[1]:
        Rh = Yhnew - Dnew @ Xh
        val -= rho * float(np.sum(Rh * Rh)) / Yhnew.shape[1]
    return val


def _code(Dnew, Ynew, Yhnew, L):
    Xall = omp_batch(Dnew, np.hstack([Ynew, Yhnew]), L)
    N = Ynew.shape[1]
    return Xall[:, :N], Xall[:, N:]


def train_class(ts, hp, seed=0, L=None):
    """Learn one class's ``(D, W)``.

    With ``hp.rho == 0`` the complementary samples play no part at all and
    the procedure is plain label-consistent dictionary learning. The
    returned model is the tracked iterate with the lowest objective, so it is
    never worse than the initialisation.
    """
    ts.validate()
    hp.validate()
    d, N = ts.Y.shape
    K = hp.K
    if N < K:
        raise InvalidArgumentError(f"train_class: N={N} training samples < K={K}")
    rng = np.random.default_rng(seed)
    trace = TrainingTrace()
    use_hat = hp.rho > 0 and ts.Nhat > 0
    Yhat = ts.Yhat if use_hat else ts.Yhat[:, :0]
    Htil = ts.Htilde if use_hat else ts.Htilde[:, :0]
    C = ts.H.shape[0]

    norms = np.linalg.norm(ts.Y, axis=0)
    norms[norms == 0] = 1.0
    D0, X0 = odl_init(ts.Y / norms, K, hp.lam, rng.integers(2**32),
                      epochs=hp.odl_epochs, batch=hp.odl_batch)
    trace.L = L = estimate_sparsity(X0) if L is None else int(L)
    L = min(L, K)

    Ybar = np.hstack([ts.Y, Yhat])
    Hbar = np.hstack([ts.H, Htil])
    Xbar = omp_batch(D0, Ybar, L)
    W0 = ridge_classifier(Xbar, Hbar, hp.lam1)

    sb = math.sqrt(hp.beta)
    Ynew = np.vstack([ts.Y, sb * ts.H])
    Yhnew = np.vstack([Yhat, sb * Htil])
    pool = np.hstack([Ynew, Yhnew])
    Dnew = _unit_columns(np.vstack([D0, sb * W0]), rng, pool)
    X, Xh = _code(Dnew, Ynew, Yhnew, L)
    best = (_objective(Ynew, Yhnew, Dnew, X, Xh, hp.rho), Dnew, X)
    trace.objective.append(best[0])

    for it in range(1, hp.max_iters + 1):
        rmax = rho_max(X, Xh) if use_hat else math.inf
        reff = min(hp.rho, 0.9 * rmax) if use_hat else 0.0
        trace.rho_max.append(rmax)
        trace.rho_eff.append(reff)
        E = Ynew @ X.T / N
        F = X @ X.T / N
        if reff > 0:
            E -= reff * (Yhnew @ Xh.T) / Yhnew.shape[1]
            F -= reff * (Xh @ Xh.T) / Yhnew.shape[1]
        F = 0.5 * (F + F.T)
        trace.f_min_eig.append(eig_extremes(F)[0])
        sweeps = []
        Dprev = Dnew
        Dnew = dict_update(E, F, Dnew, max_sweeps=hp.dict_sweeps, trace=sweeps)
        trace.surrogate.append(sweeps)
        Dnew = _unit_columns(Dnew, rng, pool)
        X, Xh = _code(Dnew, Ynew, Yhnew, L)
        obj = _objective(Ynew, Yhnew, Dnew, X, Xh, hp.rho)
        trace.objective.append(obj)
        log.debug("iter %d objective %.6g rho_eff %.3g", it, obj, reff)
        if obj < best[0]:
            best = (obj, Dnew, X)
            trace.best_iter = it
        change = np.linalg.norm(Dnew - Dprev) / max(np.linalg.norm(Dprev), 1e-300)
        if change < hp.tol:
            trace.converged = True
            break
    if hp.max_iters == 0:
        trace.converged = True
    if not trace.converged:
        log.warning("train_class: not converged after %d iterations", hp.max_iters)

    _, Dnew, X = best
    Dtop = Dnew[:d]
    scale = np.linalg.norm(Dtop, axis=0)
    scale[scale < 1e-12] = 1.0
    D = Dtop / scale
    if hp.beta > 0:
        W = Dnew[d:] / sb / scale
    else:
        # no label rows were learned; fit the classifier on the final codes
        W = ridge_classifier(omp_batch(D, ts.Y, L), ts.H, hp.lam1)
    return ClassModel(D, W, L, trace)


def assemble_partition_model(brain, csf, subdural):
    """Concatenate the three class models column-wise in brain, CSF, subdural order."""
    models = (brain, csf, subdural)
    d, K = brain.D.shape
    for m in models:
        if m.D.shape != (d, K) or m.W.shape[1] != K:
            raise InvalidArgumentError("assemble_partition_model: class models differ in shape")
    return PartitionModel(np.hstack([m.D for m in models]), np.hstack([m.W for m in models]))


def task_seed(seed, *keys):
    """Independent, reproducible seed for one (partition, class, ...) task."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])
