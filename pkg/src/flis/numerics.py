"""Dense linear-algebra kernels and the core solvers.

Greedy L0 coding (batch OMP), nonnegative/signed L1 coding (active set or
coordinate descent), the ridge classifier, symmetric eigen-extremes and the block
coordinate descent dictionary update on the trace-form surrogate.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, NotPSDError, SingularMatrixError

#: OMP atoms whose |correlation| is within this of the maximum count as a tie.
TIE_TOL = 1e-12


def _finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError(f"{name}: non-finite input")


def _as_2d(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


def omp_batch(D, Y, L):
    """Orthogonal matching pursuit for every column of ``Y``.

    Atoms are selected by largest absolute correlation with the residual
    (lowest index on ties) and all selected coefficients are refit by least
    squares after each selection. ``D`` must have unit-norm columns.

    Returns ``X`` with shape ``(K, n)`` and at most ``L`` nonzeros per column.
    """
    D = np.asarray(D, dtype=np.float64)
    Y = _as_2d(Y)
    K = D.shape[1]
    if L < 1 or L > K:
        raise InvalidArgumentError(f"omp_batch: need 1 <= L <= K, got L={L}, K={K}")
    if D.shape[0] != Y.shape[0]:
        raise InvalidArgumentError("omp_batch: D and Y row counts differ")
    _finite("omp_batch", D, Y)
    return kernels.omp_gram(D.T @ D, D.T @ Y, int(L), TIE_TOL)


def lasso_batch(D, Y, lam, positive=False, tol=1e-8, max_sweeps=10_000, X0=None,
                method="active_set"):
    """Solve ``min_a ||y - D a||^2 + lam ||a||_1`` for every column of ``Y``.

    With ``positive=True`` the codes are constrained to be nonnegative.
    ``method="active_set"`` solves the equivalent nonnegative quadratic
    program exactly (a signed code is split into positive and negative
    parts); ``method="cd"`` runs cyclic coordinate descent until no
    coordinate moves by more than ``tol`` in a sweep, warm-started from
    ``X0`` if given. Both land on the same KKT point; the active-set solver
    is much faster when atoms are strongly correlated, as nonnegative image
    patches are. Returns the code matrix ``(K, n)``.
    """
    D = np.asarray(D, dtype=np.float64)
    Y = _as_2d(Y)
    if lam < 0:
        raise InvalidArgumentError("lasso: lambda must be >= 0")
    if D.shape[0] != Y.shape[0]:
        raise InvalidArgumentError("lasso: D and Y row counts differ")
    _finite("lasso", D, Y)
    G = D.T @ D
    C = D.T @ Y
    if method == "cd":
        X, _ = kernels.lasso_cd(G, C, float(lam), bool(positive),
                                float(tol), int(max_sweeps), X0)
        return X
    if method != "active_set":
        raise InvalidArgumentError(f"lasso: unknown method {method!r}")
    half = 0.5 * float(lam)
    if positive:
        return kernels.nnqp_gram(G, C - half)
    # a = p - q with p, q >= 0; both parts are never active together when lam > 0
    G2 = np.block([[G, -G], [-G, G]])
    if lam == 0:
        G2 = G2 + 1e-12 * np.eye(2 * G.shape[0]) * max(1.0, float(np.max(np.diag(G))))
    Z = kernels.nnqp_gram(G2, np.vstack([C - half, -C - half]))
    K = G.shape[0]
    return Z[:K] - Z[K:]


def nonneg_lasso(D, m, lam, tol=1e-8, max_sweeps=10_000, method="active_set"):
    """Nonnegative L1-regularised code of a single vector ``m`` against ``D``."""
    m = np.asarray(m, dtype=np.float64)
    return lasso_batch(D, m.reshape(-1, 1), lam, positive=True, tol=tol,
                       max_sweeps=max_sweeps, method=method)[:, 0]


def lasso_objective(D, m, alpha, lam):
    r = np.asarray(m) - np.asarray(D) @ alpha
    return float(r @ r + lam * np.abs(alpha).sum())


def ridge_classifier(Xbar, Hbar, lam1):
    """Linear classifier ``W = H X^T (X X^T + lam1 I)^-1``."""
    Xbar = _as_2d(Xbar)
    Hbar = _as_2d(Hbar)
    if Xbar.shape[1] != Hbar.shape[1]:
        raise InvalidArgumentError("ridge_classifier: column counts differ")
    if lam1 < 0:
        raise InvalidArgumentError("ridge_classifier: lambda1 must be >= 0")
    _finite("ridge_classifier", Xbar, Hbar)
    K = Xbar.shape[0]
    A = Xbar @ Xbar.T + lam1 * np.eye(K)
    if lam1 == 0 and np.linalg.matrix_rank(A) < K:
        raise SingularMatrixError("ridge_classifier: X X^T is singular and lambda1 = 0")
    try:
        Wt = np.linalg.solve(A, Xbar @ Hbar.T)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"ridge_classifier: {exc}") from None
    return Wt.T


def eig_extremes(S):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgumentError("eig_extremes: matrix must be square")
    _finite("eig_extremes", S)
    if S.size == 0:
        return 0.0, 0.0
    if np.max(np.abs(S - S.T)) > 1e-10 * max(1.0, float(np.max(np.abs(S)))):
        raise InvalidArgumentError("eig_extremes: matrix is not symmetric")
    ev = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(ev[0]), float(ev[-1])


def trace_objective(E, F, D):
    """Surrogate ``-2 tr(E D^T) + tr(D F D^T)`` minimised by :func:`dict_update`."""
    return float(-2.0 * np.sum(E * D) + np.sum((D @ F) * D))


def dict_update(E, F, D0, max_sweeps=100, tol=1e-12, trace=None):
    """Block coordinate descent on the trace surrogate over unit-ball columns.

    Each column update is the exact minimiser of the surrogate over that
    column under ``||d_j|| <= 1``, so the surrogate never increases. Columns
    with ``F_jj < 1e-10`` are left as they are. If ``trace`` is a list the
    surrogate value after every sweep is appended to it (initial value first).
    """
    E = np.asarray(E, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    D = np.array(D0, dtype=np.float64, copy=True)
    if E.shape != D.shape or F.shape != (D.shape[1], D.shape[1]):
        raise InvalidArgumentError("dict_update: inconsistent shapes")
    _finite("dict_update", E, F, D)
    lo, _ = eig_extremes(F)
    if lo < -1e-8:
        raise NotPSDError(f"dict_update: F has eigenvalue {lo:.3e} < 0")
    prev = trace_objective(E, F, D)
    if trace is not None:
        trace.append(prev)
    for _ in range(max_sweeps):
        for j in range(D.shape[1]):
            fjj = F[j, j]
            if fjj < 1e-10:
                continue
            u = D[:, j] + (E[:, j] - D @ F[:, j]) / fjj
            nrm = np.linalg.norm(u)
            D[:, j] = u / max(1.0, nrm)
        cur = trace_objective(E, F, D)
        if trace is not None:
            trace.append(cur)
        if prev - cur <= tol * max(1.0, abs(prev)):
            break
        prev = cur
    return D
