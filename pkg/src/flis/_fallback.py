"""Pure-Python/numpy versions of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module. Used when
the extension is not built or when ``FLIS_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


def omp_gram(G, DtY, L, tie_tol=1e-12):
    """Batch OMP from the Gram matrix ``G = D^T D`` and correlations ``D^T Y``.

    Progressive Cholesky of the selected Gram block; the least-squares refit
    is exact at every step.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    DtY = np.ascontiguousarray(DtY, dtype=np.float64)
    K, n = DtY.shape
    X = np.zeros((K, n))
    chol = np.zeros((L, L))
    for i in range(n):
        a0 = DtY[:, i]
        a = a0.copy()
        scale = max(1.0, float(np.max(np.abs(a0))) if K else 1.0)
        sel = []
        gamma = np.zeros(0)
        for s in range(L):
            mag = np.abs(a)
            if sel:
                mag[sel] = -1.0
            best = mag.max()
            if best <= 1e-13 * scale:
                break
            j = int(np.flatnonzero(mag >= best - tie_tol)[0])
            if s == 0:
                if G[j, j] <= 0.0:
                    break
                chol[0, 0] = math.sqrt(G[j, j])
            else:
                w = solve_triangular(chol[:s, :s], G[sel, j], lower=True)
                diag = G[j, j] - w @ w
                if diag <= 1e-12 * G[j, j]:
                    break
                chol[s, :s] = w
                chol[s, s] = math.sqrt(diag)
            sel.append(j)
            gamma = cho_solve((chol[: s + 1, : s + 1], True), a0[sel])
            a = a0 - G[:, sel] @ gamma
        if sel:
            X[sel, i] = gamma
    return X


def lasso_cd(G, DtY, lam, positive, tol=1e-8, max_sweeps=10000, X0=None):
    """Cyclic coordinate descent on ``||y - D a||^2 + lam * ||a||_1``.

    All columns are swept together; a column keeps being updated until every
    column moves by less than ``tol`` in one sweep. Returns ``(X, sweeps)``.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    DtY = np.ascontiguousarray(DtY, dtype=np.float64)
    K, n = DtY.shape
    X = np.zeros((K, n)) if X0 is None else np.array(X0, dtype=np.float64)
    q = DtY - G @ X
    half = 0.5 * lam
    diag = np.diag(G).copy()
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in range(K):
            gjj = diag[j]
            if gjj <= 0.0:
                continue
            old = X[j]
            z = q[j] + gjj * old
            if positive:
                new = np.maximum(z - half, 0.0) / gjj
            else:
                new = np.sign(z) * np.maximum(np.abs(z) - half, 0.0) / gjj
            delta = new - old
            if not delta.any():
                continue
            q -= np.outer(G[:, j], delta)
            X[j] = new
            biggest = max(biggest, float(np.max(np.abs(delta))))
        if biggest < tol:
            break
    return X, sweeps


def _dt_1d(f):
    # lower envelope of parabolas rooted at (q, f[q])
    n = f.shape[0]
    out = np.empty(n)
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    first = -1
    for q in range(n):
        if math.isfinite(f[q]):
            first = q
            break
    if first < 0:
        out[:] = np.inf
        return out
    v[0] = first
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(first + 1, n):
        fq = f[q]
        if not math.isfinite(fq):
            continue
        while True:
            p = v[k]
            s = ((fq + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]
    return out


def edt_sq(mask):
    """Squared Euclidean distance from each pixel to the nearest zero of ``mask``."""
    mask = np.asarray(mask) != 0
    f = np.where(mask, np.inf, 0.0)
    tmp = np.empty_like(f)
    for c in range(f.shape[1]):
        tmp[:, c] = _dt_1d(f[:, c])
    out = np.empty_like(f)
    for r in range(f.shape[0]):
        out[r, :] = _dt_1d(tmp[r, :])
    return out


def _chol(G, idx):
    sub = G[np.ix_(idx, idx)]
    try:
        c = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        return None
    if np.min(np.diag(c) ** 2 / np.diag(sub)) <= 1e-12:
        return None
    return c


def nnqp_gram(G, B, max_iter=0, tol=1e-12):
    """Columns of ``argmin_{x >= 0} x^T G x - 2 b^T x`` (Lawson-Hanson active set)."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    K, n = B.shape
    max_iter = max_iter if max_iter > 0 else 3 * K + 10
    X = np.zeros((K, n))
    for i in range(n):
        b = B[:, i]
        scale = max(1.0, float(np.max(np.abs(b))) if K else 1.0)
        x = np.zeros(K)
        passive = []
        banned = np.zeros(K, dtype=bool)
        w = b.copy()
        for _ in range(max_iter):
            cand = w.copy()
            cand[passive] = -np.inf
            cand[banned] = -np.inf
            j = int(np.argmax(cand)) if K else 0
            if K == 0 or cand[j] <= tol * scale:
                break
            passive.append(j)
            for _ in range(max_iter):
                c = _chol(G, passive)
                if c is None:
                    # newest atom lies in the span of the passive ones: slide
                    # along the null direction until a passive entry hits 0
                    j = passive[-1]
                    rest = passive[:-1]
                    c0 = _chol(G, rest) if rest else None
                    u = cho_solve((c0, True), G[rest, j]) if c0 is not None else None
                    if u is None or not (u > 0).any():
                        banned[passive.pop()] = True
                        break
                    ratios = np.where(u > 0, x[rest] / np.where(u > 0, u, 1.0), np.inf)
                    k = int(np.argmin(ratios))
                    t = ratios[k]
                    x[rest] -= t * u
                    x[j] = t
                    x[rest[k]] = 0.0
                    passive = rest[:k] + rest[k + 1:] + [j]
                    continue
                s = cho_solve((c, True), b[passive])
                if (s > 0).all():
                    x[passive] = s
                    break
                xp = x[passive]
                neg = s <= 0
                alpha = np.min(xp[neg] / (xp[neg] - s[neg]))
                x[passive] = xp + alpha * (s - xp)
                keep = [p for p in passive if x[p] > 1e-15 * scale]
                x[[p for p in passive if p not in keep]] = 0.0
                passive = keep
            w = b - G[:, passive] @ x[passive]
        X[:, i] = x
    return X
