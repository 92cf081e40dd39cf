# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batch OMP, lasso coordinate descent, exact EDT."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY, isfinite

cnp.import_array()


def omp_gram(G, DtY, Py_ssize_t L, double tie_tol=1e-12):
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[:, ::1] dty = np.ascontiguousarray(DtY, dtype=np.float64)
    cdef Py_ssize_t K = dty.shape[0], n = dty.shape[1]
    X_arr = np.zeros((K, n))
    cdef double[:, ::1] X = X_arr
    cdef double[::1] a = np.empty(K)
    cdef double[:, ::1] chol = np.zeros((L, L))
    cdef double[::1] w = np.empty(L)
    cdef double[::1] gamma = np.empty(L)
    cdef double[::1] tmp = np.empty(L)
    cdef Py_ssize_t[::1] sel = np.empty(L, dtype=np.intp)
    cdef unsigned char[::1] used = np.zeros(K, dtype=np.uint8)
    cdef Py_ssize_t i, j, s, t, u, jbest, nsel
    cdef double best, m, scale, diag, acc
    with nogil:
        for i in range(n):
            scale = 1.0
            for j in range(K):
                a[j] = dty[j, i]
                used[j] = 0
                if fabs(a[j]) > scale:
                    scale = fabs(a[j])
            nsel = 0
            for s in range(L):
                best = -1.0
                for j in range(K):
                    if not used[j]:
                        m = fabs(a[j])
                        if m > best:
                            best = m
                if best <= 1e-13 * scale:
                    break
                jbest = -1
                for j in range(K):
                    if not used[j] and fabs(a[j]) >= best - tie_tol:
                        jbest = j
                        break
                if s == 0:
                    if g[jbest, jbest] <= 0.0:
                        break
                    chol[0, 0] = sqrt(g[jbest, jbest])
                else:
                    # forward solve chol[:s,:s] w = G[sel, jbest]
                    for t in range(s):
                        acc = g[sel[t], jbest]
                        for u in range(t):
                            acc -= chol[t, u] * w[u]
                        w[t] = acc / chol[t, t]
                    diag = g[jbest, jbest]
                    for t in range(s):
                        diag -= w[t] * w[t]
                    if diag <= 1e-12 * g[jbest, jbest]:
                        break
                    for t in range(s):
                        chol[s, t] = w[t]
                    chol[s, s] = sqrt(diag)
                sel[s] = jbest
                used[jbest] = 1
                nsel = s + 1
                # solve chol chol^T gamma = a0[sel]
                for t in range(nsel):
                    acc = dty[sel[t], i]
                    for u in range(t):
                        acc -= chol[t, u] * tmp[u]
                    tmp[t] = acc / chol[t, t]
                for t in range(nsel - 1, -1, -1):
                    acc = tmp[t]
                    for u in range(t + 1, nsel):
                        acc -= chol[u, t] * gamma[u]
                    gamma[t] = acc / chol[t, t]
                for j in range(K):
                    acc = dty[j, i]
                    for t in range(nsel):
                        acc -= g[j, sel[t]] * gamma[t]
                    a[j] = acc
            for t in range(nsel):
                X[sel[t], i] = gamma[t]
    return X_arr


def lasso_cd(G, DtY, double lam, bint positive, double tol=1e-8,
             Py_ssize_t max_sweeps=10000, X0=None):
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[:, ::1] dty = np.ascontiguousarray(DtY, dtype=np.float64)
    cdef Py_ssize_t K = dty.shape[0], n = dty.shape[1]
    if X0 is None:
        X_arr = np.zeros((K, n))
    else:
        X_arr = np.array(X0, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] X = X_arr
    cdef double[::1] q = np.empty(K)
    cdef double[::1] x = np.empty(K)
    cdef Py_ssize_t i, j, k, sweep, total = 0
    cdef bint full
    cdef double half = 0.5 * lam, gjj, z, new, delta, biggest, acc
    with nogil:
        for i in range(n):
            for j in range(K):
                x[j] = X[j, i]
            for j in range(K):
                acc = dty[j, i]
                for k in range(K):
                    if x[k] != 0.0:
                        acc -= g[j, k] * x[k]
                q[j] = acc
            sweep = 0
            full = True
            while sweep < max_sweeps:
                sweep += 1
                biggest = 0.0
                for j in range(K):
                    if not full and x[j] == 0.0:
                        continue
                    gjj = g[j, j]
                    if gjj <= 0.0:
                        continue
                    z = q[j] + gjj * x[j]
                    if z > half:
                        new = (z - half) / gjj
                    elif z < -half and not positive:
                        new = (z + half) / gjj
                    else:
                        new = 0.0
                    delta = new - x[j]
                    if delta != 0.0:
                        for k in range(K):
                            q[k] -= g[k, j] * delta
                        x[j] = new
                        if fabs(delta) > biggest:
                            biggest = fabs(delta)
                if biggest < tol:
                    if full:
                        break
                    full = True  # active set settled: verify with a full sweep
                else:
                    full = False
            if sweep > total:
                total = sweep
            for j in range(K):
                X[j, i] = x[j]
    return X_arr, total


cdef void _dt_1d(double* f, double* out, Py_ssize_t n, Py_ssize_t* v,
                 double* z) noexcept nogil:
    cdef Py_ssize_t q, p, k = 0, first = -1
    cdef double s
    for q in range(n):
        if isfinite(f[q]):
            first = q
            break
    if first < 0:
        for q in range(n):
            out[q] = INFINITY
        return
    v[0] = first
    z[0] = -INFINITY
    z[1] = INFINITY
    for q in range(first + 1, n):
        if not isfinite(f[q]):
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]


def edt_sq(mask):
    m = np.asarray(mask) != 0
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1], r, c
    f_arr = np.ascontiguousarray(np.where(m, np.inf, 0.0).T)  # cols x rows
    cdef double[:, ::1] f = f_arr
    tmp_arr = np.empty((cols, rows))
    cdef double[:, ::1] tmp = tmp_arr
    out_arr = np.empty((rows, cols))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t nmax = rows if rows > cols else cols
    cdef Py_ssize_t[::1] v = np.empty(nmax + 1, dtype=np.intp)
    cdef double[::1] z = np.empty(nmax + 2)
    cdef double[::1] line = np.empty(nmax)
    with nogil:
        for c in range(cols):
            _dt_1d(&f[c, 0], &tmp[c, 0], rows, &v[0], &z[0])
        for r in range(rows):
            for c in range(cols):
                line[c] = tmp[c, r]
            _dt_1d(&line[0], &out[r, 0], cols, &v[0], &z[0])
    return out_arr


cdef bint _chol_solve(double[:, ::1] g, Py_ssize_t* idx, Py_ssize_t s,
                      double[:, ::1] ch, double* rhs, double* out) noexcept nogil:
    # Cholesky of g[idx, idx] then solve; False if not positive definite
    cdef Py_ssize_t r, c, k
    cdef double acc
    for r in range(s):
        for c in range(r + 1):
            acc = g[idx[r], idx[c]]
            for k in range(c):
                acc -= ch[r, k] * ch[c, k]
            if r == c:
                if acc <= 1e-12 * g[idx[r], idx[r]]:
                    return False
                ch[r, r] = sqrt(acc)
            else:
                ch[r, c] = acc / ch[c, c]
    for r in range(s):
        acc = rhs[r]
        for k in range(r):
            acc -= ch[r, k] * out[k]
        out[r] = acc / ch[r, r]
    for r in range(s - 1, -1, -1):
        acc = out[r]
        for k in range(r + 1, s):
            acc -= ch[k, r] * out[k]
        out[r] = acc / ch[r, r]
    return True


def nnqp_gram(G, B, Py_ssize_t max_iter=0, double tol=1e-12):
    """Columns of ``argmin_{x >= 0} x^T G x - 2 b^T x`` (Lawson-Hanson active set)."""
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t K = b.shape[0], n = b.shape[1]
    if max_iter <= 0:
        max_iter = 3 * K + 10
    X_arr = np.zeros((K, n))
    cdef double[:, ::1] X = X_arr
    cdef double[::1] x = np.empty(K)
    cdef double[::1] w = np.empty(K)
    cdef double[::1] s = np.empty(K)
    cdef double[::1] rhs = np.empty(K)
    cdef double[:, ::1] ch = np.empty((K, K))
    cdef Py_ssize_t[::1] pas = np.empty(K, dtype=np.intp)
    cdef unsigned char[::1] inP = np.empty(K, dtype=np.uint8)
    cdef unsigned char[::1] banned = np.empty(K, dtype=np.uint8)
    cdef Py_ssize_t i, j, k, r, np_, jbest, outer, inner, keep
    cdef double best, scale, alpha, a, acc
    with nogil:
        for i in range(n):
            scale = 1.0
            for j in range(K):
                x[j] = 0.0
                inP[j] = 0
                banned[j] = 0
                w[j] = b[j, i]
                if fabs(w[j]) > scale:
                    scale = fabs(w[j])
            np_ = 0
            for outer in range(max_iter):
                best = tol * scale
                jbest = -1
                for j in range(K):
                    if not inP[j] and not banned[j] and w[j] > best:
                        best = w[j]
                        jbest = j
                if jbest < 0:
                    break
                pas[np_] = jbest
                inP[jbest] = 1
                np_ += 1
                for inner in range(max_iter):
                    for r in range(np_):
                        rhs[r] = b[pas[r], i]
                    if not _chol_solve(g, &pas[0], np_, ch, &rhs[0], &s[0]):
                        # newest atom j lies in the span of the passive ones:
                        # the objective is linear along the null direction
                        # (-G_PP^-1 G_Pj, 1), so slide until a passive entry hits 0
                        j = pas[np_ - 1]
                        alpha = -1.0
                        if np_ > 1:
                            for r in range(np_ - 1):
                                rhs[r] = g[pas[r], j]
                            if _chol_solve(g, &pas[0], np_ - 1, ch, &rhs[0], &s[0]):
                                k = -1
                                for r in range(np_ - 1):
                                    if s[r] > 0.0:
                                        a = x[pas[r]] / s[r]
                                        if k < 0 or a < alpha:
                                            alpha = a
                                            k = r
                        if alpha < 0.0:
                            np_ -= 1
                            inP[j] = 0
                            banned[j] = 1
                            break
                        for r in range(np_ - 1):
                            x[pas[r]] -= alpha * s[r]
                        x[j] = alpha
                        x[pas[k]] = 0.0
                        inP[pas[k]] = 0
                        keep = 0
                        for r in range(np_):
                            if r != k:
                                pas[keep] = pas[r]
                                keep += 1
                        np_ = keep
                        continue
                    alpha = 2.0
                    for r in range(np_):
                        if s[r] <= 0.0:
                            a = x[pas[r]] / (x[pas[r]] - s[r])
                            if a < alpha:
                                alpha = a
                    if alpha >= 2.0:
                        for r in range(np_):
                            x[pas[r]] = s[r]
                        break
                    for r in range(np_):
                        x[pas[r]] += alpha * (s[r] - x[pas[r]])
                    keep = 0
                    for r in range(np_):
                        if x[pas[r]] > 1e-15 * scale:
                            pas[keep] = pas[r]
                            keep += 1
                        else:
                            x[pas[r]] = 0.0
                            inP[pas[r]] = 0
                    np_ = keep
                for j in range(K):
                    acc = b[j, i]
                    for r in range(np_):
                        acc -= g[j, pas[r]] * x[pas[r]]
                    w[j] = acc
            for j in range(K):
                X[j, i] = x[j]
    return X_arr
