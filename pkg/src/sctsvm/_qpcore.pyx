# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled active-set iteration; same contract as ``_qpcore_py.active_set_loop``."""
import numpy as np

from libc.math cimport fabs, isfinite, sqrt, INFINITY
from scipy.linalg.cython_lapack cimport dgesv

DEF OPTIMAL = 0
DEF ITERATION_LIMIT = 1
DEF SINGULAR = 3
DEF REFRESH = 64
DEF DEPENDENT_TOL = 1e-9


cdef bint _dependent(double[:, ::1] A, Py_ssize_t[::1] rows, Py_ssize_t nw,
                     Py_ssize_t[::1] free, Py_ssize_t nf, Py_ssize_t hit, Py_ssize_t k,
                     double[:, ::1] basis, double[::1] v):
    """Whether the normal of ``hit`` lies in the span of the working rows over
    the free variables (modified Gram-Schmidt, two passes)."""
    cdef Py_ssize_t nb = 0, jj, ii, bb, sweep
    cdef double acc, n0, nv
    if nw == 0:
        return False
    for jj in range(nw + 1):
        # rows first, the candidate normal last
        if jj < nw:
            for ii in range(nf):
                v[ii] = A[rows[jj], free[ii]]
        else:
            for ii in range(nf):
                if hit < k:
                    v[ii] = 1.0 if free[ii] == hit else 0.0
                else:
                    v[ii] = A[hit - k, free[ii]]
        n0 = 0.0
        for ii in range(nf):
            n0 += v[ii] * v[ii]
        n0 = sqrt(n0)
        if n0 == 0.0:
            if jj == nw:
                return True
            continue
        for sweep in range(2):
            for bb in range(nb):
                acc = 0.0
                for ii in range(nf):
                    acc += basis[bb, ii] * v[ii]
                for ii in range(nf):
                    v[ii] -= acc * basis[bb, ii]
        nv = 0.0
        for ii in range(nf):
            nv += v[ii] * v[ii]
        nv = sqrt(nv)
        if jj == nw:
            return nv <= DEPENDENT_TOL * n0
        if nv > 1e-12 * n0:
            for ii in range(nf):
                basis[nb, ii] = v[ii] / nv
            nb += 1
    return False


def active_set_loop(double[:, ::1] H, double[::1] c, double[:, ::1] A, double[::1] b,
                    int n_eq, double[::1] lower, double[::1] upper, double[::1] z,
                    signed char[::1] bstate, signed char[::1] wrow,
                    int max_iter, double step_tol, double dec_tol, double dual_tol):
    cdef Py_ssize_t k = z.shape[0]
    cdef Py_ssize_t r = A.shape[0]
    cdef Py_ssize_t i, j, ii, jj, nf, nw, nk, block, hit
    cdef int it = 0, info = 0, nrhs = 1, n_lapack
    cdef bint settled = False  # last move was a full step
    cdef int since = -1  # steps since the gradient was recomputed; -1 forces a refresh
    cdef double acc, zscale, fval, decrease, pmax, pnorm, alpha, t, ap, amax, worst, slack

    nu_arr = np.zeros(r)
    kappa_arr = np.zeros(k)
    cdef double[::1] nu = nu_arr
    cdef double[::1] kappa = kappa_arr
    cdef double[::1] g = np.empty(k)
    cdef double[::1] p = np.empty(k)
    cdef double[::1] Hp = np.empty(k)
    cdef double[::1] resid = np.empty(k)
    cdef Py_ssize_t[::1] free = np.empty(k, dtype=np.intp)
    cdef Py_ssize_t[::1] rows = np.empty(r + 1, dtype=np.intp)
    cdef double[::1] K = np.empty((k + r + 1) * (k + r + 1))
    cdef double[::1] rhs = np.empty(k + r + 1)
    cdef int[::1] ipiv = np.empty(k + r + 1, dtype=np.intc)
    cdef double[::1] tall = np.empty(k + r)
    cdef double[:, ::1] basis = np.empty((r + 1, k))
    cdef double[::1] work = np.empty(k)

    while it < max_iter:
        it += 1
        if since < 0 or since >= REFRESH:
            for i in range(k):
                acc = 0.0
                for j in range(k):
                    acc += H[i, j] * z[j]
                g[i] = acc + c[i]
            since = 0
        nf = 0
        for i in range(k):
            if bstate[i] == 0:
                free[nf] = i
                nf += 1
        nw = 0
        for j in range(r):
            if wrow[j]:
                rows[nw] = j
                nw += 1
        nk = nf + nw
        # K is symmetric, so row-major fill equals the column-major layout LAPACK wants
        for ii in range(nk * nk):
            K[ii] = 0.0
        for ii in range(nf):
            for jj in range(nf):
                K[ii * nk + jj] = H[free[ii], free[jj]]
            for jj in range(nw):
                K[ii * nk + nf + jj] = A[rows[jj], free[ii]]
                K[(nf + jj) * nk + ii] = A[rows[jj], free[ii]]
        for ii in range(nf):
            rhs[ii] = -g[free[ii]]
        for jj in range(nw):
            rhs[nf + jj] = 0.0
        if nk > 0:
            n_lapack = <int> nk
            dgesv(&n_lapack, &nrhs, &K[0], &n_lapack, &ipiv[0], &rhs[0], &n_lapack, &info)
            if info != 0:
                return SINGULAR, it - 1, nu_arr, kappa_arr
            for ii in range(nk):
                if not isfinite(rhs[ii]):
                    return SINGULAR, it - 1, nu_arr, kappa_arr
        for i in range(k):
            p[i] = 0.0
        for ii in range(nf):
            p[free[ii]] = rhs[ii]
        for j in range(r):
            nu[j] = 0.0
        for jj in range(nw):
            nu[rows[jj]] = rhs[nf + jj]

        pmax = 0.0
        zscale = 0.0
        fval = 0.0
        decrease = 0.0
        for i in range(k):
            acc = 0.0
            for ii in range(nf):
                acc += H[i, free[ii]] * p[free[ii]]
            Hp[i] = acc
            if fabs(p[i]) > pmax:
                pmax = fabs(p[i])
            if fabs(z[i]) > zscale:
                zscale = fabs(z[i])
            fval += 0.5 * z[i] * (g[i] + c[i])
            decrease -= g[i] * p[i] + 0.5 * p[i] * acc
        zscale += 1.0

        hit = -1
        alpha = 1.0
        if not settled and pmax > step_tol * zscale:
            pnorm = pmax
            for i in range(k):
                tall[i] = INFINITY
                if bstate[i] != 0:
                    continue
                if p[i] < -1e-14 * pnorm and isfinite(lower[i]):
                    t = (lower[i] - z[i]) / p[i]
                elif p[i] > 1e-14 * pnorm and isfinite(upper[i]):
                    t = (upper[i] - z[i]) / p[i]
                else:
                    continue
                tall[i] = t if t > 0.0 else 0.0
            for j in range(r):
                tall[k + j] = INFINITY
                if j < n_eq or wrow[j]:
                    continue
                ap = 0.0
                amax = 0.0
                slack = b[j]
                for i in range(k):
                    ap += A[j, i] * p[i]
                    slack -= A[j, i] * z[i]
                    if fabs(A[j, i]) > amax:
                        amax = fabs(A[j, i])
                if ap > 1e-14 * pnorm * amax:
                    t = slack / ap
                    tall[k + j] = t if t > 0.0 else 0.0
            while True:
                alpha = INFINITY
                hit = -1
                for i in range(k + r):
                    if tall[i] < alpha:
                        alpha = tall[i]
                        hit = i
                if hit < 0 or not alpha < 1.0:
                    alpha = 1.0
                    hit = -1
                    break
                if not _dependent(A, rows, nw, free, nf, hit, k, basis, work):
                    break
                tall[hit] = INFINITY
        # a tiny-decrease step is still taken when it is an unblocked Newton step
        if settled or pmax <= step_tol * zscale or (hit >= 0 and decrease <= dec_tol * (1.0 + fabs(fval))):
            for i in range(k):
                resid[i] = g[i] + Hp[i]
            for jj in range(nw):
                j = rows[jj]
                for i in range(k):
                    resid[i] += A[j, i] * nu[j]
            for i in range(k):
                if bstate[i] == -1:
                    kappa[i] = resid[i]
                elif bstate[i] == 1:
                    kappa[i] = -resid[i]
                else:
                    kappa[i] = 0.0
            worst = INFINITY
            block = -1
            for i in range(k):
                if (bstate[i] == -1 or bstate[i] == 1) and kappa[i] < worst:
                    worst = kappa[i]
                    block = i
            for j in range(n_eq, r):
                if wrow[j] and nu[j] < worst:
                    worst = nu[j]
                    block = k + j
            if block < 0 or not (worst < -dual_tol):
                if since > 0:
                    since = -1  # confirm optimality on an exact gradient
                    continue
                return OPTIMAL, it, nu_arr, kappa_arr
            if block < k:
                bstate[block] = 0
                kappa[block] = 0.0
            else:
                wrow[block - k] = 0
                nu[block - k] = 0.0
            settled = False
            continue

        for i in range(k):
            z[i] += alpha * p[i]
            g[i] += alpha * Hp[i]
        since += 1
        settled = hit < 0
        if 0 <= hit < k:
            if p[hit] < 0:
                z[hit] = lower[hit]
                bstate[hit] = -1
            else:
                z[hit] = upper[hit]
                bstate[hit] = 1
        elif hit >= k:
            wrow[hit - k] = 1
    return ITERATION_LIMIT, it, nu_arr, kappa_arr
