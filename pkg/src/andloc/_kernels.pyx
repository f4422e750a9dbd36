# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transfer-matrix propagation kernel.

The state is a C-ordered ``(2N, K)`` complex array. Its memory is the
column-major ``(K, 2N)`` transpose, so the QR step is an LQ factorization
of that transpose (same triangular diagonal).
"""

from libc.math cimport fabs, log, sqrt
from scipy.linalg.cython_lapack cimport zgelqf, zunglq

import numpy as np

cdef double RENORM_LIMIT = 1e100


cdef int orthonormalize(double complex[:, ::1] state, double[::1] logacc,
                        double complex[::1] tau, double complex[::1] work) noexcept nogil:
    """Orthonormalize the columns of ``state``; add log|R_kk| to ``logacc``.

    The diagonal of R is made real positive.
    """
    cdef int rows = state.shape[0]
    cdef int k_cols = state.shape[1]
    cdef int m = k_cols
    cdef int n = rows
    cdef int lda = k_cols
    cdef int lwork = work.shape[0] - k_cols
    cdef int info = 0
    cdef int i, k
    cdef double r
    cdef double complex d
    cdef double complex* a = &state[0, 0]
    zgelqf(&m, &n, a, &lda, &tau[0], &work[k_cols], &lwork, &info)
    if info != 0:
        return info
    for k in range(k_cols):
        d = a[k + k * lda]
        r = sqrt(d.real * d.real + d.imag * d.imag)
        if r == 0.0:
            return -1000
        logacc[k] += log(r)
        work[k] = d / r
    zunglq(&m, &n, &m, a, &lda, &tau[0], &work[k_cols], &lwork, &info)
    if info != 0:
        return info
    for i in range(rows):
        for k in range(k_cols):
            a[k + i * lda] = a[k + i * lda] * work[k]
    return 0


def workspace_size(int rows, int cols):
    """Length of the complex workspace used by :func:`advance`."""
    cdef int m = cols
    cdef int n = rows
    cdef int lda = cols
    cdef int lwork = -1
    cdef int info = 0
    cdef double complex query[1]
    cdef double complex[::1, :] a = np.zeros((cols, rows), dtype=np.complex128, order="F")
    cdef double complex[::1] tau = np.zeros(max(cols, 1), dtype=np.complex128)
    zgelqf(&m, &n, &a[0, 0], &lda, &tau[0], &query[0], &lwork, &info)
    size = int(query[0].real)
    lwork = -1
    zunglq(&m, &n, &m, &a[0, 0], &lda, &tau[0], &query[0], &lwork, &info)
    size = max(size, int(query[0].real))
    return cols + size + 64


cdef inline void axpy_neg(double* dst, const double* src, double cr, double ci,
                          Py_ssize_t K) noexcept nogil:
    """dst -= c * src for interleaved complex vectors of length K."""
    cdef Py_ssize_t k
    cdef double xr, xi
    for k in range(K):
        xr = src[2 * k]
        xi = src[2 * k + 1]
        dst[2 * k] -= cr * xr - ci * xi
        dst[2 * k + 1] -= cr * xi + ci * xr


def advance(double complex[:, ::1] state, int top_first,
            const double complex[:, ::1] onsite,
            const double complex[:, ::1] offdiag,
            const long long[::1] cols,
            const long long[::1] indptr,
            const double complex[:, :, :, ::1] finv,
            const double complex[:, :, :, ::1] back,
            double complex energy, int qr_interval, int since_qr,
            double[::1] logacc, double complex[::1] tau, double complex[::1] work):
    """Propagate ``state`` through consecutive slices.

    ``state`` holds the columns ``(ψ_n; ψ_{n-1})``; ``top_first`` says whether
    ``ψ_n`` occupies the first half of the rows. Slice ``s`` uses the on-site
    and intra-slice data ``onsite[s]``, ``offdiag[s]``, the inverse forward
    hopping ``finv[s]`` and the backward hopping ``back[s]`` from the previous
    slice. The state is orthonormalized every ``qr_interval`` slices, when an
    entry grows beyond 1e100, and at the end of the call.

    Returns
    -------
    (top_first, since_qr, n_qr, status)
    """
    cdef Py_ssize_t n_slices = onsite.shape[0]
    cdef Py_ssize_t N = onsite.shape[1]
    cdef Py_ssize_t K = state.shape[1]
    cdef Py_ssize_t M = finv.shape[1]
    cdef Py_ssize_t o = finv.shape[2]
    cdef Py_ssize_t s, k, m, a, b, i, p, t0, b0
    cdef double* base = <double*> &state[0, 0]
    cdef double[:, ::1] tmp = np.zeros((2, 2 * K))
    cdef double* acc
    cdef double* dst
    cdef const double* src
    cdef double er, ei, xr, xi, yr, yi, f0r, f0i, f1r, f1i, growth
    cdef double complex c
    cdef int n_qr = 0
    cdef int status = 0
    if o > 2:
        raise ValueError("at most two orbitals per site are supported")
    with nogil:
        for s in range(n_slices):
            if top_first:
                t0 = 0
                b0 = N
            else:
                t0 = N
                b0 = 0
            growth = 0.0
            for m in range(M):
                for a in range(o):
                    i = m * o + a
                    acc = &tmp[a, 0]
                    src = base + 2 * K * (t0 + i)
                    c = energy - onsite[s, i]
                    er = c.real
                    ei = c.imag
                    for k in range(K):
                        xr = src[2 * k]
                        xi = src[2 * k + 1]
                        acc[2 * k] = er * xr - ei * xi
                        acc[2 * k + 1] = er * xi + ei * xr
                    for p in range(indptr[i], indptr[i + 1]):
                        c = offdiag[s, p]
                        axpy_neg(acc, base + 2 * K * (t0 + cols[p]), c.real, c.imag, K)
                    for b in range(o):
                        c = back[s, m, a, b]
                        axpy_neg(acc, base + 2 * K * (b0 + m * o + b), c.real, c.imag, K)
                if o == 1:
                    c = finv[s, m, 0, 0]
                    er = c.real
                    ei = c.imag
                    dst = base + 2 * K * (b0 + m)
                    acc = &tmp[0, 0]
                    for k in range(K):
                        xr = acc[2 * k]
                        xi = acc[2 * k + 1]
                        yr = er * xr - ei * xi
                        yi = er * xi + ei * xr
                        dst[2 * k] = yr
                        dst[2 * k + 1] = yi
                        if fabs(yr) + fabs(yi) > growth:
                            growth = fabs(yr) + fabs(yi)
                else:
                    for a in range(2):
                        f0r = finv[s, m, a, 0].real
                        f0i = finv[s, m, a, 0].imag
                        f1r = finv[s, m, a, 1].real
                        f1i = finv[s, m, a, 1].imag
                        dst = base + 2 * K * (b0 + m * 2 + a)
                        for k in range(K):
                            xr = tmp[0, 2 * k]
                            xi = tmp[0, 2 * k + 1]
                            yr = f0r * xr - f0i * xi
                            yi = f0r * xi + f0i * xr
                            xr = tmp[1, 2 * k]
                            xi = tmp[1, 2 * k + 1]
                            yr = yr + f1r * xr - f1i * xi
                            yi = yi + f1r * xi + f1i * xr
                            dst[2 * k] = yr
                            dst[2 * k + 1] = yi
                            if fabs(yr) + fabs(yi) > growth:
                                growth = fabs(yr) + fabs(yi)
            top_first = not top_first
            since_qr += 1
            if since_qr >= qr_interval or growth > RENORM_LIMIT or s == n_slices - 1:
                status = orthonormalize(state, logacc, tau, work)
                if status != 0:
                    break
                since_qr = 0
                n_qr += 1
    return top_first, since_qr, n_qr, status
