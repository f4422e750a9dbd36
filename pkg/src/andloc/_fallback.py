"""Pure numpy implementation of the transfer-matrix propagation kernel.

Mirrors the interface of the compiled ``_kernels`` module.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

RENORM_LIMIT = 1e100


def workspace_size(rows: int, cols: int) -> int:
    return 1


def orthonormalize(state: np.ndarray, logacc: np.ndarray) -> int:
    """QR of ``state`` in place with positive-diagonal R; adds log|R_kk| to ``logacc``."""
    q, r = np.linalg.qr(state)
    diag = np.diag(r)
    mag = np.abs(diag)
    if np.any(mag == 0):
        return -1000
    logacc += np.log(mag)
    state[...] = q * (diag / mag)[None, :]
    return 0


def advance(state, top_first, onsite, offdiag, cols, indptr, finv, back, energy,
            qr_interval, since_qr, logacc, tau=None, work=None):
    """See ``andloc._kernels.advance``."""
    n_slices, N = onsite.shape
    K = state.shape[1]
    M, o = finv.shape[1], finv.shape[2]
    n_qr = 0
    status = 0
    for s in range(n_slices):
        top = slice(0, N) if top_first else slice(N, 2 * N)
        bottom = slice(N, 2 * N) if top_first else slice(0, N)
        psi = state[top]
        prev = state[bottom].reshape(M, o, K)
        h = sp.csr_matrix((offdiag[s], cols, indptr), shape=(N, N))
        rhs = (energy - onsite[s])[:, None] * psi - h @ psi
        rhs = rhs.reshape(M, o, K) - np.matmul(back[s], prev)
        new = np.matmul(finv[s], rhs).reshape(N, K)
        state[bottom] = new
        top_first = not top_first
        since_qr += 1
        growth = np.max(np.abs(new.real) + np.abs(new.imag)) if new.size else 0.0
        if since_qr >= qr_interval or growth > RENORM_LIMIT or s == n_slices - 1:
            status = orthonormalize(state, logacc)
            if status != 0:
                break
            since_qr = 0
            n_qr += 1
    return top_first, since_qr, n_qr, status
