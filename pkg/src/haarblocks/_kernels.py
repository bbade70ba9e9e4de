"""Hot Monte Carlo kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``HAARBLOCKS_DISABLE_NUMBA``
is unset (or ``0``).  Both paths are always importable so the benchmark and
the tests can compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import ndtr

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("HAARBLOCKS_DISABLE_NUMBA", "0") in ("", "0")

_SQRT1_2 = 1.0 / math.sqrt(2.0)


def _jit(fn):
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# Haar frames: orthonormalize the rows of Gaussian matrices
# --------------------------------------------------------------------------


@_jit
def _row_frames_numba(G, ncols):
    n, r, N = G.shape
    out = np.empty((n, r, ncols))
    Q = np.empty((r, N))
    for s in range(n):
        for i in range(r):
            for t in range(N):
                Q[i, t] = G[s, i, t]
            # classical Gram-Schmidt, applied twice
            for _ in range(2):
                for j in range(i):
                    c = 0.0
                    for t in range(N):
                        c += Q[j, t] * Q[i, t]
                    for t in range(N):
                        Q[i, t] -= c * Q[j, t]
            nrm = 0.0
            for t in range(N):
                nrm += Q[i, t] * Q[i, t]
            nrm = math.sqrt(nrm)
            for t in range(N):
                Q[i, t] /= nrm
            for t in range(ncols):
                out[s, i, t] = Q[i, t]
    return out


def _row_frames_numpy(G, ncols):
    Q, R = np.linalg.qr(np.swapaxes(G, -1, -2))
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    Q = Q * signs[..., None, :]
    return np.ascontiguousarray(np.swapaxes(Q, -1, -2)[..., :ncols])


def row_frames(G: np.ndarray, ncols: int) -> np.ndarray:
    """First ``ncols`` columns of the row-orthonormalized stack ``G (n, r, N)``.

    Equivalent to a QR factorization of ``G^T`` with the triangular factor's
    diagonal forced positive, which makes the rows exactly Haar on the
    Stiefel manifold when ``G`` is standard Gaussian.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    if USE_NUMBA:
        return _row_frames_numba(G, int(ncols))
    return _row_frames_numpy(G, int(ncols))


# --------------------------------------------------------------------------
# Levy distance between empirical CDFs and the standard normal CDF
# --------------------------------------------------------------------------


@_jit
def _phi(x):
    return 0.5 * math.erfc(-x * _SQRT1_2)


@_jit
def _levy_row(x):
    n = x.shape[0]
    # upper bounds on the per-point thresholds; constraint j < n is the
    # lower-envelope check at x[j], j >= n the upper-envelope check at x[j - n]
    ub = np.empty(2 * n)
    for i in range(n):
        p = _phi(x[i])
        ub[i] = (i + 1) / n - p
        ub[n + i] = p - i / n
    order = np.argsort(-ub)
    best = 0.0
    for idx in range(2 * n):
        j = order[idx]
        u = ub[j]
        if u <= best:
            break
        lo = 0.0
        hi = u
        if j < n:
            s = x[j]
            c = (j + 1) / n
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if _phi(s + mid) + mid >= c:
                    hi = mid
                else:
                    lo = mid
        else:
            s = x[j - n]
            c = (j - n) / n
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if _phi(s - mid) - mid <= c:
                    hi = mid
                else:
                    lo = mid
        if hi > best:
            best = hi
    return best


@_jit
def _levy_numba(X):
    n = X.shape[0]
    out = np.empty(n)
    for s in range(n):
        out[s] = _levy_row(X[s])
    return out


def _levy_numpy(X):
    n, p = X.shape
    lower = np.arange(1, p + 1) / p
    upper = np.arange(p) / p
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        moving = (mid > lo) & (mid < hi)
        if not moving.any():
            break
        e = mid[:, None]
        ok = np.all(ndtr(X + e) + e >= lower, axis=1) & np.all(ndtr(X - e) - e <= upper, axis=1)
        hi = np.where(moving & ok, mid, hi)
        lo = np.where(moving & ~ok, mid, lo)
    return hi


def levy_distances(X: np.ndarray) -> np.ndarray:
    """Levy distance to the standard normal for each row of sorted ``X (n, p)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if USE_NUMBA:
        return _levy_numba(X)
    return _levy_numpy(X)
