"""Compiled loops for the scaled squared distances inside RBFI layers.

All kernels work on ``x`` (B, N), ``u`` and ``w`` (N, M), and the per-term
quantity ``z[b, i, j] = (u[i, j] * (x[b, i] - w[i, j])) ** 2``. The (B, N, M)
tensor is never materialised in full; backward passes stream over chunks of
the batch. Arithmetic is kept in the same order as the equivalent numpy
expression so that forward values agree bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# target number of float64 entries per streamed chunk
_CHUNK_ENTRIES = 1 << 20


@njit(cache=True)
def sqdist_max(x, u, w):
    B, N = x.shape
    M = u.shape[1]
    y = np.full((B, M), -np.inf)
    arg = np.zeros((B, M), np.int64)
    for b in range(B):
        for i in range(N):
            xi = x[b, i]
            for j in range(M):
                d = u[i, j] * (xi - w[i, j])
                z = d * d
                if z > y[b, j]:
                    y[b, j] = z
                    arg[b, j] = i
    return y, arg


@njit(cache=True)
def sqdist_sum(x, u, w):
    B, N = x.shape
    M = u.shape[1]
    y = np.zeros((B, M))
    for b in range(B):
        for i in range(N):
            xi = x[b, i]
            for j in range(M):
                d = u[i, j] * (xi - w[i, j])
                y[b, j] += d * d
    return y


@njit(cache=True)
def _shifted_sqdist(x, u, w, y, T, b0):
    C, N, M = T.shape
    for c in range(C):
        b = b0 + c
        for i in range(N):
            xi = x[b, i]
            for j in range(M):
                d = u[i, j] * (xi - w[i, j])
                T[c, i, j] = d * d - y[b, j]


@njit(cache=True)
def _accumulate_weighted(x, u, w, g, T, gu, gw, gx, b0, want_x):
    # T holds per-term feedback weights for batch rows b0 .. b0 + C
    C, N, M = T.shape
    for c in range(C):
        b = b0 + c
        for i in range(N):
            xi = x[b, i]
            acc = 0.0
            for j in range(M):
                uij = u[i, j]
                diff = xi - w[i, j]
                s = T[c, i, j] * g[b, j] * 2.0 * uij * diff
                gu[i, j] += s * diff
                gw[i, j] -= s * uij
                acc += s * uij
            if want_x:
                gx[b, i] += acc


@njit(cache=True)
def _accumulate_unit(x, u, w, g, gu, gw, gx, want_x):
    B, N = x.shape
    M = u.shape[1]
    for b in range(B):
        for i in range(N):
            xi = x[b, i]
            acc = 0.0
            for j in range(M):
                uij = u[i, j]
                diff = xi - w[i, j]
                s = g[b, j] * 2.0 * uij * diff
                gu[i, j] += s * diff
                gw[i, j] -= s * uij
                acc += s * uij
            if want_x:
                gx[b, i] += acc


@njit(cache=True)
def _accumulate_argmax(x, u, w, g, arg, gu, gw, gx):
    B, M = g.shape
    for b in range(B):
        for j in range(M):
            i = arg[b, j]
            uij = u[i, j]
            diff = x[b, i] - w[i, j]
            s = g[b, j] * 2.0 * uij * diff
            gu[i, j] += s * diff
            gw[i, j] -= s * uij
            gx[b, i] += s * uij


def backward_shared_feedback(x, u, w, y, g, want_x):
    """Gradients of ``sum(g * max_i z)`` with feedback ``exp(z_i - y)`` to every term."""
    B, N = x.shape
    M = u.shape[1]
    gu = np.zeros((N, M))
    gw = np.zeros((N, M))
    gx = np.zeros((B, N))
    chunk = max(1, min(B, _CHUNK_ENTRIES // max(1, N * M)))
    T = np.empty((chunk, N, M))
    for b0 in range(0, B, chunk):
        view = T[: min(chunk, B - b0)]
        _shifted_sqdist(x, u, w, y, view, b0)
        np.exp(view, out=view)
        _accumulate_weighted(x, u, w, g, view, gu, gw, gx, b0, want_x)
    return gx, gu, gw


def backward_argmax(x, u, w, arg, g):
    """Gradients of ``sum(g * max_i z)`` routed to the first maximal term only."""
    B, N = x.shape
    gu = np.zeros_like(u)
    gw = np.zeros_like(w)
    gx = np.zeros((B, N))
    _accumulate_argmax(x, u, w, g, arg, gu, gw, gx)
    return gx, gu, gw


def backward_sum(x, u, w, g, want_x):
    """Gradients of ``sum(g * sum_i z)``."""
    B, N = x.shape
    gu = np.zeros_like(u)
    gw = np.zeros_like(w)
    gx = np.zeros((B, N))
    _accumulate_unit(x, u, w, g, gu, gw, gx, want_x)
    return gx, gu, gw


@njit(cache=True)
def rowwise_matmul(a, b):
    """``a @ b`` summed in ascending ``k`` for every row, so that each output row
    depends only on the matching input row (BLAS results vary with batch size)."""
    R, K = a.shape
    M = b.shape[1]
    out = np.zeros((R, M))
    for r in range(R):
        for k in range(K):
            ark = a[r, k]
            for j in range(M):
                out[r, j] += ark * b[k, j]
    return out
