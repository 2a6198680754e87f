"""Inner-loop kernels for the period-image blocks.

Each kernel has a vectorised numpy implementation and a loop implementation
compiled with numba. ``USE_NUMBA`` picks which annealing kernels the model
calls (the patch products always go through BLAS); every variant is importable
directly so they can be compared against each other.

Shapes used throughout:

* ``img``: ``(B, P, N)`` batch of period images
* ``W``: ``(K, N, C)`` one mixing matrix per within-period patch
* ``bounds``: ``(K + 1,)`` integer row boundaries of the patches
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

USE_NUMBA = HAVE_NUMBA


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------

def patch_forward_np(img, W, bounds):
    B, P, _ = img.shape
    out = np.empty((B, P, W.shape[2]))
    for k in range(W.shape[0]):
        a, b = bounds[k], bounds[k + 1]
        out[:, a:b, :] = img[:, a:b, :] @ W[k]
    return out


def patch_backward_np(img, W, bounds, dout):
    B, P, N = img.shape
    C = W.shape[2]
    dimg = np.empty_like(img)
    dW = np.empty_like(W)
    for k in range(W.shape[0]):
        a, b = bounds[k], bounds[k + 1]
        dimg[:, a:b, :] = dout[:, a:b, :] @ W[k].T
        dW[k] = img[:, a:b, :].reshape(-1, N).T @ dout[:, a:b, :].reshape(-1, C)
    return dimg, dW


def _annealing_exponent(alpha, beta, N, M):
    offsets = np.arange(1, N + 1, dtype=np.float64) - N
    denom = 1.0 + beta[:, None] * np.arange(M, dtype=np.float64)[None, :]
    return alpha[:, None, None] * offsets[None, :, None] / denom[:, None, :], offsets, denom


def annealing_np(alpha, beta, N, M):
    z, _, _ = _annealing_exponent(alpha, beta, N, M)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def annealing_backward_np(w, alpha, beta, dw):
    _, N, M = w.shape
    _, offsets, denom = _annealing_exponent(alpha, beta, N, M)
    dz = w * (dw - (dw * w).sum(axis=1, keepdims=True))
    ratio = offsets[None, :, None] / denom[:, None, :]
    dalpha = (dz * ratio).sum(axis=(1, 2))
    lag = np.arange(M, dtype=np.float64)
    dz_dbeta = -alpha[:, None, None] * ratio * (lag / denom)[:, None, :]
    dbeta = (dz * dz_dbeta).sum(axis=(1, 2))
    return dalpha, dbeta


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

@njit
def patch_forward_nb(img, W, bounds):
    B, P, N = img.shape
    K, _, C = W.shape
    out = np.zeros((B, P, C))
    for bi in range(B):
        for k in range(K):
            Wk = W[k]
            for p in range(bounds[k], bounds[k + 1]):
                for n in range(N):
                    v = img[bi, p, n]
                    for c in range(C):
                        out[bi, p, c] += v * Wk[n, c]
    return out


@njit
def patch_backward_nb(img, W, bounds, dout):
    B, P, N = img.shape
    K, _, C = W.shape
    dimg = np.zeros((B, P, N))
    dW = np.zeros((K, N, C))
    for bi in range(B):
        for k in range(K):
            Wk = W[k]
            for p in range(bounds[k], bounds[k + 1]):
                for n in range(N):
                    v = img[bi, p, n]
                    acc = 0.0
                    for c in range(C):
                        g = dout[bi, p, c]
                        acc += g * Wk[n, c]
                        dW[k, n, c] += v * g
                    dimg[bi, p, n] = acc
    return dimg, dW


@njit
def annealing_nb(alpha, beta, N, M):
    B = alpha.shape[0]
    w = np.empty((B, N, M))
    for bi in range(B):
        for j in range(M):
            scale = alpha[bi] / (1.0 + beta[bi] * j)
            # exponent is maximal at n = N where it is zero (alpha >= 0)
            zmax = -np.inf
            for n in range(N):
                z = scale * (n + 1 - N)
                if z > zmax:
                    zmax = z
            total = 0.0
            for n in range(N):
                e = np.exp(scale * (n + 1 - N) - zmax)
                w[bi, n, j] = e
                total += e
            for n in range(N):
                w[bi, n, j] /= total
    return w


@njit
def annealing_backward_nb(w, alpha, beta, dw):
    B, N, M = w.shape
    dalpha = np.zeros(B)
    dbeta = np.zeros(B)
    for bi in range(B):
        for j in range(M):
            denom = 1.0 + beta[bi] * j
            inner = 0.0
            for n in range(N):
                inner += dw[bi, n, j] * w[bi, n, j]
            for n in range(N):
                dz = w[bi, n, j] * (dw[bi, n, j] - inner)
                ratio = (n + 1 - N) / denom
                dalpha[bi] += dz * ratio
                dbeta[bi] -= dz * alpha[bi] * ratio * j / denom
    return dalpha, dbeta


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


# The per-patch products are plain matrix multiplies; batched BLAS beats the
# compiled loops (see benchmarks/bench_kernels.py), so both paths use it. The
# ``*_nb`` patch kernels are kept as an independent reference implementation.

def patch_forward(img, W, bounds):
    return patch_forward_np(img, W, bounds)


def patch_backward(img, W, bounds, dout):
    return patch_backward_np(img, W, bounds, dout)


def annealing(alpha, beta, N, M):
    if USE_NUMBA:
        return annealing_nb(_as_f64(alpha), _as_f64(beta), int(N), int(M))
    return annealing_np(np.asarray(alpha, dtype=np.float64), np.asarray(beta, dtype=np.float64), N, M)


def annealing_backward(w, alpha, beta, dw):
    if USE_NUMBA:
        return annealing_backward_nb(_as_f64(w), _as_f64(alpha), _as_f64(beta), _as_f64(dw))
    return annealing_backward_np(w, np.asarray(alpha, dtype=np.float64),
                                 np.asarray(beta, dtype=np.float64), dw)
