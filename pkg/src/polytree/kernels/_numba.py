"""Numba-jitted implementations of the hot numeric kernels.

Same piecewise formulas as the numpy backend, fused into single passes
over the (n, k) committee matrices to avoid boolean-mask temporaries.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _softplus1(z):
    if z > 30.0:
        return z
    if z < -30.0:
        return np.exp(z)
    return np.log1p(np.exp(z))


@njit(cache=True)
def _sigmoid1(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


@njit(cache=True)
def softplus(z):
    flat = z.ravel()
    out = np.empty(flat.shape[0], dtype=np.float64)
    for i in range(flat.shape[0]):
        out[i] = _softplus1(flat[i])
    return out.reshape(z.shape)


@njit(cache=True)
def sigmoid(z):
    flat = z.ravel()
    out = np.empty(flat.shape[0], dtype=np.float64)
    for i in range(flat.shape[0]):
        out[i] = _sigmoid1(flat[i])
    return out.reshape(z.shape)


@njit(cache=True)
def committee_forward(zmat, r):
    n, k = zmat.shape
    sp = np.empty((n, k), dtype=np.float64)
    g = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(k):
            s = _softplus1(zmat[i, j])
            sp[i, j] = s
            acc += r[j] * s
        g[i] = acc
    return g, sp


@njit(cache=True)
def committee_backward(zmat, sp, r, dg):
    n, k = zmat.shape
    dz = np.empty((n, k), dtype=np.float64)
    dlogr = np.zeros(k, dtype=np.float64)
    for i in range(n):
        d = dg[i]
        for j in range(k):
            dz[i, j] = d * r[j] * _sigmoid1(zmat[i, j])
            dlogr[j] += d * sp[i, j]
    for j in range(k):
        dlogr[j] *= r[j]
    return dz, dlogr
