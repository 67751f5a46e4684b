"""Pure-numpy implementations of the hot numeric kernels.

These are the reference semantics; the numba backend mirrors them loop
for loop. Keep both in sync.
"""

import numpy as np


def softplus(z):
    """Overflow-safe ln(1 + exp(z)), elementwise.

    Piecewise evaluation: z for z > 30 (the dropped term is below double
    precision), exp(z) for z < -30 (first-order expansion), exact
    log1p(exp(z)) in between.
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    hi = z > 30.0
    lo = z < -30.0
    mid = ~(hi | lo)
    out[hi] = z[hi]
    out[lo] = np.exp(z[lo])
    out[mid] = np.log1p(np.exp(z[mid]))
    return out


def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0.0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    out[neg] = ez / (1.0 + ez)
    return out


def committee_forward(zmat, r):
    """Aggregate the expert committee at one branch node.

    zmat : (n, k) pre-activations beta_k'x per sample and expert.
    r    : (k,) nonnegative expert importance weights.

    Returns (g, sp) where sp[n, k] = softplus(zmat[n, k]) is kept as the
    backward-pass cache and g[n] = sum_k r[k] * sp[n, k] is the negated
    log-complement of the committee "Yes" probability.
    """
    sp = softplus(zmat)
    g = sp @ r
    return g, sp


def committee_backward(zmat, sp, r, dg):
    """Backward pass through committee_forward.

    dg : (n,) gradient of the loss with respect to g.

    Returns (dz, dlogr): dz[n, k] = dg[n] * r[k] * sigmoid(zmat[n, k])
    feeds the beta gradient (dbeta = dz.T @ x), and
    dlogr[k] = r[k] * sum_n dg[n] * sp[n, k] is the gradient with
    respect to ln r[k].
    """
    sig = sigmoid(zmat)
    dz = dg[:, None] * r[None, :] * sig
    dlogr = r * (dg @ sp)
    return dz, dlogr
