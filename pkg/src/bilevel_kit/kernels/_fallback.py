"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Arrays are float64; ``labels`` is an int64 vector of class ids.
"""

import numpy as np


def soft_threshold(z, t):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def soft_threshold_mask(z, t):
    """Almost-everywhere derivative of ``soft_threshold`` w.r.t. ``z``.

    Points exactly on the kink ``|z| == t`` get derivative 0.
    """
    return (np.abs(np.asarray(z, dtype=float)) > t).astype(float)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def xent_losses(U, labels, W):
    logits = U @ W
    top = logits.max(axis=1)
    lse = top + np.log(np.exp(logits - top[:, None]).sum(axis=1))
    return lse - logits[np.arange(U.shape[0]), labels]


def xent_grad(U, labels, w, W):
    """Gradient w.r.t. ``W`` of ``sum_i w_i * loss_i(W)``."""
    R = _softmax(U @ W)
    R[np.arange(U.shape[0]), labels] -= 1.0
    return U.T @ (w[:, None] * R)


def xent_hvp(U, w, W, V):
    """Hessian of ``sum_i w_i * loss_i(W)`` applied to the direction ``V``."""
    P = _softmax(U @ W)
    Z = U @ V
    PZ = P * Z
    H = PZ - P * PZ.sum(axis=1, keepdims=True)
    return U.T @ (w[:, None] * H)


def xent_mixed(U, labels, W, V):
    """Per-sample directional derivative ``<grad_W loss_i(W), V>``."""
    R = _softmax(U @ W)
    R[np.arange(U.shape[0]), labels] -= 1.0
    return ((U @ V) * R).sum(axis=1)
