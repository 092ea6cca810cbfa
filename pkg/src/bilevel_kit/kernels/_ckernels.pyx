# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_fallback.py``.

The loops fuse the logits, softmax and contraction passes so that no N x C
temporaries are allocated; for desk-scale problems the per-call overhead of
numpy dominates and this is where the time goes.
"""

import numpy as np
from libc.math cimport exp, log, fabs


def soft_threshold(z, double t):
    arr = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] zin = arr.reshape(-1)
    cdef double[::1] zo = out.reshape(-1)
    cdef Py_ssize_t i, n = zin.shape[0]
    cdef double v
    for i in range(n):
        v = zin[i]
        if v > t:
            zo[i] = v - t
        elif v < -t:
            zo[i] = v + t
        else:
            zo[i] = 0.0
    return out


def soft_threshold_mask(z, double t):
    arr = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] zin = arr.reshape(-1)
    cdef double[::1] zo = out.reshape(-1)
    cdef Py_ssize_t i, n = zin.shape[0]
    for i in range(n):
        zo[i] = 1.0 if fabs(zin[i]) > t else 0.0
    return out


cdef inline void _softmax_row(const double[:, ::1] U, const double[:, ::1] W,
                              Py_ssize_t i, double* p) nogil:
    cdef Py_ssize_t d = U.shape[1], C = W.shape[1], j, c
    cdef double acc, top, s
    for c in range(C):
        acc = 0.0
        for j in range(d):
            acc = acc + U[i, j] * W[j, c]
        p[c] = acc
    top = p[0]
    for c in range(1, C):
        if p[c] > top:
            top = p[c]
    s = 0.0
    for c in range(C):
        p[c] = exp(p[c] - top)
        s = s + p[c]
    for c in range(C):
        p[c] = p[c] / s


def xent_losses(const double[:, ::1] U, const long long[::1] labels,
                const double[:, ::1] W):
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], C = W.shape[1]
    cdef Py_ssize_t i, j, c
    out = np.empty(N)
    cdef double[::1] o = out
    cdef double[::1] z = np.empty(C)
    cdef double acc, top, s
    for i in range(N):
        for c in range(C):
            acc = 0.0
            for j in range(d):
                acc = acc + U[i, j] * W[j, c]
            z[c] = acc
        top = z[0]
        for c in range(1, C):
            if z[c] > top:
                top = z[c]
        s = 0.0
        for c in range(C):
            s = s + exp(z[c] - top)
        o[i] = top + log(s) - z[labels[i]]
    return out


def xent_grad(const double[:, ::1] U, const long long[::1] labels,
              const double[::1] w, const double[:, ::1] W):
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], C = W.shape[1]
    cdef Py_ssize_t i, j, c
    G = np.zeros((d, C))
    cdef double[:, ::1] g = G
    cdef double[::1] p = np.empty(C)
    cdef double r
    for i in range(N):
        if w[i] == 0.0:
            continue
        _softmax_row(U, W, i, &p[0])
        p[labels[i]] -= 1.0
        for c in range(C):
            r = w[i] * p[c]
            for j in range(d):
                g[j, c] += U[i, j] * r
    return G


def xent_hvp(const double[:, ::1] U, const double[::1] w,
             const double[:, ::1] W, const double[:, ::1] V):
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], C = W.shape[1]
    cdef Py_ssize_t i, j, c
    G = np.zeros((d, C))
    cdef double[:, ::1] g = G
    cdef double[::1] p = np.empty(C)
    cdef double[::1] zv = np.empty(C)
    cdef double acc, dot, h
    for i in range(N):
        if w[i] == 0.0:
            continue
        _softmax_row(U, W, i, &p[0])
        dot = 0.0
        for c in range(C):
            acc = 0.0
            for j in range(d):
                acc = acc + U[i, j] * V[j, c]
            zv[c] = acc
            dot = dot + p[c] * acc
        for c in range(C):
            h = w[i] * (p[c] * zv[c] - p[c] * dot)
            for j in range(d):
                g[j, c] += U[i, j] * h
    return G


def xent_mixed(const double[:, ::1] U, const long long[::1] labels,
               const double[:, ::1] W, const double[:, ::1] V):
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], C = W.shape[1]
    cdef Py_ssize_t i, j, c
    out = np.empty(N)
    cdef double[::1] o = out
    cdef double[::1] p = np.empty(C)
    cdef double acc, s
    for i in range(N):
        _softmax_row(U, W, i, &p[0])
        p[labels[i]] -= 1.0
        s = 0.0
        for c in range(C):
            acc = 0.0
            for j in range(d):
                acc = acc + U[i, j] * V[j, c]
            s = s + acc * p[c]
        o[i] = s
    return out
