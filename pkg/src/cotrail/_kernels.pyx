# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: skip-gram negative-sampling and sparse LR SGD loops.

Same update rules and pre-sampled random draws as ``_kernels_py``; only
the float rounding of the inner products differs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

BACKEND = "compiled"


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) nogil:
    if x > 35.0:
        return x
    return log1p(exp(x))


def sgns_epoch(float[:, ::1] vec_in, float[:, ::1] vec_out,
               int[::1] tokens, long long[::1] offsets,
               int[::1] windows, int[:, ::1] negatives,
               double lr_start, double lr_end, double lr_floor):
    """One epoch of skip-gram negative-sampling updates (in place).

    Mirrors ``_kernels_py.sgns_epoch``; see there for the contract.
    """
    cdef Py_ssize_t n_sent = offsets.shape[0] - 1
    cdef Py_ssize_t n_pairs_total = negatives.shape[0]
    cdef Py_ssize_t n_neg = negatives.shape[1]
    cdef Py_ssize_t dim = vec_in.shape[1]
    cdef Py_ssize_t s, c, j, lo, hi, m, d, pair = 0
    cdef int center, ctx, neg, w
    cdef double loss = 0.0, alpha, f, g
    cdef float gf
    cdef float *h
    cdef float *v
    accum_arr = np.zeros(dim, dtype=np.float32)
    cdef float[::1] accum_mv = accum_arr
    cdef float *accum = &accum_mv[0]

    with nogil:
        for s in range(n_sent):
            lo = <Py_ssize_t> offsets[s]
            hi = <Py_ssize_t> offsets[s + 1]
            for c in range(lo, hi):
                center = tokens[c]
                w = windows[c]
                h = &vec_in[center, 0]
                j = c - w
                if j < lo:
                    j = lo
                while j < hi and j <= c + w:
                    if j == c:
                        j += 1
                        continue
                    ctx = tokens[j]
                    if n_pairs_total > 0:
                        alpha = lr_start + (lr_end - lr_start) * (<double> pair / <double> n_pairs_total)
                    else:
                        alpha = lr_start
                    if alpha < lr_floor:
                        alpha = lr_floor
                    # positive target
                    v = &vec_out[ctx, 0]
                    f = 0.0
                    for d in range(dim):
                        f += <double> h[d] * <double> v[d]
                    loss += _softplus(-f)
                    g = alpha * (1.0 - _sigmoid(f))
                    gf = <float> g
                    for d in range(dim):
                        accum[d] = gf * v[d]
                        v[d] += gf * h[d]
                    # negatives
                    for m in range(n_neg):
                        neg = negatives[pair, m]
                        if neg == ctx:
                            continue
                        v = &vec_out[neg, 0]
                        f = 0.0
                        for d in range(dim):
                            f += <double> h[d] * <double> v[d]
                        loss += _softplus(f)
                        g = alpha * (0.0 - _sigmoid(f))
                        gf = <float> g
                        for d in range(dim):
                            accum[d] += gf * v[d]
                            v[d] += gf * h[d]
                    for d in range(dim):
                        h[d] += accum[d]
                    pair += 1
                    j += 1
    return loss, <long long> pair


def lr_epoch(double[::1] weights, double bias,
             int[::1] indices, long long[::1] indptr,
             signed char[::1] labels, long long[::1] order,
             double lr, double l2):
    """One epoch of sparse LR SGD with dense L2 decay (in place)."""
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t n_feat = weights.shape[0]
    cdef Py_ssize_t k, i, t, lo, hi
    cdef double loss = 0.0, z, p, g, y
    cdef double decay = 1.0 - lr * l2
    with nogil:
        for k in range(n):
            i = <Py_ssize_t> order[k]
            lo = <Py_ssize_t> indptr[i]
            hi = <Py_ssize_t> indptr[i + 1]
            y = <double> labels[i]
            z = bias
            for t in range(lo, hi):
                z += weights[indices[t]]
            p = _sigmoid(z)
            loss += _softplus(z) - y * z
            g = p - y
            if l2 > 0.0:
                for t in range(n_feat):
                    weights[t] *= decay
            for t in range(lo, hi):
                weights[indices[t]] -= lr * g
            bias -= lr * g
    return loss, bias


def lr_logloss(double[::1] weights, double bias,
               int[::1] indices, long long[::1] indptr,
               signed char[::1] labels):
    """Mean data log-loss of the current model over all examples."""
    cdef Py_ssize_t n = labels.shape[0]
    cdef Py_ssize_t i, t
    cdef double total = 0.0, z
    if n == 0:
        return 0.0
    with nogil:
        for i in range(n):
            z = bias
            for t in range(indptr[i], indptr[i + 1]):
                z += weights[indices[t]]
            total += _softplus(z) - (<double> labels[i]) * z
    return total / n
