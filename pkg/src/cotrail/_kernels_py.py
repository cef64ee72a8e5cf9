"""Pure-Python (numpy) kernels: the fallback when the compiled core is absent.

Both backends implement the same update rules over the same pre-sampled
random draws, so they differ only in float rounding.  This one loops over
training pairs in Python and is roughly two orders of magnitude slower
than ``cotrail._kernels``; fine for tests and small corpora.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    # log(1 + exp(x)), overflow-safe
    if x > 35.0:
        return x
    return math.log1p(math.exp(x))


def sgns_epoch(vec_in, vec_out, tokens, offsets, windows, negatives,
               lr_start, lr_end, lr_floor):
    """One epoch of skip-gram negative-sampling updates.

    ``tokens``/``offsets`` hold the sub-sampled session stream, ``windows``
    the per-position dynamic context radius and ``negatives`` one row of
    pre-sampled negative ids per (center, context) pair, enumerated in
    stream order with contexts left to right.  Updates are applied in
    place; returns (summed pair loss, pair count).
    """
    n_pairs_total = negatives.shape[0]
    n_neg = negatives.shape[1]
    loss = 0.0
    pair = 0
    for s in range(len(offsets) - 1):
        lo, hi = int(offsets[s]), int(offsets[s + 1])
        for c in range(lo, hi):
            center = int(tokens[c])
            w = int(windows[c])
            h = vec_in[center]
            for j in range(max(lo, c - w), min(hi, c + w + 1)):
                if j == c:
                    continue
                ctx = int(tokens[j])
                if n_pairs_total:
                    alpha = lr_start + (lr_end - lr_start) * (pair / n_pairs_total)
                else:
                    alpha = lr_start
                if alpha < lr_floor:
                    alpha = lr_floor
                vp = vec_out[ctx]
                f = float(np.dot(h, vp))
                loss += _softplus(-f)
                g = alpha * (1.0 - _sigmoid(f))
                accum = g * vp
                vp += g * h
                for m in range(n_neg):
                    neg = int(negatives[pair, m])
                    if neg == ctx:
                        continue
                    vn = vec_out[neg]
                    f = float(np.dot(h, vn))
                    loss += _softplus(f)
                    g = alpha * (0.0 - _sigmoid(f))
                    accum += g * vn
                    vn += g * h
                h += accum
                pair += 1
    return loss, pair


def lr_epoch(weights, bias, indices, indptr, labels, order, lr, l2):
    """One epoch of sparse logistic-regression SGD with dense L2 decay.

    Examples are visited in ``order``; the running data log-loss (computed
    before each update) is summed and returned along with the new bias.
    """
    loss = 0.0
    decay = 1.0 - lr * l2
    for k in range(len(order)):
        i = int(order[k])
        idx = indices[indptr[i]:indptr[i + 1]]
        y = float(labels[i])
        z = bias + float(weights[idx].sum())
        p = _sigmoid(z)
        loss += _softplus(z) - y * z
        g = p - y
        if l2 > 0.0:
            weights *= decay
        weights[idx] -= lr * g
        bias -= lr * g
    return loss, bias


def lr_logloss(weights, bias, indices, indptr, labels):
    """Mean data log-loss of the current model over all examples."""
    n = len(labels)
    if n == 0:
        return 0.0
    total = 0.0
    for i in range(n):
        idx = indices[indptr[i]:indptr[i + 1]]
        z = bias + float(weights[idx].sum())
        total += _softplus(z) - float(labels[i]) * z
    return total / n
