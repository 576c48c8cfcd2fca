# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``modan._pykernels`` exactly."""

import numpy as np
from libc.math cimport exp, log, INFINITY


def contrastive_terms(const double[:, ::1] logits,
                      const double[:, ::1] weights,
                      const unsigned char[:, ::1] mask):
    cdef Py_ssize_t m = logits.shape[0]
    cdef Py_ssize_t a, k
    cdef Py_ssize_t npos
    cdef double wsum, mx, s, lse, acc, inv, e

    loss_np = np.zeros(m, dtype=np.float64)
    dlog_np = np.zeros((m, m), dtype=np.float64)
    used_np = np.zeros(m, dtype=np.uint8)
    cdef double[::1] loss = loss_np
    cdef double[:, ::1] dlog = dlog_np
    cdef unsigned char[::1] used = used_np

    for a in range(m):
        npos = 0
        wsum = 0.0
        for k in range(m):
            if k != a and mask[a, k]:
                npos += 1
                wsum += weights[a, k]
        if npos == 0:
            continue
        used[a] = 1

        mx = -INFINITY
        for k in range(m):
            if k != a and logits[a, k] > mx:
                mx = logits[a, k]
        s = 0.0
        for k in range(m):
            if k != a:
                e = exp(logits[a, k] - mx)
                dlog[a, k] = e
                s += e
        lse = mx + log(s)

        acc = 0.0
        for k in range(m):
            if k != a and mask[a, k]:
                acc += weights[a, k] * (logits[a, k] - lse)
        loss[a] = -acc / npos

        inv = 1.0 / npos
        for k in range(m):
            if k != a:
                e = wsum * (dlog[a, k] / s)
                if mask[a, k]:
                    e -= weights[a, k]
                dlog[a, k] = e * inv
    return loss_np, dlog_np, used_np


def signed_rank_counts(const long long[::1] ranks2):
    cdef Py_ssize_t n = ranks2.shape[0]
    cdef long long total = 0
    cdef Py_ssize_t j
    for j in range(n):
        total += ranks2[j]
    counts_np = np.zeros(total + 1, dtype=np.int64)
    cdef long long[::1] counts = counts_np

    # Subset-sum counting: after folding in rank j, counts[w] is the number of
    # sign patterns over ranks 0..j whose positive ranks sum to w. Walking w
    # downwards lets each rank be used at most once per pattern.
    cdef long long w, r, reach = 0
    counts[0] = 1
    for j in range(n):
        r = ranks2[j]
        reach += r
        w = reach
        while w >= r:
            counts[w] += counts[w - r]
            w -= 1
    return counts_np
