"""Pure numpy implementations of the hot loops; used when the compiled
extension is unavailable or ``MODAN_PURE_PYTHON=1`` is set."""

import numpy as np


def contrastive_terms(logits, weights, mask):
    """Per-anchor weighted contrastive terms and their logit gradients.

    For anchor ``a`` with positive set ``P`` (``mask[a]``, diagonal ignored)
    the term is ``-(1/|P|) * sum_p weights[a, p] * log_softmax(logits[a])[p]``
    where the softmax runs over every column except ``a``.

    Returns ``(loss, dlogits, used)``: ``loss[a]`` is the anchor term (0 when
    ``P`` is empty), ``dlogits`` is the gradient of ``sum(loss)`` w.r.t.
    ``logits`` and ``used`` flags anchors with a non-empty positive set.
    """
    m = logits.shape[0]
    offdiag = ~np.eye(m, dtype=bool)
    pos = mask.astype(bool) & offdiag
    npos = pos.sum(axis=1)
    used = npos > 0

    masked = np.where(offdiag, logits, -np.inf)
    mx = masked.max(axis=1, keepdims=True)
    ex = np.where(offdiag, np.exp(masked - mx), 0.0)
    s = ex.sum(axis=1, keepdims=True)
    lse = mx + np.log(s)
    log_prob = np.where(offdiag, logits - lse, 0.0)

    w = np.where(pos, weights, 0.0)
    safe = np.where(used, npos, 1)
    loss = np.where(used, -(w * log_prob).sum(axis=1) / safe, 0.0)

    soft = ex / s
    wsum = w.sum(axis=1, keepdims=True)
    dlog = (wsum * soft - w) / safe[:, None]
    dlog[~used] = 0.0
    return loss, dlog, used.astype(np.uint8)


def _subset_sums(r):
    m = len(r)
    bits = (np.arange(1 << m)[:, None] >> np.arange(m)) & 1
    return bits @ r


def signed_rank_counts(ranks2):
    """Histogram of the (doubled) positive-rank sum over all 2**n sign patterns.

    The patterns are enumerated in two halves and the half-histograms are
    convolved, which yields the same integer counts as a flat enumeration.
    """
    ranks2 = np.asarray(ranks2, dtype=np.int64)
    total = int(ranks2.sum())
    half = len(ranks2) // 2
    lo = np.bincount(_subset_sums(ranks2[:half]))
    hi = np.bincount(_subset_sums(ranks2[half:]))
    counts = np.convolve(lo, hi)
    out = np.zeros(total + 1, dtype=np.int64)
    out[: len(counts)] = counts
    return out
