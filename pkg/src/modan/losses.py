"""Contrastive losses (InfoNCE, SupCon, Jaccard-weighted multi-label SupCon)
and softmax cross-entropy, each returning the value together with its exact
gradient.

All three contrastive losses share one kernel: for anchor view ``a`` with
positive set ``P(a)`` and pair weights ``w``::

    loss_a = -(1/|P(a)|) * sum_{p in P(a)} w[a, p] * log softmax_{k != a}(z_a . z_k / T)[p]

and the batch value is the mean of ``loss_a`` over anchors whose positive set
is non-empty. InfoNCE uses the partner view only with ``w = 1``; SupCon uses
same-class views with ``w = 1``; MulSupCon uses Jaccard weights and the
``w >= tau`` threshold.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _backend
from .errors import BadTarget, DegenerateBatch, EmptyLabel, ShapeMismatch, ValidationError
from .labels import MultiHotLabel

NORM_TOL = 1e-6


@dataclass(frozen=True)
class EmbeddingBatch:
    """``2N`` unit-norm view embeddings and the image each view belongs to."""

    views: np.ndarray
    image_of: np.ndarray

    def __post_init__(self):
        views = np.asarray(self.views, dtype=np.float64)
        image_of = np.asarray(self.image_of, dtype=np.int64)
        if views.ndim != 2 or views.shape[0] == 0:
            raise DegenerateBatch("batch must contain at least one image (two views)")
        if views.shape[1] < 2:
            raise ShapeMismatch(f"embedding dimension must be >= 2, got {views.shape[1]}")
        if image_of.shape != (views.shape[0],):
            raise ShapeMismatch("image_of must have one entry per view")
        norms = np.linalg.norm(views, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise ValidationError("every view embedding must have unit L2 norm")
        n = views.shape[0] // 2
        if views.shape[0] % 2 or not np.array_equal(
            np.bincount(image_of, minlength=n), np.full(n, 2)
        ) or image_of.min() < 0 or image_of.max() >= n:
            raise ValidationError("every image index 0..N-1 must own exactly two views")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "image_of", image_of)

    @classmethod
    def stacked(cls, first, second):
        """Build from two ``N x d`` arrays, view ``i`` of ``first`` paired with
        view ``i`` of ``second``."""
        first = np.asarray(first, dtype=np.float64)
        second = np.asarray(second, dtype=np.float64)
        n = first.shape[0]
        return cls(np.vstack([first, second]), np.concatenate([np.arange(n), np.arange(n)]))

    @property
    def n_images(self):
        return self.views.shape[0] // 2

    @property
    def n_views(self):
        return self.views.shape[0]


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.07
    threshold: float = 0.3

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError(f"threshold must lie in [0, 1], got {self.threshold}")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray
    anchors_used: int
    n_anchors: int

    @property
    def anchors_skipped(self):
        return self.n_anchors - self.anchors_used


@dataclass(frozen=True)
class PairWeightMatrix:
    """Jaccard weights between views, kept as exact integer ratios.

    ``w == inter / union`` elementwise; the integer parts are what the
    threshold test compares against.
    """

    inter: np.ndarray
    union: np.ndarray

    @property
    def w(self):
        return self.inter / self.union


def similarity_matrix(batch):
    return batch.views @ batch.views.T


def _check_temperature(T):
    if not T > 0:
        raise ValidationError(f"temperature must be > 0, got {T}")


def _contrastive(batch, weights, mask, T):
    z = batch.views
    logits = (z @ z.T) / T
    loss, dlog, used = _backend.contrastive_terms(logits, weights, mask)
    n_used = int(used.sum())
    m = batch.n_views
    if n_used == 0:
        return LossResult(0.0, np.zeros_like(z), 0, m)
    value = float(loss[used.astype(bool)].sum() / n_used)
    g = dlog / n_used
    grad = (g + g.T) @ z / T
    return LossResult(value, grad, n_used, m)


def _partner_mask(image_of):
    same = image_of[:, None] == image_of[None, :]
    np.fill_diagonal(same, False)
    return same


def info_nce(batch, T):
    _check_temperature(T)
    m = batch.n_views
    return _contrastive(batch, np.ones((m, m)), _partner_mask(batch.image_of), T)


def supcon(batch, labels, T):
    _check_temperature(T)
    labels = np.asarray(labels)
    if labels.shape != (batch.n_images,):
        raise ShapeMismatch("supcon needs one class id per image")
    cls = labels[batch.image_of]
    mask = cls[:, None] == cls[None, :]
    np.fill_diagonal(mask, False)
    m = batch.n_views
    return _contrastive(batch, np.ones((m, m)), mask, T)


def _label_bits(labels):
    rows = []
    for lab in labels:
        if isinstance(lab, MultiHotLabel):
            rows.append(lab.bits)
        else:
            rows.append(tuple(int(b) for b in lab))
    bits = np.array(rows, dtype=np.int64)
    if bits.ndim != 2:
        raise ShapeMismatch("labels must share one dimension k")
    if np.any(bits.sum(axis=1) == 0):
        raise EmptyLabel("jaccard is undefined for an empty label")
    return bits


def jaccard_weights(labels, image_of):
    bits = _label_bits(labels)
    image_of = np.asarray(image_of, dtype=np.int64)
    inter = bits @ bits.T
    size = bits.sum(axis=1)
    union = size[:, None] + size[None, :] - inter
    idx = np.ix_(image_of, image_of)
    return PairWeightMatrix(inter[idx], union[idx])


def positive_mask(w, tau):
    """``mask[a, p]`` iff ``p != a`` and ``w[a, p] >= tau`` (exact comparison)."""
    tau = Fraction(tau)
    top = int(w.union.max())
    # table[i, u] answers i/u >= tau for every attainable integer pair
    table = np.array([[u > 0 and Fraction(i, u) >= tau for u in range(top + 1)]
                      for i in range(top + 1)], dtype=bool)
    mask = table[w.inter, w.union]
    np.fill_diagonal(mask, False)
    return mask


def mulsupcon(batch, labels, cfg):
    if len(labels) != batch.n_images:
        raise ShapeMismatch("mulsupcon needs one label per image")
    w = jaccard_weights(labels, batch.image_of)
    mask = positive_mask(w, cfg.threshold)
    return _contrastive(batch, w.w, mask, cfg.temperature)


def cross_entropy(logits, target):
    """Mean softmax cross-entropy; ``grad`` is w.r.t. ``logits``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    target = np.atleast_1d(np.asarray(target, dtype=np.int64))
    n, c = logits.shape
    if c < 2:
        raise ShapeMismatch("cross-entropy needs at least two classes")
    if target.shape != (n,):
        raise ShapeMismatch("one target per row of logits")
    if np.any(target < 0) or np.any(target >= c):
        raise BadTarget(f"target out of range 0..{c - 1}")
    mx = logits.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
    rows = np.arange(n)
    value = float(np.mean(lse - logits[rows, target]))
    soft = np.exp(logits - lse[:, None])
    soft[rows, target] -= 1.0
    return LossResult(value, soft / n, n, n)
