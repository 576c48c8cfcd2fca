"""Cross-validation protocol, AUC, Wilcoxon signed-rank test, PCA projection,
per-class capping and the synthetic hierarchical corpus."""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

from . import _backend
from .datasets import LabeledDataset, PretrainDataset
from .errors import BadConfig, DegenerateData, ShapeMismatch, SingleClass, TooFewSamples
from .labels import encode
from .seeding import rng_for

EXACT_MAX_N = 25


# -- folds -----------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPartition:
    k: int
    assignment: np.ndarray
    seed: int

    def test_indices(self, fold):
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.assignment != fold)

    def fold_hash(self, fold):
        idx = self.test_indices(fold).astype("<i8")
        return hashlib.sha256(idx.tobytes()).hexdigest()[:16]

    def hashes(self):
        return [self.fold_hash(f) for f in range(self.k)]


def kfold_split(labels, k=5, seed=0):
    """Stratified assignment of samples to ``k`` folds.

    Each class is shuffled and dealt round-robin, and the dealing continues
    across classes, so both per-class and total fold sizes differ by at most 1.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise BadConfig("k must be >= 2")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot fill {k} folds")
    rng = rng_for(seed, "fold")
    assignment = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        assignment[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    return FoldPartition(k, assignment, seed)


# -- AUC -------------------------------------------------------------------------


def auc(scores, labels):
    """Mann-Whitney AUC: ``(wins + ties/2) / (P * N)`` over positive-negative pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ShapeMismatch("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# -- Wilcoxon ----------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonResult:
    method_a: str
    method_b: str
    w_plus: float
    w_minus: float
    p_value: float
    n_effective: int
    exact: bool
    degenerate: bool = False

    @property
    def statistic(self):
        return min(self.w_plus, self.w_minus)


def signed_rank_null(ranks):
    """Counts of every attainable ``2 * W+`` over all sign assignments."""
    ranks2 = np.rint(2.0 * np.asarray(ranks)).astype(np.int64)
    return _backend.signed_rank_counts(ranks2)


def wilcoxon_signed_rank(x, y, method_a="a", method_b="b"):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get average ranks. Up to
    25 non-zero pairs the p-value is exact (all ``2**n`` sign patterns);
    beyond that a tie-corrected normal approximation is used.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeMismatch("paired samples must have equal length")
    d = x - y
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return ComparisonResult(method_a, method_b, 0.0, 0.0, 1.0, 0, True, degenerate=True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    if n <= EXACT_MAX_N:
        counts = signed_rank_null(ranks)
        w2 = int(round(2 * min(w_plus, w_minus)))
        tail = int(counts[: w2 + 1].sum())
        p = min(1.0, 2.0 * tail / 2.0**n)
        exact = True
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
        z = (min(w_plus, w_minus) - mean) / math.sqrt(var)
        p = min(1.0, 2.0 * float(norm.cdf(z)))
        exact = False
    return ComparisonResult(method_a, method_b, w_plus, w_minus, p, n, exact)


# -- repeated CV ---------------------------------------------------------------------


@dataclass
class CvReport:
    method: str
    summaries: list
    fold_aucs: list
    fold_hashes: list
    config_fingerprint: str = ""
    notes: list = field(default_factory=list)

    @property
    def mean_auc(self):
        return float(np.mean(self.summaries))


def repeated_cv(task, runner, partition, repeats=10, base_seed=0, method="method",
                config_fingerprint=""):
    """Run ``repeats`` passes of k-fold CV over one fixed ``partition``.

    ``runner(train, test_features, seed)`` returns held-out scores; repeat
    ``r`` passes ``seed = base_seed + r``.
    """
    if len(partition.assignment) != len(task):
        raise ShapeMismatch("partition does not cover the task")
    summaries, fold_aucs = [], []
    for r in range(repeats):
        seed = base_seed + r
        row = []
        for fold in range(partition.k):
            test = partition.test_indices(fold)
            train = partition.train_indices(fold)
            scores = runner(task.subset(train), task.features[test], seed)
            row.append(auc(scores, task.labels[test]))
        fold_aucs.append(row)
        summaries.append(float(np.mean(row)))
    return CvReport(method, summaries, fold_aucs, partition.hashes(), config_fingerprint)


# -- PCA -----------------------------------------------------------------------------


def project_2d(embeddings):
    """Project onto the top two principal components of the centred data."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ShapeMismatch("need at least 3 samples")
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-12 * max(1.0, np.abs(x).max()):
        raise DegenerateData("data has rank 0 after centring")
    comps = vt[:2]
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros_like(comps[0])])
    # deterministic sign: largest-magnitude loading positive
    for c in comps:
        j = np.argmax(np.abs(c))
        if c[j] < 0:
            c *= -1
    return xc @ comps.T


# -- manifests -----------------------------------------------------------------------


def cap_per_class(rows, cap=100, seed=0, key="class_id"):
    """Keep at most ``cap`` uniformly sampled rows per class, original order kept.

    ``rows`` is a sequence of mappings (or objects) exposing ``key``.
    """
    def cls_of(row):
        return row[key] if isinstance(row, dict) else getattr(row, key)

    groups = {}
    for i, row in enumerate(rows):
        groups.setdefault(cls_of(row), []).append(i)
    rng = rng_for(seed, "cap")
    keep = []
    for cls in sorted(groups, key=str):
        idx = groups[cls]
        if len(idx) > cap:
            idx = sorted(rng.choice(idx, size=cap, replace=False).tolist())
        keep.extend(idx)
    keep.sort()
    return [rows[i] for i in keep]


# -- synthetic corpus ------------------------------------------------------------------


@dataclass
class SyntheticCorpus:
    pretrain: PretrainDataset
    tasks: dict
    cell_means: np.ndarray
    task_cell: tuple


def generate_hierarchical_corpus(n_per_cell, vocab, latent_dim=16, noise_sigma=0.3, seed=0,
                                 n_task=200, task_cell=None, separation=1.5,
                                 severity_scale=0.3, positive_rate=0.3, nuisance_gain=3.0):
    """Synthetic stand-in for a metadata-labeled pretraining corpus.

    Modality and anatomy each own orthonormal directions in feature space; a
    cell's mean is ``separation * (modality_dir + anatomy_dir)``. Samples add
    Gaussian noise with std ``noise_sigma`` along the metadata directions and
    ``noise_sigma * nuisance_gain`` along the remaining nuisance directions
    (``nuisance_gain=1`` gives isotropic noise). The downstream task lives in ``task_cell``
    (default: last modality, last anatomy): each sample carries a latent
    severity ``s ~ N(0, 1)`` that shifts it by ``severity_scale * s`` along
    the unit direction from its anatomy toward the next anatomy of the
    vocabulary (toward the next modality when there is a single anatomy).
    The binary label is ``s`` above the ``1 - positive_rate`` quantile of the
    standard normal. The task is drawn independently of the corpus.
    """
    n_mod, n_ana = len(vocab.modalities), len(vocab.anatomies)
    if n_per_cell < 1 or n_task < 2:
        raise BadConfig("n_per_cell must be >= 1 and n_task >= 2")
    if n_mod * n_ana < 2:
        raise BadConfig("vocabulary must define at least two cells")
    if latent_dim < n_mod + n_ana:
        raise BadConfig(f"latent_dim must be >= {n_mod + n_ana}")
    if noise_sigma < 0 or nuisance_gain <= 0 or not 0 < positive_rate < 1:
        raise BadConfig("noise_sigma must be >= 0, nuisance_gain > 0 and positive_rate in (0, 1)")
    if task_cell is None:
        task_cell = (vocab.modalities[-1], vocab.anatomies[-1])
    encode(*task_cell, vocab)  # raises UnknownName for a bad cell

    rng = rng_for(seed, "synth")
    basis, _ = np.linalg.qr(rng.standard_normal((latent_dim, latent_dim)))
    mod_dirs = basis[:, :n_mod].T
    ana_dirs = basis[:, n_mod:n_mod + n_ana].T

    cells = vocab.cells()
    means = np.array([separation * (mod_dirs[vocab.modalities.index(m)]
                                    + ana_dirs[vocab.anatomies.index(a)]) for m, a in cells])
    gaps = np.linalg.norm(means[:, None] - means[None, :], axis=-1)
    assert np.all(gaps[~np.eye(len(cells), dtype=bool)] > 0)

    # per-direction noise std: noise_sigma on the metadata directions,
    # noise_sigma * nuisance_gain on the remaining ones
    scales = np.full(latent_dim, noise_sigma * nuisance_gain)
    scales[: n_mod + n_ana] = noise_sigma

    def noise(count):
        return (rng.standard_normal((count, latent_dim)) * scales) @ basis.T

    feats, labels, class_ids = [], [], []
    for ci, (m, a) in enumerate(cells):
        feats.append(means[ci] + noise(n_per_cell))
        lab = encode(m, a, vocab)
        labels.extend([lab] * n_per_cell)
        class_ids.extend([ci] * n_per_cell)
    corpus = PretrainDataset(np.vstack(feats), labels, vocab, np.array(class_ids))

    ci = cells.index(task_cell)
    ai = vocab.anatomies.index(task_cell[1])
    if n_ana > 1:
        toward = (ai + 1) % n_ana  # next anatomy, same modality
        direction = ana_dirs[toward] - ana_dirs[ai]
    else:
        toward = (vocab.modalities.index(task_cell[0]) + 1) % n_mod
        direction = mod_dirs[toward] - mod_dirs[vocab.modalities.index(task_cell[0])]
    direction = direction / np.linalg.norm(direction)
    severity = rng.standard_normal(n_task)
    x = (means[ci] + severity_scale * severity[:, None] * direction
         + noise(n_task))
    threshold = norm.ppf(1.0 - positive_rate)
    y = (severity > threshold).astype(np.int64)
    if y.min() == y.max():
        raise BadConfig("downstream task drew a single class; increase n_task")
    name = f"{task_cell[0]}-{task_cell[1]}"
    return SyntheticCorpus(corpus, {name: LabeledDataset(x, y)}, means, task_cell)
