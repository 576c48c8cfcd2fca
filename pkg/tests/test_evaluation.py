import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from modan.datasets import LabeledDataset
from modan.errors import BadConfig, DegenerateData, SingleClass, TooFewSamples
from modan.evaluation import (
    auc,
    cap_per_class,
    generate_hierarchical_corpus,
    kfold_split,
    project_2d,
    repeated_cv,
    signed_rank_null,
    wilcoxon_signed_rank,
)
from modan.labels import MetadataVocabulary

VOCAB = MetadataVocabulary(["CT", "MR", "US"], ["knee", "breast", "thyroid"])


# -- folds -----------------------------------------------------------------------


def test_kfold_balanced_ten():
    labels = [0, 1] * 5
    part = kfold_split(labels, 5, seed=3)
    for f in range(5):
        assert sorted(np.asarray(labels)[part.test_indices(f)]) == [0, 1]


def test_kfold_deterministic():
    labels = np.arange(37) % 3 == 0
    a, b = kfold_split(labels, 5, 9), kfold_split(labels, 5, 9)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert a.hashes() == b.hashes()
    assert kfold_split(labels, 5, 10).hashes() != a.hashes()


def test_kfold_thyroid_shape():
    labels = np.array([1] * 61 + [0] * 288)
    part = kfold_split(labels, 5, seed=0)
    pos = [int(labels[part.test_indices(f)].sum()) for f in range(5)]
    assert set(pos) <= {12, 13} and sum(pos) == 61
    sizes = np.bincount(part.assignment, minlength=5)
    assert sizes.max() - sizes.min() <= 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=5, max_size=80), st.integers(2, 5), st.integers(0, 999))
def test_kfold_invariants(labels, k, seed):
    labels = np.array(labels)
    part = kfold_split(labels, k, seed)
    assert part.assignment.min() >= 0 and part.assignment.max() < k
    sizes = np.bincount(part.assignment, minlength=k)
    assert sizes.max() - sizes.min() <= 1
    for cls in (0, 1):
        per = np.bincount(part.assignment[labels == cls], minlength=k)
        assert per.max() - per.min() <= 1


def test_kfold_errors():
    with pytest.raises(TooFewSamples):
        kfold_split([0, 1, 0], 5)
    with pytest.raises(BadConfig):
        kfold_split([0, 1, 0], 1)


# -- AUC ---------------------------------------------------------------------------


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.3] * 6, [0, 1, 0, 1, 0, 1]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(SingleClass):
        auc([0.1, 0.2], [1, 1])


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        labels = np.arange(n) % 2
        rng.shuffle(labels)
        scores = rng.integers(0, 6, n) / 5.0  # plenty of ties
        assert auc(scores, labels) == oracles.auc_pairs(scores.tolist(), labels.tolist())


def test_auc_complement_and_monotone_invariance():
    rng = np.random.default_rng(1)
    s = rng.standard_normal(30)
    y = np.arange(30) % 2
    assert auc(s, y) + auc(-s, y) == pytest.approx(1.0, abs=1e-15)
    assert auc(np.exp(3 * s) + 7, y) == auc(s, y)


# -- Wilcoxon ----------------------------------------------------------------------


def test_wilcoxon_all_positive():
    r = wilcoxon_signed_rank(np.arange(10) + 1.0, np.zeros(10))
    assert r.p_value == 0.001953125 and r.exact and r.n_effective == 10
    assert r.w_plus == 55 and r.w_minus == 0


def test_wilcoxon_degenerate():
    x = np.linspace(0, 1, 10)
    r = wilcoxon_signed_rank(x, x.copy())
    assert r.degenerate and r.p_value == 1.0 and r.n_effective == 0


def test_wilcoxon_symmetric_differences():
    d = np.array([1, -1, 2, -2, 3, -3, 4, -4, 5, -5], dtype=float)
    r = wilcoxon_signed_rank(d, np.zeros(10))
    assert r.w_plus == r.w_minus and r.p_value == 1.0


def test_wilcoxon_zero_differences_dropped():
    r = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 1.0])
    assert r.n_effective == 3
    assert r.w_plus + r.w_minus == 3 * 4 / 2


def test_critical_value_n10():
    ranks = list(range(1, 11))
    for w in range(0, 28):
        p = oracles.wilcoxon_exact_p(ranks, w)
        assert (w <= 8) == (p <= 0.05)
    # and the implementation agrees with enumeration at every W
    counts = signed_rank_null(ranks)
    assert counts.sum() == 2**10
    for w in range(0, 28):
        tail = counts[: 2 * w + 1].sum()
        assert min(1.0, 2 * tail / 1024) == pytest.approx(oracles.wilcoxon_exact_p(ranks, w), abs=1e-15)


def test_wilcoxon_matches_enumeration_with_ties():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(1, 12))
        d = rng.integers(-3, 4, n).astype(float)
        d[d == 0] = 1.0
        r = wilcoxon_signed_rank(d, np.zeros(n))
        from scipy.stats import rankdata

        ranks = rankdata(np.abs(d)).tolist()
        assert r.p_value == pytest.approx(oracles.wilcoxon_exact_p(ranks, r.statistic), abs=1e-12)


def test_wilcoxon_affine_invariance():
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal(10), rng.standard_normal(10)
    base = wilcoxon_signed_rank(x, y).p_value
    assert wilcoxon_signed_rank(3 * x + 1, 3 * y + 1).p_value == base


def test_wilcoxon_large_n_uses_normal_approximation():
    from scipy.stats import wilcoxon

    rng = np.random.default_rng(6)
    x, y = rng.standard_normal(40) + 0.3, rng.standard_normal(40)
    r = wilcoxon_signed_rank(x, y)
    assert not r.exact
    ref = wilcoxon(x, y, method="approx", correction=False).pvalue
    assert r.p_value == pytest.approx(ref, rel=1e-10)


def test_wilcoxon_exact_agrees_with_scipy_without_ties():
    from scipy.stats import wilcoxon

    rng = np.random.default_rng(7)
    for n in (5, 10, 18):
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        assert wilcoxon_signed_rank(x, y).p_value == pytest.approx(
            wilcoxon(x, y, method="exact").pvalue, rel=1e-12)


# -- repeated CV --------------------------------------------------------------------


def _task(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.standard_normal((n, 3)), np.arange(n) % 2)


def test_repeated_cv_constant_and_oracle():
    task = _task()
    part = kfold_split(task.labels, 5, 1)
    const = repeated_cv(task, lambda tr, xt, s: np.zeros(len(xt)), part, method="const")
    assert const.summaries == [0.5] * 10
    assert all(a == 0.5 for row in const.fold_aucs for a in row)
    label_of = {tuple(x): y for x, y in zip(task.features, task.labels)}
    oracle = repeated_cv(task, lambda tr, xt, s: np.array([label_of[tuple(x)] for x in xt]), part)
    assert oracle.summaries == [1.0] * 10 and oracle.mean_auc == 1.0
    assert const.fold_hashes == oracle.fold_hashes


def test_repeated_cv_seeds_and_fixed_partition():
    task = _task()
    part = kfold_split(task.labels, 5, 2)
    seen = []

    def runner(train, xt, seed):
        seen.append((seed, len(train)))
        return np.random.default_rng(seed).random(len(xt))

    rep = repeated_cv(task, runner, part, repeats=3, base_seed=100)
    assert [s for s, _ in seen] == [100] * 5 + [101] * 5 + [102] * 5
    assert all(n == 40 for _, n in seen)
    assert len(rep.summaries) == 3 and len(rep.fold_aucs[0]) == 5
    for s, row in zip(rep.summaries, rep.fold_aucs):
        assert s == pytest.approx(np.mean(row), abs=0)
    again = repeated_cv(task, runner, part, repeats=3, base_seed=100)
    assert again.summaries == rep.summaries


# -- generator --------------------------------------------------------------------------


def test_generator_zero_noise():
    synth = generate_hierarchical_corpus(5, VOCAB, 16, 0.0, seed=1)
    ids = synth.pretrain.class_ids
    for c in range(9):
        np.testing.assert_array_equal(synth.pretrain.features[ids == c],
                                      np.tile(synth.cell_means[c], (5, 1)))


def test_generator_means_distinct_and_deterministic():
    a = generate_hierarchical_corpus(10, VOCAB, 16, 0.3, seed=2)
    b = generate_hierarchical_corpus(10, VOCAB, 16, 0.3, seed=2)
    assert a.pretrain.features.tobytes() == b.pretrain.features.tobytes()
    gaps = np.linalg.norm(a.cell_means[:, None] - a.cell_means[None], axis=-1)
    assert gaps[~np.eye(9, dtype=bool)].min() > 0
    assert a.task_cell == ("US", "thyroid") and list(a.tasks) == ["US-thyroid"]


def test_generator_nearest_centroid():
    synth = generate_hierarchical_corpus(50, VOCAB, 16, 0.3, seed=11)
    x, c = synth.pretrain.features, synth.pretrain.class_ids
    centroids = np.array([x[c == k].mean(axis=0) for k in range(9)])
    pred = np.argmin(((x[:, None] - centroids[None]) ** 2).sum(-1), axis=1)
    assert (pred == c).mean() > 0.9


def test_generator_task_is_informative():
    synth = generate_hierarchical_corpus(5, VOCAB, 16, 0.0, seed=3, n_task=400)
    task = synth.tasks["US-thyroid"]
    assert 0.2 < task.labels.mean() < 0.4
    # without noise the severity direction orders the samples perfectly
    direction = task.features - synth.cell_means[-1]
    score = direction @ np.linalg.svd(direction, full_matrices=False)[2][0]
    assert max(auc(score, task.labels), auc(-score, task.labels)) == 1.0


def test_generator_errors():
    with pytest.raises(BadConfig):
        generate_hierarchical_corpus(5, MetadataVocabulary(["CT"], ["knee"]), 16, 0.3)
    with pytest.raises(BadConfig):
        generate_hierarchical_corpus(5, VOCAB, 5, 0.3)
    with pytest.raises(BadConfig):
        generate_hierarchical_corpus(5, VOCAB, 16, 0.3, nuisance_gain=0.0)


# -- capping --------------------------------------------------------------------------


def test_cap_per_class():
    rows = [{"class_id": 0, "i": i} for i in range(40)] + [{"class_id": 1, "i": i} for i in range(250)]
    out = cap_per_class(rows, 100, seed=4)
    assert sum(r["class_id"] == 0 for r in out) == 40
    assert sum(r["class_id"] == 1 for r in out) == 100
    assert out == cap_per_class(rows, 100, seed=4)
    assert out != cap_per_class(rows, 100, seed=5)
    positions = [rows.index(r) for r in out]
    assert positions == sorted(positions)


# -- PCA -------------------------------------------------------------------------------


def _pdist(x):
    return np.linalg.norm(x[:, None] - x[None], axis=-1)


def test_pca_on_2d_preserves_distances():
    x = np.random.default_rng(0).standard_normal((30, 2)) @ [[2.0, 0.3], [0.0, 0.5]]
    np.testing.assert_allclose(_pdist(project_2d(x)), _pdist(x), atol=1e-9)


def test_pca_rank_one():
    t = np.linspace(-1, 1, 20)
    x = np.outer(t, [1.0, 2.0, -1.0, 0.5, 3.0]) + 4.0
    y = project_2d(x)
    assert y[:, 1].var() < 1e-20
    assert y[:, 0].var() > 0


def test_pca_spectrum():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((2000, 4)) * np.sqrt([4.0, 1.0, 0.1, 0.01])
    y = project_2d(x)
    v = y.var(axis=0)
    assert abs(v[0] / 4.0 - 1) < 0.15 and v[0] >= v[1]


def test_pca_degenerate():
    with pytest.raises(DegenerateData):
        project_2d(np.ones((5, 3)))


# -- signed-rank null distribution ------------------------------------------------------


def test_signed_rank_counts_small():
    # ranks 1,2,3 -> W+ in {0,1,2,3,3,4,5,6}
    counts = signed_rank_null([1, 2, 3])
    brute = np.zeros(13, dtype=np.int64)
    for signs in itertools.product((0, 1), repeat=3):
        brute[2 * sum(r for r, s in zip((1, 2, 3), signs) if s)] += 1
    np.testing.assert_array_equal(counts[: len(brute)], brute)
