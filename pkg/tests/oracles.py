"""Independent reference implementations used only by the tests.

Everything here is written with plain Python loops and ``math`` so that it
shares no code path with the vectorized / compiled implementations.
"""

import itertools
import math


def _dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def _log_ratio(z, a, p, T):
    """log( exp(z_a.z_p/T) / sum_{k != a} exp(z_a.z_k/T) ), no stabilization tricks."""
    denom = 0.0
    for k in range(len(z)):
        if k != a:
            denom += math.exp(_dot(z[a], z[k]) / T)
    return _dot(z[a], z[p]) / T - math.log(denom)


def info_nce(z, image_of, T):
    total = 0.0
    for a in range(len(z)):
        partner = [p for p in range(len(z)) if p != a and image_of[p] == image_of[a]]
        assert len(partner) == 1
        total += -_log_ratio(z, a, partner[0], T)
    return total / len(z)


def supcon(z, image_of, classes, T):
    terms = []
    for a in range(len(z)):
        pos = [p for p in range(len(z)) if p != a and classes[image_of[p]] == classes[image_of[a]]]
        if not pos:
            continue
        terms.append(-sum(_log_ratio(z, a, p, T) for p in pos) / len(pos))
    return sum(terms) / len(terms) if terms else 0.0


def jaccard(a, b):
    sa = {i for i, v in enumerate(a) if v}
    sb = {i for i, v in enumerate(b) if v}
    return len(sa & sb) / len(sa | sb)


def mulsupcon(z, image_of, labels, T, tau):
    terms = []
    for a in range(len(z)):
        pos = []
        for p in range(len(z)):
            if p == a:
                continue
            # exact rational comparison of the Jaccard ratio against tau
            la, lp = labels[image_of[a]], labels[image_of[p]]
            inter = sum(1 for x, y in zip(la, lp) if x and y)
            union = sum(1 for x, y in zip(la, lp) if x or y)
            from fractions import Fraction

            if Fraction(inter, union) >= Fraction(tau):
                pos.append((p, inter / union))
        if not pos:
            continue
        terms.append(-sum(w * _log_ratio(z, a, p, T) for p, w in pos) / len(pos))
    return sum(terms) / len(terms) if terms else 0.0


def cross_entropy(logits, target):
    m = max(logits)
    lse = m + math.log(sum(math.exp(v - m) for v in logits))
    return lse - logits[target]


def auc_pairs(scores, labels):
    wins = 0.0
    pairs = 0
    for sp, lp in zip(scores, labels):
        if lp != 1:
            continue
        for sn, ln in zip(scores, labels):
            if ln != 0:
                continue
            pairs += 1
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / pairs


def wilcoxon_exact_p(ranks, w_stat):
    """Two-sided exact p by brute enumeration of all sign vectors."""
    n = len(ranks)
    total = sum(ranks)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        w_plus = sum(r for r, s in zip(ranks, signs) if s)
        if min(w_plus, total - w_plus) <= w_stat + 1e-9:
            hits += 1
    return min(1.0, hits / 2**n)


def central_difference(f, x, h=1e-4):
    """Gradient of scalar ``f`` at numpy array ``x`` by central differences."""
    import numpy as np

    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g
