"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per (kernel, size) with the best wall time of each backend
and the speedup. Outputs are cross-checked before timing.
"""

import argparse
import timeit

import numpy as np

from modan import _pykernels

try:
    from modan import _ckernels
except ImportError:
    _ckernels = None


def contrastive_case(m, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, 32))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    logits = z @ z.T / 0.07
    weights = rng.integers(0, 4, (m, m)) / 3.0
    mask = (weights >= 0.3).astype(np.uint8)
    return logits, weights, mask


def rank_case(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.sort(2 * rng.integers(1, n + 1, n)).astype(np.int64)


def bench(label, fn_c, fn_py, args, repeat):
    py = min(timeit.repeat(lambda: fn_py(*args), number=1, repeat=repeat))
    if fn_c is None:
        print(f"{label:28s} python {py * 1e3:9.3f} ms   (extension not built)")
        return
    c = min(timeit.repeat(lambda: fn_c(*args), number=1, repeat=repeat))
    print(f"{label:28s} python {py * 1e3:9.3f} ms   cython {c * 1e3:9.3f} ms   x{py / c:6.2f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    for m in (64, 256, 512):
        case = contrastive_case(m)
        if _ckernels is not None:
            ref, got = _pykernels.contrastive_terms(*case), _ckernels.contrastive_terms(*case)
            for a, b in zip(ref, got):
                np.testing.assert_allclose(np.asarray(b), a, rtol=1e-10, atol=1e-12)
        bench(f"contrastive_terms M={m}", _ckernels and _ckernels.contrastive_terms,
              _pykernels.contrastive_terms, case, args.repeat)

    for n in (10, 16, 20):
        case = (rank_case(n),)
        if _ckernels is not None:
            np.testing.assert_array_equal(np.asarray(_ckernels.signed_rank_counts(*case)),
                                          _pykernels.signed_rank_counts(*case))
        bench(f"signed_rank_counts n={n}", _ckernels and _ckernels.signed_rank_counts,
              _pykernels.signed_rank_counts, case, args.repeat)


if __name__ == "__main__":
    main()
