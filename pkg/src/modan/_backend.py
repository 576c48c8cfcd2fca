"""Kernel backend selection.

The compiled extension is preferred. Set ``MODAN_PURE_PYTHON=1`` to force
the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("MODAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        kernels = _ckernels


def contrastive_terms(logits, weights, mask):
    return kernels.contrastive_terms(
        np.ascontiguousarray(logits, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(mask, dtype=np.uint8),
    )


def signed_rank_counts(ranks2):
    return kernels.signed_rank_counts(np.ascontiguousarray(ranks2, dtype=np.int64))
