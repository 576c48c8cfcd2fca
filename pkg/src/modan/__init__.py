"""Multi-label supervised contrastive pretraining on modality/anatomy metadata."""

from ._backend import BACKEND
from .labels import MetadataVocabulary, MultiHotLabel, active_set, encode, jaccard
from .losses import (
    EmbeddingBatch,
    LossConfig,
    LossResult,
    cross_entropy,
    info_nce,
    jaccard_weights,
    mulsupcon,
    positive_mask,
    similarity_matrix,
    supcon,
)

__version__ = "0.1.0"
