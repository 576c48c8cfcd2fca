from dataclasses import dataclass

import numpy as np

from .errors import EmptyCorpus, LabelCardinality, ShapeMismatch
from .labels import MetadataVocabulary, MultiHotLabel


@dataclass
class PretrainDataset:
    """Feature vectors with their metadata labels.

    ``labels`` holds one :class:`MultiHotLabel` per row; ``class_ids`` is the
    optional single-label class (needed by SupCon and cross-entropy).
    """

    features: np.ndarray
    labels: list
    vocab: MetadataVocabulary
    class_ids: np.ndarray = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise EmptyCorpus("pretraining corpus is empty")
        if self.labels is not None and len(self.labels) != len(self.features):
            raise ShapeMismatch("one metadata label per sample required")
        if self.class_ids is not None:
            self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
            if self.class_ids.shape != (len(self.features),):
                raise ShapeMismatch("one class id per sample required")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def label_bits(self):
        return np.array([lab.bits for lab in self.labels], dtype=np.int64)


@dataclass
class LabeledDataset:
    """Binary downstream task."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise EmptyCorpus("task dataset is empty")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeMismatch("one task label per sample required")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise LabelCardinality("task labels must be binary (0/1)")
        self.labels = self.labels.astype(np.int64)

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx):
        return LabeledDataset(self.features[idx], self.labels[idx])


def labels_from_bits(bits):
    return [MultiHotLabel(tuple(int(b) for b in row)) for row in np.asarray(bits)]
