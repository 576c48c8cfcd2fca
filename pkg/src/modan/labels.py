"""Multi-hot metadata labels built from (modality, anatomy) pairs."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyLabel, UnknownName, ValidationError


@dataclass(frozen=True)
class MetadataVocabulary:
    modalities: tuple
    anatomies: tuple

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "anatomies", tuple(self.anatomies))
        for group, names in (("modalities", self.modalities), ("anatomies", self.anatomies)):
            if not names:
                raise ValidationError(f"vocabulary {group} must be non-empty")
            if len(set(names)) != len(names):
                raise ValidationError(f"duplicate names in vocabulary {group}")

    @property
    def k(self):
        return len(self.modalities) + len(self.anatomies)

    def cells(self):
        """All (modality, anatomy) pairs, modality-major."""
        return [(m, a) for m in self.modalities for a in self.anatomies]


@dataclass(frozen=True)
class MultiHotLabel:
    """Binary label vector; modality block first, anatomy block second."""

    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValidationError("multi-hot label must be binary")
        if not any(bits):
            raise EmptyLabel("multi-hot label has no active bits")
        object.__setattr__(self, "bits", bits)

    @property
    def k(self):
        return len(self.bits)

    def as_array(self):
        return np.array(self.bits, dtype=np.int8)


def encode(modality, anatomy, vocab):
    try:
        mi = vocab.modalities.index(modality)
    except ValueError:
        raise UnknownName(f"modality {modality!r} not in vocabulary") from None
    try:
        ai = vocab.anatomies.index(anatomy)
    except ValueError:
        raise UnknownName(f"anatomy {anatomy!r} not in vocabulary") from None
    bits = [0] * vocab.k
    bits[mi] = 1
    bits[len(vocab.modalities) + ai] = 1
    return MultiHotLabel(tuple(bits))


def active_set(label):
    return frozenset(i for i, b in enumerate(label.bits) if b)


def jaccard_fraction(a, b):
    """Exact Jaccard similarity as a ``Fraction``."""
    sa, sb = active_set(a), active_set(b)
    if not sa or not sb:
        raise EmptyLabel("jaccard is undefined for an empty label")
    return Fraction(len(sa & sb), len(sa | sb))


def jaccard(a, b):
    """|S(a) & S(b)| / |S(a) | S(b)| over the active index sets."""
    f = jaccard_fraction(a, b)
    return f.numerator / f.denominator
