"""Dataset manifests.

A manifest is tab-separated text with a small header block::

    #modan-manifest	1
    #modalities	CT	MR	US
    #anatomies	knee	breast	thyroid
    id	modality	anatomy	class_id	task_label	features
    s0	CT	knee	0	-	0.12,-1.5,0.33
    s1	US	thyroid	-	1	@blobs/s1.f64

Optional fields are written as ``-``. Features are either inline
comma-separated floats (``repr`` precision, so they round-trip exactly) or
``@path`` pointing to a blob relative to the manifest: a little-endian
``uint64`` element count followed by that many little-endian float64 values.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset, PretrainDataset
from .errors import DimensionMismatch, DuplicateId, MissingLabels, ParseError, UnknownName
from .labels import MetadataVocabulary, encode

MAGIC = "#modan-manifest"
VERSION = "1"
COLUMNS = ("id", "modality", "anatomy", "class_id", "task_label", "features")


@dataclass(eq=False)
class ManifestRow:
    id: str
    modality: str
    anatomy: str
    features: np.ndarray
    class_id: int = None
    task_label: int = None
    blob: str = None

    def __eq__(self, other):
        if not isinstance(other, ManifestRow):
            return NotImplemented
        return (
            (self.id, self.modality, self.anatomy, self.class_id, self.task_label, self.blob)
            == (other.id, other.modality, other.anatomy, other.class_id, other.task_label, other.blob)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )


@dataclass(eq=False)
class Manifest:
    vocab: MetadataVocabulary
    rows: list

    def __eq__(self, other):
        if not isinstance(other, Manifest):
            return NotImplemented
        return self.vocab == other.vocab and self.rows == other.rows

    def __len__(self):
        return len(self.rows)

    @property
    def dim(self):
        return self.rows[0].features.shape[0] if self.rows else 0

    def features(self):
        return np.vstack([r.features for r in self.rows])

    def pretrain_dataset(self):
        labels = [encode(r.modality, r.anatomy, self.vocab) for r in self.rows]
        class_ids = None
        if self.rows and all(r.class_id is not None for r in self.rows):
            class_ids = np.array([r.class_id for r in self.rows], dtype=np.int64)
        return PretrainDataset(self.features(), labels, self.vocab, class_ids)

    def task_dataset(self):
        rows = [r for r in self.rows if r.task_label is not None]
        if not rows:
            raise MissingLabels("manifest has no task_label values")
        return LabeledDataset(np.vstack([r.features for r in rows]),
                              np.array([r.task_label for r in rows]))


def read_blob(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise ParseError(f"{path}: truncated feature blob")
    (count,) = struct.unpack_from("<Q", data, 0)
    if len(data) != 8 + 8 * count:
        raise ParseError(f"{path}: blob length does not match its prefix")
    return np.frombuffer(data, dtype="<f8", offset=8).astype(np.float64)


def write_blob(path, values):
    values = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", values.size))
        fh.write(values.tobytes())


def _optional_int(text, field, lineno):
    if text == "-":
        return None
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{field} must be an integer or '-', got {text!r}", lineno) from None


def load_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    header = {}
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.startswith("#"):
            break
        parts = line.split("\t")
        header[parts[0]] = parts[1:]
    else:
        lineno += 1
    if header.get(MAGIC) != [VERSION]:
        raise ParseError(f"missing or unsupported '{MAGIC}' header", 1)
    for key in ("#modalities", "#anatomies"):
        if key not in header:
            raise ParseError(f"missing header line {key}", 1)
    vocab = MetadataVocabulary(header["#modalities"], header["#anatomies"])

    body = lines[lineno - 1:]
    if not body or tuple(body[0].split("\t")) != COLUMNS:
        raise ParseError("expected column line: " + "\t".join(COLUMNS), lineno)

    rows, seen, dim = [], set(), None
    for offset, line in enumerate(body[1:], start=1):
        ln = lineno + offset
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(parts)}", ln)
        rid, modality, anatomy, cls, task, feats = parts
        if rid in seen:
            raise DuplicateId(f"line {ln}: duplicate id {rid!r}")
        seen.add(rid)
        if modality not in vocab.modalities:
            raise UnknownName(f"line {ln}: modality {modality!r} not declared in header")
        if anatomy not in vocab.anatomies:
            raise UnknownName(f"line {ln}: anatomy {anatomy!r} not declared in header")
        task_label = _optional_int(task, "task_label", ln)
        if task_label not in (None, 0, 1):
            raise ParseError(f"task_label must be 0, 1 or '-', got {task!r}", ln)
        blob = None
        if feats.startswith("@"):
            blob = feats[1:]
            values = read_blob(os.path.join(base, blob))
        else:
            try:
                values = np.array([float(v) for v in feats.split(",")], dtype=np.float64)
            except ValueError:
                raise ParseError("features must be comma-separated numbers", ln) from None
        if dim is None:
            dim = values.shape[0]
        elif values.shape[0] != dim:
            raise DimensionMismatch(f"line {ln}: feature dimension {values.shape[0]} != {dim}")
        rows.append(ManifestRow(rid, modality, anatomy, values,
                                _optional_int(cls, "class_id", ln), task_label, blob))
    return Manifest(vocab, rows)


def save_manifest(manifest, path):
    """Write ``manifest``; rows with ``blob`` set get their blob (re)written."""
    base = os.path.dirname(os.path.abspath(path))

    def opt(v):
        return "-" if v is None else str(v)

    out = [
        f"{MAGIC}\t{VERSION}",
        "#modalities\t" + "\t".join(manifest.vocab.modalities),
        "#anatomies\t" + "\t".join(manifest.vocab.anatomies),
        "\t".join(COLUMNS),
    ]
    for r in manifest.rows:
        if r.blob is not None:
            blob_path = os.path.join(base, r.blob)
            os.makedirs(os.path.dirname(blob_path), exist_ok=True)
            write_blob(blob_path, r.features)
            feats = "@" + r.blob
        else:
            feats = ",".join(repr(float(v)) for v in r.features)
        out.append("\t".join([r.id, r.modality, r.anatomy, opt(r.class_id),
                              opt(r.task_label), feats]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def manifest_from_corpus(corpus, prefix="s"):
    """Manifest rows for a :class:`PretrainDataset` (metadata and class ids)."""
    vocab = corpus.vocab
    rows = []
    nm = len(vocab.modalities)
    for i, (x, lab) in enumerate(zip(corpus.features, corpus.labels)):
        mi = lab.bits.index(1)
        ai = lab.bits.index(1, nm) - nm
        cls = None if corpus.class_ids is None else int(corpus.class_ids[i])
        rows.append(ManifestRow(f"{prefix}{i}", vocab.modalities[mi], vocab.anatomies[ai],
                                x.copy(), cls))
    return Manifest(vocab, rows)


def manifest_from_task(task, vocab, modality, anatomy, prefix="t"):
    rows = [ManifestRow(f"{prefix}{i}", modality, anatomy, x.copy(), None, int(y))
            for i, (x, y) in enumerate(zip(task.features, task.labels))]
    return Manifest(vocab, rows)
