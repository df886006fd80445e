"""Dataset model, EMBX embedding files, and synthetic data generation.

An EMBX file holds per-sample embedding vectors for one or more modalities
plus multi-hot labels and sample ids. The binary layout (all little-endian):

    magic "EMBX" (4 bytes)
    version        u32  (currently 1)
    sample_count   u64
    modality_count u32
    dim            u32  (one per modality)
    category_count u32
    features       modality-major, row-major float32
    labels         sample_count * category_count bytes, each 0 or 1
    ids            sample_count * u64

Features are stored as float32 for storage economy; everything in memory is
float64. Sets whose feature values are exactly float32-representable
round-trip bit-exactly through write/read.

A dataset split is three EMBX files (train / retrieval / query) named by a
small JSON manifest, mirroring the fixed-split convention of retrieval
benchmarks.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    NonFiniteError,
    SchemaError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)

EMBX_MAGIC = b"EMBX"
EMBX_VERSION = 1

DEFAULT_MODALITY_DIMS = (512, 512)

# per-class split fractions: train / retrieval / query
SPLIT_FRACTIONS = (0.5, 0.3, 0.2)


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable collection of per-sample, per-modality embedding vectors.

    features: one (sample_count, dim) float64 matrix per modality.
    labels:   (sample_count, category_count) uint8 multi-hot matrix.
    ids:      (sample_count,) uint64 unique sample identifiers.

    A set with category_count == 0 is explicitly unlabeled; otherwise every
    label row must have at least one set bit.
    """

    features: tuple[np.ndarray, ...]
    labels: np.ndarray
    ids: np.ndarray

    @property
    def sample_count(self) -> int:
        return int(self.labels.shape[0])

    @property
    def modality_dims(self) -> tuple[int, ...]:
        return tuple(int(f.shape[1]) for f in self.features)

    @property
    def category_count(self) -> int:
        return int(self.labels.shape[1])

    @property
    def unlabeled(self) -> bool:
        return self.category_count == 0

    def validate(self) -> None:
        """Raise ValidationError (or a subclass) on any invariant violation."""
        if not self.features:
            raise ValidationError("embedding set needs at least one modality")
        for m, feat in enumerate(self.features):
            if feat.ndim != 2:
                raise DimensionMismatchError(f"modality {m}: expected 2-D matrix")
            if feat.shape[0] != self.sample_count:
                raise DimensionMismatchError(
                    f"modality {m}: {feat.shape[0]} rows, expected {self.sample_count}"
                )
            if feat.shape[1] < 1:
                raise ValidationError(f"modality {m}: dimension must be positive")
            if not np.all(np.isfinite(feat)):
                raise NonFiniteError(f"modality {m}: non-finite feature value")
        if self.labels.ndim != 2:
            raise DimensionMismatchError("labels must be a 2-D matrix")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValidationError("labels must be 0/1 multi-hot")
        if not self.unlabeled and self.sample_count:
            if not self.labels.any(axis=1).all():
                bad = int(np.flatnonzero(~self.labels.any(axis=1))[0])
                raise ValidationError(
                    f"sample id {int(self.ids[bad])} has no label bit set "
                    "(only a 0-category set may be unlabeled)"
                )
        if self.ids.shape != (self.sample_count,):
            raise DimensionMismatchError("ids must be one per sample")
        if len(np.unique(self.ids)) != self.sample_count:
            raise ValidationError("sample ids must be unique")


@dataclass(frozen=True)
class DatasetSplit:
    """Train / retrieval / query roles over a common label space."""

    train: EmbeddingSet
    retrieval: EmbeddingSet
    query: EmbeddingSet
    category_count: int

    def validate(self) -> None:
        for name, part in (("train", self.train), ("retrieval", self.retrieval),
                           ("query", self.query)):
            part.validate()
            if part.category_count != self.category_count:
                raise ValidationError(
                    f"{name} set has {part.category_count} categories, "
                    f"split declares {self.category_count}"
                )
        if self.category_count < 1:
            raise ValidationError("split category_count must be positive")
        overlap = np.intersect1d(self.query.ids, self.retrieval.ids)
        if overlap.size:
            raise ValidationError(
                f"query and retrieval ids overlap (e.g. id {int(overlap[0])})"
            )


def make_embedding_set(
    features: list[np.ndarray] | tuple[np.ndarray, ...],
    labels: np.ndarray,
    ids: np.ndarray,
) -> EmbeddingSet:
    """Build a validated EmbeddingSet, normalizing dtypes."""
    out = EmbeddingSet(
        features=tuple(np.ascontiguousarray(f, dtype=np.float64) for f in features),
        labels=np.ascontiguousarray(labels, dtype=np.uint8),
        ids=np.ascontiguousarray(ids, dtype=np.uint64),
    )
    out.validate()
    return out


def concat_modalities(emb_set: EmbeddingSet, index: int) -> np.ndarray:
    """Concatenate one sample's modality vectors in declared order."""
    if not 0 <= index < emb_set.sample_count:
        raise IndexError(f"sample index {index} out of range [0, {emb_set.sample_count})")
    return np.concatenate([f[index] for f in emb_set.features])


def stack_concat(emb_set: EmbeddingSet, normalize: bool = False) -> np.ndarray:
    """All samples concatenated into a (sample_count, sum(dims)) matrix.

    With normalize=True each modality vector is L2-normalized before
    concatenation (zero vectors are left untouched).
    """
    parts = []
    for feat in emb_set.features:
        if normalize:
            norms = np.linalg.norm(feat, axis=1, keepdims=True)
            feat = feat / np.where(norms > 0.0, norms, 1.0)
        parts.append(feat)
    return np.concatenate(parts, axis=1) if parts else np.empty((0, 0))


# ---------------------------------------------------------------------------
# EMBX file format
# ---------------------------------------------------------------------------

def write_embedding_file(emb_set: EmbeddingSet, path: str | Path) -> None:
    """Write the set to `path` in the EMBX format (bit-exact layout)."""
    emb_set.validate()
    count = emb_set.sample_count
    with open(path, "wb") as fh:
        fh.write(EMBX_MAGIC)
        fh.write(struct.pack("<IQI", EMBX_VERSION, count, len(emb_set.features)))
        for dim in emb_set.modality_dims:
            fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<I", emb_set.category_count))
        for feat in emb_set.features:
            fh.write(np.ascontiguousarray(feat, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(emb_set.labels, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(emb_set.ids, dtype="<u8").tobytes())


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    if offset + size > len(buf):
        raise TruncatedFileError(
            f"file ends inside {what}: need {size} bytes at offset {offset}, "
            f"have {len(buf) - offset}"
        )
    return buf[offset:offset + size], offset + size


def read_embedding_file(path: str | Path) -> EmbeddingSet:
    """Read and validate an EMBX file written by write_embedding_file."""
    buf = Path(path).read_bytes()
    raw, off = _take(buf, 0, 4, "magic")
    if raw != EMBX_MAGIC:
        raise BadMagicError(f"{path}: expected magic {EMBX_MAGIC!r}, found {raw!r}")
    raw, off = _take(buf, off, 16, "header")
    version, count, modality_count = struct.unpack("<IQI", raw)
    if version != EMBX_VERSION:
        raise VersionError(f"{path}: unsupported EMBX version {version}")
    if modality_count < 1:
        raise SchemaError(f"{path}: modality_count must be at least 1")
    raw, off = _take(buf, off, 4 * modality_count, "modality dims")
    dims = struct.unpack(f"<{modality_count}I", raw)
    if any(d < 1 for d in dims):
        raise SchemaError(f"{path}: modality dims must be positive, got {dims}")
    raw, off = _take(buf, off, 4, "category count")
    (category_count,) = struct.unpack("<I", raw)

    features = []
    for dim in dims:
        raw, off = _take(buf, off, 4 * count * dim, "feature payload")
        mat = np.frombuffer(raw, dtype="<f4").reshape(count, dim).astype(np.float64)
        features.append(mat)
    raw, off = _take(buf, off, count * category_count, "label payload")
    labels = np.frombuffer(raw, dtype=np.uint8).reshape(count, category_count).copy()
    raw, off = _take(buf, off, 8 * count, "id payload")
    ids = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
    if off != len(buf):
        raise SchemaError(f"{path}: {len(buf) - off} trailing bytes after payload")

    out = EmbeddingSet(features=tuple(features), labels=labels, ids=ids)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Split manifests
# ---------------------------------------------------------------------------

def write_split_manifest(
    path: str | Path,
    train: str,
    retrieval: str,
    query: str,
    category_count: int,
) -> None:
    """Write a JSON manifest naming the three EMBX files of a split.

    File names are stored as given (conventionally relative to the manifest).
    """
    doc = {
        "train": train,
        "retrieval": retrieval,
        "query": query,
        "category_count": category_count,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_split(manifest_path: str | Path) -> DatasetSplit:
    """Load the three EMBX files named by a split manifest and validate."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    base = manifest_path.parent

    def _resolve(name: str) -> Path:
        p = Path(doc[name])
        return p if p.is_absolute() else base / p

    split = DatasetSplit(
        train=read_embedding_file(_resolve("train")),
        retrieval=read_embedding_file(_resolve("retrieval")),
        query=read_embedding_file(_resolve("query")),
        category_count=int(doc["category_count"]),
    )
    split.validate()
    return split


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def generate_synthetic(
    class_count: int,
    per_class: int,
    modality_dims: tuple[int, ...] = DEFAULT_MODALITY_DIMS,
    noise_sigma: float = 0.05,
    seed: int = 0,
) -> DatasetSplit:
    """Draw a labeled synthetic split with one unit-norm center per class.

    Each modality gets its own random center per class; every sample is
    center + N(0, noise_sigma^2) noise, labels are one-hot. Samples are
    split per class into train/retrieval/query (50/30/20) with disjoint
    ids. Deterministic: identical arguments give bitwise-identical output.
    """
    if class_count < 2:
        raise ValidationError("class_count must be at least 2")
    if per_class < 3:
        raise ValidationError("per_class must be at least 3 (one sample per split role)")
    if any(d < 1 for d in modality_dims):
        raise ValidationError("modality dims must be positive")
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be non-negative")

    rng = np.random.default_rng(seed)
    total = class_count * per_class

    features = []
    for dim in modality_dims:
        centers = rng.standard_normal((class_count, dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        samples = np.repeat(centers, per_class, axis=0)
        if noise_sigma > 0:
            samples = samples + noise_sigma * rng.standard_normal((total, dim))
        # quantize to storage precision so written files round-trip exactly
        features.append(samples.astype(np.float32).astype(np.float64))

    labels = np.zeros((total, class_count), dtype=np.uint8)
    labels[np.arange(total), np.repeat(np.arange(class_count), per_class)] = 1
    ids = np.arange(total, dtype=np.uint64)

    n_query = max(1, round(per_class * SPLIT_FRACTIONS[2]))
    n_retrieval = max(1, round(per_class * SPLIT_FRACTIONS[1]))
    n_train = per_class - n_query - n_retrieval
    if n_train < 1:
        raise ValidationError(f"per_class={per_class} leaves no training samples")

    train_rows: list[np.ndarray] = []
    retrieval_rows: list[np.ndarray] = []
    query_rows: list[np.ndarray] = []
    for c in range(class_count):
        rows = c * per_class + rng.permutation(per_class)
        train_rows.append(rows[:n_train])
        retrieval_rows.append(rows[n_train:n_train + n_retrieval])
        query_rows.append(rows[n_train + n_retrieval:])

    def _subset(row_groups: list[np.ndarray]) -> EmbeddingSet:
        rows = np.sort(np.concatenate(row_groups))
        return make_embedding_set(
            features=[f[rows] for f in features],
            labels=labels[rows],
            ids=ids[rows],
        )

    split = DatasetSplit(
        train=_subset(train_rows),
        retrieval=_subset(retrieval_rows),
        query=_subset(query_rows),
        category_count=class_count,
    )
    split.validate()
    return split
