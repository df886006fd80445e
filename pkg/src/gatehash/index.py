"""Bit-packed binary codes, popcount Hamming distance, exact linear-scan search.

Codes are stored k bits per sample across ceil(k/64) little-endian 64-bit
words: bit i of a code lives in word i // 64 at bit position i % 64. Bits
beyond k in the last word are always zero, so XOR + popcount over whole
words is exact. Search is an exact linear scan; retrieval sets in the
hundred-thousand range are well within popcount throughput, so there is no
approximate path. Ties are broken by ascending sample id, which makes every
ranking (and everything computed from it) deterministic.

Code file format (CMHC, all little-endian):

    magic "CMHC" (4 bytes) | version u32 | count u64 | k u32
    | packed words (count * ceil(k/64) * u64) | ids (count * u64)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    SchemaError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)

CODES_MAGIC = b"CMHC"
CODES_VERSION = 1


def words_per_code(k: int) -> int:
    return (k + 63) // 64


@dataclass(frozen=True)
class BinaryCodeMatrix:
    """Immutable packed code collection for one sample set."""

    words: np.ndarray  # (count, words_per_code(k)) uint64
    k: int
    ids: np.ndarray    # (count,) uint64

    @property
    def count(self) -> int:
        return int(self.words.shape[0])

    def validate(self) -> None:
        if self.k < 1:
            raise ValidationError("code length k must be positive")
        if self.words.ndim != 2 or self.words.shape[1] != words_per_code(self.k):
            raise DimensionMismatchError(
                f"words shape {self.words.shape} inconsistent with k={self.k}"
            )
        if self.ids.shape != (self.count,):
            raise DimensionMismatchError("ids must be one per code")
        if len(np.unique(self.ids)) != self.count:
            raise ValidationError("code ids must be unique")
        pad = self.words.shape[1] * 64 - self.k
        if pad and self.count:
            mask = np.uint64((1 << 64) - (1 << (64 - pad)))
            if np.any(self.words[:, -1] & mask):
                raise ValidationError(f"padding bits beyond k={self.k} must be zero")

    def code(self, i: int) -> np.ndarray:
        """Packed words of one code row."""
        return self.words[i]

    def row_of_id(self, sample_id: int) -> int:
        rows = np.flatnonzero(self.ids == np.uint64(sample_id))
        if not rows.size:
            raise ValidationError(f"unknown sample id {sample_id}")
        return int(rows[0])


def pack_codes(codes: np.ndarray, ids: np.ndarray) -> BinaryCodeMatrix:
    """Pack sign vectors (+1/-1, bit = 1 for +1) or 0/1 bit vectors.

    Any value > 0 sets the bit; everything else clears it. Padding bits in
    the last word come out zero.
    """
    try:
        codes = np.asarray(codes)
    except ValueError as err:
        raise ValidationError(f"ragged input: {err}") from None
    if codes.dtype == object:
        raise ValidationError("ragged input: all codes must have the same length")
    codes = np.atleast_2d(codes)
    if codes.ndim != 2:
        raise ValidationError("codes must be a uniform (count, k) array")
    count, k = codes.shape
    if k < 1:
        raise ValidationError("code length k must be positive")
    bits = (codes > 0).astype(np.uint8)
    padded_cols = words_per_code(k) * 64
    if padded_cols != k:
        bits = np.concatenate(
            [bits, np.zeros((count, padded_cols - k), dtype=np.uint8)], axis=1
        )
    packed = np.packbits(bits, axis=1, bitorder="little")
    words = packed.view("<u8").astype(np.uint64).reshape(count, words_per_code(k))
    matrix = BinaryCodeMatrix(
        words=words, k=k, ids=np.ascontiguousarray(ids, dtype=np.uint64)
    )
    matrix.validate()
    return matrix


def unpack_codes(matrix: BinaryCodeMatrix) -> np.ndarray:
    """Recover the (count, k) sign vectors (+1/-1) from packed words."""
    raw = matrix.words.astype("<u8").view(np.uint8).reshape(matrix.count, -1)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :matrix.k]
    return bits.astype(np.int8) * 2 - 1


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Popcount of XOR over the packed words of two codes."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"codes have different word counts: {a.shape} vs {b.shape}"
        )
    return int(np.bitwise_count(a ^ b).sum())


def _distances_to_all(index: BinaryCodeMatrix, query_words: np.ndarray) -> np.ndarray:
    """Hamming distances from one query code to every index code."""
    return np.bitwise_count(index.words ^ query_words).sum(axis=1).astype(np.int64)


@dataclass(frozen=True)
class SearchResult:
    """Neighbors ordered by (distance, ascending id)."""

    ids: np.ndarray        # uint64
    distances: np.ndarray  # int64, non-decreasing

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(i), int(d)) for i, d in zip(self.ids, self.distances)]


def search_topk(index: BinaryCodeMatrix, query: np.ndarray, topk: int) -> SearchResult:
    """Exact top-k smallest Hamming distances, ties broken by ascending id."""
    if topk < 1:
        raise ValidationError("topk must be at least 1")
    if index.count == 0:
        raise ValidationError("cannot search an empty index")
    query = np.asarray(query, dtype=np.uint64)
    if query.shape != (index.words.shape[1],):
        raise DimensionMismatchError(
            f"query has {query.shape[0] if query.ndim else 0} words, "
            f"index codes have {index.words.shape[1]}"
        )
    dist = _distances_to_all(index, query)
    order = np.lexsort((index.ids, dist))[:min(topk, index.count)]
    return SearchResult(ids=index.ids[order], distances=dist[order])


def ranked_positions(index: BinaryCodeMatrix, queries: BinaryCodeMatrix) -> np.ndarray:
    """Row positions of the full ranking for each query, as a (Q, count) matrix."""
    if queries.k != index.k:
        raise DimensionMismatchError(
            f"query codes have k={queries.k}, index codes have k={index.k}"
        )
    if index.count == 0:
        raise ValidationError("cannot rank an empty index")
    out = np.empty((queries.count, index.count), dtype=np.int64)
    for q in range(queries.count):
        dist = _distances_to_all(index, queries.words[q])
        out[q] = np.lexsort((index.ids, dist))
    return out


def rank_all(index: BinaryCodeMatrix, queries: BinaryCodeMatrix) -> np.ndarray:
    """Full ranking of index ids per query, ordered by (distance, id)."""
    return index.ids[ranked_positions(index, queries)]


# ---------------------------------------------------------------------------
# Code file format (CMHC)
# ---------------------------------------------------------------------------

def write_code_file(matrix: BinaryCodeMatrix, path: str | Path) -> None:
    matrix.validate()
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<IQI", CODES_VERSION, matrix.count, matrix.k))
        fh.write(np.ascontiguousarray(matrix.words, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(matrix.ids, dtype="<u8").tobytes())


def read_code_file(path: str | Path) -> BinaryCodeMatrix:
    buf = Path(path).read_bytes()
    if buf[:4] != CODES_MAGIC:
        raise BadMagicError(f"{path}: expected magic {CODES_MAGIC!r}, found {buf[:4]!r}")
    header_size = 4 + struct.calcsize("<IQI")
    if len(buf) < header_size:
        raise TruncatedFileError(f"{path}: file ends inside header")
    version, count, k = struct.unpack("<IQI", buf[4:header_size])
    if version != CODES_VERSION:
        raise VersionError(f"{path}: unsupported code file version {version}")
    if k < 1:
        raise SchemaError(f"{path}: k must be positive")

    wpc = words_per_code(k)
    words_size = 8 * count * wpc
    ids_size = 8 * count
    if len(buf) < header_size + words_size + ids_size:
        raise TruncatedFileError(f"{path}: file ends inside payload")
    if len(buf) != header_size + words_size + ids_size:
        raise SchemaError(f"{path}: trailing bytes after payload")

    words = np.frombuffer(
        buf[header_size:header_size + words_size], dtype="<u8"
    ).astype(np.uint64).reshape(count, wpc)
    ids = np.frombuffer(buf[header_size + words_size:], dtype="<u8").astype(np.uint64)
    matrix = BinaryCodeMatrix(words=words, k=k, ids=ids)
    matrix.validate()
    return matrix
