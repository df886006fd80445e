"""Retrieval quality: Average Precision and mAP over Hamming rankings.

Relevance between two multi-label samples is label-set intersection: a
retrieved item is relevant to a query iff they share at least one category.
AP is computed over the full ranking (no cutoff):

    AP = (1 / |relevant|) * sum over relevant hit positions p of hits(p) / p

mAP averages AP over all queries that have at least one relevant item;
queries with an empty relevant set are excluded from the mean and counted
in the returned diagnostics.

Rankings must arrive tie-broken (the index ranks by (distance, ascending
id)), so every number here is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetSplit, EmbeddingSet
from .errors import DimensionMismatchError, EmptyRelevantSetError, ValidationError
from .index import BinaryCodeMatrix, ranked_positions


def relevance(query_labels: np.ndarray, item_labels: np.ndarray) -> bool:
    """True iff the two multi-hot label vectors share at least one set bit."""
    query_labels = np.asarray(query_labels)
    item_labels = np.asarray(item_labels)
    if query_labels.shape != item_labels.shape:
        raise DimensionMismatchError(
            f"label vectors differ in length: {query_labels.shape} vs {item_labels.shape}"
        )
    return bool(np.any((query_labels > 0) & (item_labels > 0)))


def relevance_matrix(query_labels: np.ndarray, item_labels: np.ndarray) -> np.ndarray:
    """(Q, N) boolean matrix of pairwise label intersection."""
    q = np.asarray(query_labels, dtype=np.int64)
    r = np.asarray(item_labels, dtype=np.int64)
    if q.shape[1] != r.shape[1]:
        raise DimensionMismatchError(
            f"label matrices differ in category count: {q.shape[1]} vs {r.shape[1]}"
        )
    return (q @ r.T) > 0


def average_precision(ranking: np.ndarray, relevant: set[int] | np.ndarray) -> float:
    """AP of one ranked id list against a nonempty relevant id set."""
    ranking = np.asarray(ranking, dtype=np.uint64)
    relevant_arr = np.asarray(sorted(int(r) for r in relevant), dtype=np.uint64)
    if relevant_arr.size == 0:
        raise EmptyRelevantSetError("relevant set is empty")
    hit_mask = np.isin(ranking, relevant_arr)
    if int(hit_mask.sum()) != relevant_arr.size:
        raise ValidationError("ranking does not cover every relevant item")
    return _ap_from_mask(hit_mask)


def _ap_from_mask(hit_mask: np.ndarray) -> float:
    positions = np.flatnonzero(hit_mask) + 1  # 1-based ranks of the hits
    hits = np.arange(1, positions.size + 1, dtype=np.float64)
    return float(np.mean(hits / positions))


@dataclass(frozen=True)
class EvalResult:
    """mAP plus the diagnostics required to interpret it."""

    map: float
    evaluated_queries: int
    excluded_queries: int
    mean_relevant_size: float


def mean_average_precision(
    split: DatasetSplit,
    query_codes: BinaryCodeMatrix,
    retrieval_codes: BinaryCodeMatrix,
) -> EvalResult:
    """mAP of ranking the retrieval set for every query, aligned by sample id."""
    if query_codes.k != retrieval_codes.k:
        raise DimensionMismatchError(
            f"query codes have k={query_codes.k}, retrieval codes k={retrieval_codes.k}"
        )
    q_labels = _labels_for(split.query, query_codes.ids)
    r_labels = _labels_for(split.retrieval, retrieval_codes.ids)

    rel = relevance_matrix(q_labels, r_labels)
    order = ranked_positions(retrieval_codes, query_codes)

    ap_values = []
    relevant_sizes = []
    excluded = 0
    for q in range(query_codes.count):
        n_rel = int(rel[q].sum())
        if n_rel == 0:
            excluded += 1
            continue
        ap_values.append(_ap_from_mask(rel[q][order[q]]))
        relevant_sizes.append(n_rel)

    if not ap_values:
        raise EmptyRelevantSetError("no query has a nonempty relevant set")
    return EvalResult(
        map=float(np.mean(ap_values)),
        evaluated_queries=len(ap_values),
        excluded_queries=excluded,
        mean_relevant_size=float(np.mean(relevant_sizes)),
    )


def _labels_for(emb_set: EmbeddingSet, ids: np.ndarray) -> np.ndarray:
    """Label rows of `emb_set` reordered to follow `ids`."""
    row_by_id = {int(sid): row for row, sid in enumerate(emb_set.ids)}
    try:
        rows = np.array([row_by_id[int(sid)] for sid in ids], dtype=np.int64)
    except KeyError as err:
        raise ValidationError(f"code id {err.args[0]} not present in embedding set") from None
    return emb_set.labels[rows] if rows.size else emb_set.labels[:0]


REPORT_COLUMNS = ("bits", "map", "evaluated_queries", "excluded_queries",
                  "mean_relevant_size")


def render_report(rows: list[tuple[int, EvalResult]]) -> str:
    """Tab-separated evaluation report: one line per code length."""
    lines = ["\t".join(REPORT_COLUMNS)]
    for bits, res in rows:
        lines.append(
            f"{bits}\t{res.map:.6f}\t{res.evaluated_queries}"
            f"\t{res.excluded_queries}\t{res.mean_relevant_size:.2f}"
        )
    return "\n".join(lines) + "\n"
