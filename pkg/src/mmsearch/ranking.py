"""First-round candidate scoring and dense-embedding top-K rescoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import MissingEmbedding

TWO_THIRDS = 2.0 / 3.0
ONE_THIRD = 1.0 / 3.0


@dataclass(frozen=True)
class FirstRoundWeights:
    w_bm25: float = 0.5
    w_recency: float = 0.2
    w_locale: float = 0.1
    w_behavior: float = 0.2
    recency_half_life_days: float = 180.0
    sparse_only_demotion: float = 0.8

    def __post_init__(self) -> None:
        ws = (self.w_bm25, self.w_recency, self.w_locale, self.w_behavior)
        if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError("first-round weights must be non-negative and sum to 1")
        if not self.recency_half_life_days > 0:
            raise ValueError("recency_half_life_days must be > 0")
        if not 0 < self.sparse_only_demotion <= 1:
            raise ValueError("sparse_only_demotion must be in (0, 1]")


@dataclass(frozen=True)
class RescoreConfig:
    depth: int = 10_000
    embed_weight: float = TWO_THIRDS
    long_query_intent_weight: float = ONE_THIRD

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("rescore depth must be >= 1")
        for name in ("embed_weight", "long_query_intent_weight"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass
class CandidateFeatures:
    """Raw per-candidate features, one array entry per candidate."""

    doc_ids: np.ndarray
    bm25: np.ndarray
    age_days: np.ndarray
    locale_match: np.ndarray
    engagement: np.ndarray  # edits + exports
    sparse_only: np.ndarray

    def __len__(self) -> int:
        return int(np.asarray(self.doc_ids).size)


@dataclass
class FirstRoundScores:
    bm25_norm: np.ndarray
    recency: np.ndarray
    locale: np.ndarray
    behavior: np.ndarray
    score: np.ndarray


def minmax(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]. A constant vector maps to 1 when positive, else 0."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 1.0 if hi > 0 else 0.0)
    return (values - lo) / (hi - lo)


def first_round_scores(features: CandidateFeatures, weights: FirstRoundWeights) -> FirstRoundScores:
    """Cheap linear blend of keyword, recency, locale and engagement signals.

    bm25 is min-max normalized over the candidate set; engagement enters as
    ``log(1 + edits + exports) / log(1 + max over the set)``. Candidates recalled
    only by the sparse index are multiplied by ``sparse_only_demotion``.
    """
    bm25_norm = minmax(features.bm25)
    age = np.maximum(np.asarray(features.age_days, dtype=np.float64), 0.0)
    recency = np.exp2(-age / weights.recency_half_life_days)
    locale = np.asarray(features.locale_match, dtype=np.float64)
    engagement = np.asarray(features.engagement, dtype=np.float64)
    top = float(engagement.max()) if engagement.size else 0.0
    if top > 0:
        behavior = np.log1p(engagement) / math.log1p(top)
    else:
        behavior = np.zeros(engagement.shape)
    score = (
        weights.w_bm25 * bm25_norm
        + weights.w_recency * recency
        + weights.w_locale * locale
        + weights.w_behavior * behavior
    )
    score = np.where(np.asarray(features.sparse_only, dtype=bool), score * weights.sparse_only_demotion, score)
    return FirstRoundScores(bm25_norm, recency, locale, behavior, score)


def first_round_order(doc_ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Positions sorted by descending first-round score, ties by ascending doc id."""
    return np.lexsort((np.asarray(doc_ids), -np.asarray(scores)))


def blend_similarity(text_image_sim: np.ndarray, intent_sim: np.ndarray | None, cfg: RescoreConfig, long_query: bool) -> np.ndarray:
    """Short queries use text-image cosine; long ones mix in the intent space."""
    text_image_sim = np.asarray(text_image_sim, dtype=np.float64)
    if not long_query:
        return text_image_sim
    if intent_sim is None:
        raise MissingEmbedding("long-query blend needs intent-space similarities")
    w = cfg.long_query_intent_weight
    return w * np.asarray(intent_sim, dtype=np.float64) + (1.0 - w) * text_image_sim


def final_score(sim: np.ndarray, first_round_norm: np.ndarray, cfg: RescoreConfig) -> np.ndarray:
    w = cfg.embed_weight
    return w * np.asarray(sim, dtype=np.float64) + (1.0 - w) * np.asarray(first_round_norm, dtype=np.float64)


@dataclass
class RescoreResult:
    """Final ranking as positions into the caller's candidate arrays.

    ``order[:n_rescored]`` were rescored and sorted by ``final``; the remainder
    keep their first-round order. ``sim``/``text_image_sim``/``intent_sim`` and
    ``final`` are NaN for candidates below the depth cut.
    """

    order: np.ndarray
    n_rescored: int
    first_round_norm: np.ndarray
    text_image_sim: np.ndarray
    intent_sim: np.ndarray
    sim: np.ndarray
    final: np.ndarray


def _gather(doc_vectors: Mapping[str, np.ndarray], query: Mapping[str, np.ndarray], space: str, docs: np.ndarray) -> np.ndarray:
    if space not in query:
        raise MissingEmbedding(f"query has no embedding in space {space!r}")
    if space not in doc_vectors:
        raise MissingEmbedding(f"documents have no embeddings in space {space!r}")
    rows = doc_vectors[space][docs]
    if rows.size and not np.all(np.isfinite(rows)):
        bad = int(docs[np.flatnonzero(~np.all(np.isfinite(rows), axis=1))[0]])
        raise MissingEmbedding(f"document {bad} lacks an embedding in space {space!r}")
    # Stored vectors are unit length, so a dot product is the cosine.
    return (rows @ np.asarray(query[space], dtype=rows.dtype)).astype(np.float64)


def rescore_topk(
    doc_ids: np.ndarray,
    first_round: np.ndarray,
    query: Mapping[str, np.ndarray],
    doc_vectors: Mapping[str, np.ndarray],
    cfg: RescoreConfig,
    long_query: bool = False,
    text_image_space: str = "text_image",
    intent_space: str = "intent",
) -> RescoreResult:
    """Rescore the top ``cfg.depth`` candidates by first-round score with dense similarity.

    ``query`` maps space name to a unit query vector; ``doc_vectors`` maps space
    name to a unit-row matrix indexed by doc id.
    """
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    first_round = np.asarray(first_round, dtype=np.float64)
    n = doc_ids.size
    fr_norm = minmax(first_round)
    order = first_round_order(doc_ids, first_round)
    head = order[: cfg.depth]
    tail = order[cfg.depth :]

    text_image_sim = np.full(n, np.nan)
    intent_sim = np.full(n, np.nan)
    sim = np.full(n, np.nan)
    final = np.full(n, np.nan)
    if head.size:
        head_docs = doc_ids[head]
        text_image_sim[head] = _gather(doc_vectors, query, text_image_space, head_docs)
        if long_query:
            intent_sim[head] = _gather(doc_vectors, query, intent_space, head_docs)
        sim[head] = blend_similarity(text_image_sim[head], intent_sim[head] if long_query else None, cfg, long_query)
        final[head] = final_score(sim[head], fr_norm[head], cfg)
        # first-round score breaks exact ties so embed_weight=0 reproduces the first-round order
        head = head[np.lexsort((doc_ids[head], -first_round[head], -final[head]))]
    return RescoreResult(
        order=np.concatenate([head, tail]).astype(np.int64),
        n_rescored=int(head.size),
        first_round_norm=fr_norm,
        text_image_sim=text_image_sim,
        intent_sim=intent_sim,
        sim=sim,
        final=final,
    )
