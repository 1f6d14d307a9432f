"""End-to-end query execution.

A query is routed by length. Short (HYBRID) queries recall the union of
keyword matches and sparse-embedding matches, score them with the cheap
first-round ranker, then rescore the top K with text-image cosine. Long
queries skip the recall gates and score every filtered document against both
dense spaces. HYBRID pages with fewer than five organic results are topped up
with intent-graph recovery results.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .ckg import IntentGraph, IntentPostings, recover
from .config import EngineConfig
from .embedding import DenseEmbedding, sparsify, toy_embed
from .errors import EmptyQuery, MissingEmbedding
from .keyword_index import KeywordIndex
from .ranking import CandidateFeatures, first_round_scores, rescore_topk
from .records import LANGUAGES, REGIONS, DocAttributes, FilterSpec, TemplateRecord
from .sparse_index import SparseIndex
from .text import tokenize


class Route(str, enum.Enum):
    HYBRID = "HYBRID"
    LONG = "LONG"


@dataclass
class QueryPlan:
    route: Route
    word_count: int
    tokens: tuple[str, ...]
    filters: FilterSpec
    intents: tuple[str, ...]
    recovery_applied: bool = False
    null: bool = False
    low: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "route": self.route.value,
            "word_count": self.word_count,
            "filters": self.filters.to_dict(),
            "intents": list(self.intents),
            "recovery_applied": self.recovery_applied,
            "null": self.null,
            "low": self.low,
        }


@dataclass(frozen=True)
class QueryContext:
    """Who is searching: drives the locale feature and the recency reference date."""

    language: str | None = "en-US"
    region: str | None = None
    as_of: str | None = None

    def __post_init__(self) -> None:
        if self.language is not None and self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}")
        if self.region is not None and self.region not in REGIONS:
            raise ValueError(f"unknown region {self.region!r}")
        if self.as_of is not None:
            dt.date.fromisoformat(self.as_of)


@dataclass
class Provenance:
    keyword: bool = False
    sparse: bool = False
    recovery: bool = False
    long_path: bool = False

    def to_dict(self) -> dict[str, bool]:
        return {"keyword": self.keyword, "sparse": self.sparse, "recovery": self.recovery, "long_path": self.long_path}


@dataclass
class RankedResult:
    doc_id: str
    rank: int
    score: float
    provenance: Provenance
    title: str = ""
    explain: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        out = {
            "doc_id": self.doc_id,
            "rank": self.rank,
            "score": self.score,
            "title": self.title,
            "provenance": self.provenance.to_dict(),
        }
        if self.explain is not None:
            out["explain"] = self.explain
        return out


@dataclass
class SearchResponse:
    query: str
    plan: QueryPlan
    results: list[RankedResult]
    organic_count: int
    recovery_count: int
    offset: int
    page_size: int
    stages: dict[str, int] | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.organic_count + self.recovery_count

    def to_dict(self, include_timings: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "query": self.query,
            "plan": self.plan.to_dict(),
            "organic_count": self.organic_count,
            "recovery_count": self.recovery_count,
            "total": self.total,
            "offset": self.offset,
            "page_size": self.page_size,
            "results": [r.to_dict() for r in self.results],
        }
        if self.stages is not None:
            out["stages"] = dict(self.stages)
        if include_timings:
            out["timings_ms"] = dict(self.timings_ms)
        return out

    def to_json(self, include_timings: bool = False) -> str:
        """Canonical serialization; identical inputs give byte-identical output."""
        return json.dumps(self.to_dict(include_timings), sort_keys=True, separators=(",", ":"))


@dataclass
class Ranking:
    """Full ranking for one query, as arrays over internal doc ordinals."""

    plan: QueryPlan
    docs: np.ndarray
    scores: np.ndarray
    keyword: np.ndarray
    sparse: np.ndarray
    recovery: np.ndarray
    long_path: np.ndarray
    organic_count: int
    details: dict[str, np.ndarray]
    stages: dict[str, int]
    timings_ms: dict[str, float]

    @property
    def recovery_count(self) -> int:
        return int(self.docs.size) - self.organic_count


def _top_order(scores: np.ndarray, ids: np.ndarray, k: int | None) -> np.ndarray:
    """Positions of the k best by (score desc, id asc); exact under ties at the cut."""
    n = scores.size
    if k is None or k >= n:
        return np.lexsort((ids, -scores))
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    kth = np.partition(-scores, k - 1)[k - 1]
    cand = np.flatnonzero(-scores <= kth)
    order = cand[np.lexsort((ids[cand], -scores[cand]))]
    return order[:k]


class _Timer:
    def __init__(self) -> None:
        self.marks: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.marks[name] = round((now - self._t) * 1000.0, 3)
        self._t = now


class SearchEngine:
    """Immutable, query-only view over a built corpus.

    Documents are addressed internally by ordinal (position in ``doc_keys``,
    which is sorted), so "ties by ascending doc id" is the same order for
    ordinals and external ids.
    """

    def __init__(
        self,
        config: EngineConfig,
        graph: IntentGraph,
        records: Sequence[TemplateRecord],
        dense: Mapping[str, np.ndarray],
        sparse_index: SparseIndex,
        keyword_index: KeywordIndex,
        doc_intents: Sequence[Sequence[str]],
    ) -> None:
        self.config = config
        self.graph = graph
        self.records = list(records)
        self.doc_keys = [r.id for r in self.records]
        if self.doc_keys != sorted(self.doc_keys):
            raise ValueError("records must be sorted by id")
        self.key_to_doc = {k: i for i, k in enumerate(self.doc_keys)}
        self.dense = dict(dense)
        for name, matrix in self.dense.items():
            matrix.flags.writeable = False
            if matrix.shape != (len(self.records), config.space(name).dense_dim):
                raise ValueError(f"dense matrix for {name!r} has shape {matrix.shape}")
        self.sparse_index = sparse_index.freeze()
        self.keyword_index = keyword_index
        self.attributes = keyword_index.attributes or DocAttributes.from_records(self.records)
        self.doc_intents = [tuple(sorted(set(i))) for i in doc_intents]
        self.intent_postings = IntentPostings.from_doc_intents(self.doc_intents)
        self.days = np.array([r.day for r in self.records], dtype=np.int64)
        self.engagement = np.array([r.edits + r.exports for r in self.records], dtype=np.float64)
        self.language_codes = self.attributes.language
        self.region_codes = self.attributes.region
        self.as_of_day = int(self.days.max()) if self.days.size else 0
        self.digest: str | None = None

    def __len__(self) -> int:
        return len(self.records)

    # -- planning -------------------------------------------------------

    def plan(self, query_text: str, filters: FilterSpec | None = None) -> QueryPlan:
        tokens = tuple(tokenize(query_text or ""))
        if not tokens:
            raise EmptyQuery("query has no tokens after normalization")
        route = Route.LONG if len(tokens) >= self.config.long_query_min_words else Route.HYBRID
        intents = tuple(sorted(self.graph.extract_intents(" ".join(tokens))))
        return QueryPlan(route, len(tokens), tokens, filters or FilterSpec(), intents)

    # -- query embeddings ------------------------------------------------

    def query_vectors(self, text: str, spaces: Sequence[str], supplied: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
        out = {}
        for name in spaces:
            if supplied is not None and name in supplied:
                vec = DenseEmbedding(name, supplied[name])
                vec.check_space(self.config.space(name))
                vec = vec.normalized()
            else:
                vec = toy_embed(text, self.config.space(name))
            out[name] = vec.values
        return out

    # -- stages ----------------------------------------------------------

    def long_query_scan_arrays(
        self, query: Mapping[str, np.ndarray], filters: FilterSpec | None = None, limit: int | None = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Exact blended cosine for every document passing ``filters``.

        Returns ``(docs, blended, text_image_cos, intent_cos)`` ordered by
        blended score descending, ties by ascending doc id.
        """
        ti, it = self.config.text_image_space, self.config.intent_space
        for space in (ti, it):
            if space not in query:
                raise MissingEmbedding(f"query has no embedding in space {space!r}")
            if space not in self.dense:
                raise MissingEmbedding(f"documents have no embeddings in space {space!r}")
        docs = np.flatnonzero(self.attributes.mask(filters))
        if docs.size == 0:
            empty = np.zeros(0)
            return docs, empty, empty, empty
        full = docs.size == len(self)
        m_ti = self.dense[ti] if full else self.dense[ti][docs]
        m_it = self.dense[it] if full else self.dense[it][docs]
        cos_ti = (m_ti @ np.asarray(query[ti], dtype=m_ti.dtype)).astype(np.float64)
        cos_it = (m_it @ np.asarray(query[it], dtype=m_it.dtype)).astype(np.float64)
        w = self.config.rescore.long_query_intent_weight
        blended = w * cos_it + (1.0 - w) * cos_ti
        order = _top_order(blended, docs, limit)
        return docs[order], blended[order], cos_ti[order], cos_it[order]

    def long_query_scan(self, query: Mapping[str, np.ndarray], filters: FilterSpec | None = None, limit: int | None = None) -> list[tuple[int, float]]:
        docs, blended, _, _ = self.long_query_scan_arrays(query, filters, limit)
        return [(int(d), float(s)) for d, s in zip(docs, blended)]

    def sparse_recall(self, query_ti: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        space = self.config.text_image
        q_sparse = sparsify(DenseEmbedding(space.name, query_ti), space)
        docs, counts, scores = self.sparse_index.match_arrays(q_sparse, self.config.min_dims)
        keep = mask[docs]
        return docs[keep], counts[keep], scores[keep]

    def _locale(self, docs: np.ndarray, ctx: QueryContext) -> np.ndarray:
        parts = []
        if ctx.language is not None:
            parts.append(self.language_codes[docs] == LANGUAGES.index(ctx.language))
        if ctx.region is not None:
            reg = self.region_codes[docs]
            parts.append((reg == REGIONS.index(ctx.region)) | (reg == REGIONS.index("all")))
        if not parts:
            return np.zeros(docs.size)
        return np.mean(np.vstack(parts).astype(np.float64), axis=0)

    # -- execution -------------------------------------------------------

    def execute(
        self,
        query_text: str,
        filters: FilterSpec | None = None,
        context: QueryContext | None = None,
        recovery: bool | None = None,
        query_vectors: Mapping[str, np.ndarray] | None = None,
    ) -> Ranking:
        cfg = self.config
        ctx = context or QueryContext()
        timer = _Timer()
        plan = self.plan(query_text, filters)
        filters = plan.filters
        mask = self.attributes.mask(filters)
        ti, it = cfg.text_image_space, cfg.intent_space
        long_query = plan.route is Route.LONG
        text = " ".join(plan.tokens)
        stages: dict[str, int] = {"filtered_docs": int(mask.sum())}

        qv = self.query_vectors(text, [ti, it] if long_query else [ti], query_vectors)
        timer.lap("embed")

        kw_scores, kw_matched = self.keyword_index.score_all(plan.tokens)
        kw_matched &= mask
        timer.lap("keyword")

        sparse_docs = np.zeros(0, np.int64)
        sparse_counts = np.zeros(0, np.int64)
        sparse_scores = np.zeros(0)
        long_docs = np.zeros(0, np.int64)
        use_union = not long_query or cfg.long_route_union
        if use_union:
            sparse_docs, sparse_counts, sparse_scores = self.sparse_recall(qv[ti], mask)
            timer.lap("sparse")
        if long_query:
            long_docs, _, _, _ = self.long_query_scan_arrays(qv, filters, cfg.rescore.depth)
            timer.lap("long_scan")

        kw_docs = np.flatnonzero(kw_matched)
        stages["keyword"] = int(kw_docs.size)
        stages["sparse"] = int(sparse_docs.size)
        stages["long_scan"] = int(long_docs.size)
        parts = [long_docs]
        if use_union:
            parts += [kw_docs, sparse_docs]
        candidates = np.unique(np.concatenate(parts)) if any(p.size for p in parts) else np.zeros(0, np.int64)
        stages["candidates"] = int(candidates.size)

        # On the pure LONG route keyword match is only a first-round feature, not a recall gate.
        in_kw = kw_matched[candidates]
        in_sparse = np.isin(candidates, sparse_docs)
        in_long = np.isin(candidates, long_docs)
        matched_dims = np.zeros(candidates.size, np.int64)
        sparse_score = np.zeros(candidates.size)
        if sparse_docs.size:
            pos = np.searchsorted(candidates, sparse_docs)
            matched_dims[pos] = sparse_counts
            sparse_score[pos] = sparse_scores

        bm25 = kw_scores[candidates]
        features = CandidateFeatures(
            doc_ids=candidates,
            bm25=np.where(in_kw, bm25, 0.0),
            age_days=_reference_day(ctx, self.as_of_day) - self.days[candidates],
            locale_match=self._locale(candidates, ctx),
            engagement=self.engagement[candidates],
            sparse_only=in_sparse & ~in_kw & ~in_long,
        )
        fr = first_round_scores(features, cfg.first_round)
        timer.lap("first_round")

        rescored = rescore_topk(
            candidates, fr.score, qv, self.dense, cfg.rescore,
            long_query=long_query, text_image_space=ti, intent_space=it,
        )
        stages["rescored"] = rescored.n_rescored
        timer.lap("rescore")

        order = rescored.order
        organic = candidates[order]
        organic_scores = np.where(np.isnan(rescored.final[order]), fr.score[order], rescored.final[order])
        organic_count = int(organic.size)

        rec_docs = np.zeros(0, np.int64)
        rec_scores = np.zeros(0)
        threshold = cfg.recovery.low_threshold
        use_recovery = cfg.recovery.enabled if recovery is None else recovery
        if use_recovery and not long_query and organic_count < threshold:
            hits = recover(plan.intents, self.intent_postings, exclude=organic.tolist(), limit=cfg.recovery.limit, allowed=mask)
            if hits:
                rec_docs = np.array([d for d, _ in hits], dtype=np.int64)
                rec_scores = np.array([float(s) for _, s in hits])
            timer.lap("recovery")
        stages["recovered"] = int(rec_docs.size)

        docs = np.concatenate([organic, rec_docs]).astype(np.int64)
        total = int(docs.size)
        plan.recovery_applied = bool(rec_docs.size)
        plan.null = total == 0
        plan.low = total < threshold

        def organic_then(values: np.ndarray, fill: float) -> np.ndarray:
            return np.concatenate([values[order], np.full(rec_docs.size, fill)])

        details = {
            "bm25": organic_then(features.bm25, 0.0),
            "bm25_norm": organic_then(fr.bm25_norm, np.nan),
            "recency": organic_then(fr.recency, np.nan),
            "locale": organic_then(fr.locale, np.nan),
            "behavior": organic_then(fr.behavior, np.nan),
            "first_round": organic_then(fr.score, np.nan),
            "first_round_norm": organic_then(rescored.first_round_norm, np.nan),
            "text_image_sim": organic_then(rescored.text_image_sim, np.nan),
            "intent_sim": organic_then(rescored.intent_sim, np.nan),
            "sim": organic_then(rescored.sim, np.nan),
            "final": organic_then(rescored.final, np.nan),
            "matched_dims": organic_then(matched_dims, 0),
            "sparse_score": organic_then(sparse_score, 0.0),
            "shared_intents": np.concatenate([np.zeros(organic_count), rec_scores]),
        }
        return Ranking(
            plan=plan,
            docs=docs,
            scores=np.concatenate([organic_scores, rec_scores]),
            keyword=np.concatenate([in_kw[order], np.zeros(rec_docs.size, bool)]),
            sparse=np.concatenate([in_sparse[order], np.zeros(rec_docs.size, bool)]),
            recovery=np.concatenate([np.zeros(organic_count, bool), np.ones(rec_docs.size, bool)]),
            long_path=np.concatenate([in_long[order], np.zeros(rec_docs.size, bool)]),
            organic_count=organic_count,
            details=details,
            stages=stages,
            timings_ms=timer.marks,
        )

    def search(
        self,
        query_text: str,
        filters: FilterSpec | None = None,
        page_size: int | None = None,
        offset: int = 0,
        explain: bool = False,
        context: QueryContext | None = None,
        recovery: bool | None = None,
        query_vectors: Mapping[str, np.ndarray] | None = None,
    ) -> SearchResponse:
        page_size = self.config.page_size if page_size is None else page_size
        if page_size < 1 or offset < 0:
            raise ValueError("page_size must be >= 1 and offset >= 0")
        t0 = time.perf_counter()
        ranking = self.execute(query_text, filters, context, recovery, query_vectors)
        results = []
        stop = min(offset + page_size, ranking.docs.size)
        for pos in range(offset, stop):
            doc = int(ranking.docs[pos])
            explain_payload = None
            if explain:
                explain_payload = {k: _jsonable(v[pos]) for k, v in ranking.details.items()}
                explain_payload["rescored"] = bool(not np.isnan(ranking.details["final"][pos]))
                explain_payload["intents"] = list(self.doc_intents[doc])
            results.append(
                RankedResult(
                    doc_id=self.doc_keys[doc],
                    rank=pos + 1,
                    score=float(ranking.scores[pos]),
                    provenance=Provenance(
                        keyword=bool(ranking.keyword[pos]),
                        sparse=bool(ranking.sparse[pos]),
                        recovery=bool(ranking.recovery[pos]),
                        long_path=bool(ranking.long_path[pos]),
                    ),
                    title=self.records[doc].title,
                    explain=explain_payload,
                )
            )
        timings = dict(ranking.timings_ms)
        timings["total"] = round((time.perf_counter() - t0) * 1000.0, 3)
        return SearchResponse(
            query=query_text,
            plan=ranking.plan,
            results=results,
            organic_count=ranking.organic_count,
            recovery_count=ranking.recovery_count,
            offset=offset,
            page_size=page_size,
            stages=dict(ranking.stages) if explain else None,
            timings_ms=timings,
        )


def _reference_day(ctx: QueryContext, default_day: int) -> int:
    if ctx.as_of is None:
        return default_day
    return (dt.date.fromisoformat(ctx.as_of) - dt.date(1970, 1, 1)).days


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    f = float(value)
    return None if np.isnan(f) else f
