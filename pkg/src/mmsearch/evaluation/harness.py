"""Offline evaluation: title-as-query, clicked-as-relevant, null/low rates,
sparse-vs-dense overlap and recall latency."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from ..embedding import DenseEmbedding, sparsify
from ..pipeline import SearchEngine, _top_order
from ..records import FilterSpec
from .synth import EvalQuerySet

DEFAULT_KS = (1, 10, 100)


def percentile_summary(samples_ms: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(samples_ms, dtype=np.float64)
    if arr.size == 0:
        return {"n": 0, "p50": float("nan"), "p95": float("nan"), "mean": float("nan")}
    return {
        "n": int(arr.size),
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
        "mean": float(arr.mean()),
    }


@dataclass
class EvalReport:
    """Per-query rows plus aggregates that are always recomputable from them.

    Each row carries ``rank`` (1-based rank of the first relevant doc or None),
    ``hits`` (rank of every relevant doc, None when missed), ``route``,
    ``organic``, ``total`` and ``latency_ms``.
    """

    protocol: str
    rows: list[dict[str, Any]]
    ks: tuple[int, ...] = DEFAULT_KS
    config: dict[str, Any] = field(default_factory=dict)
    aggregates: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.aggregates:
            self.aggregates = self.recompute()

    def recompute(self) -> dict[str, Any]:
        rows = self.rows
        n = len(rows)
        out: dict[str, Any] = {"queries": n}
        if n == 0:
            return out
        out["mrr"] = float(np.mean([1.0 / r["rank"] if r["rank"] else 0.0 for r in rows]))
        for k in self.ks:
            recalls = []
            for r in rows:
                hits = r["hits"]
                recalls.append(sum(1 for h in hits if h is not None and h <= k) / len(hits) if hits else 0.0)
            out[f"recall@{k}"] = float(np.mean(recalls))
        out["null_rate"] = float(np.mean([r["total"] == 0 for r in rows]))
        out["low_rate"] = float(np.mean([r["total"] < 5 for r in rows]))
        routes = sorted({r["route"] for r in rows})
        out["latency_ms"] = {route: percentile_summary([r["latency_ms"] for r in rows if r["route"] == route]) for route in routes}
        return out

    def deterministic_aggregates(self) -> dict[str, Any]:
        return {k: v for k, v in self.aggregates.items() if k != "latency_ms"}

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
            fh.write(json.dumps({"summary": self.aggregates, "protocol": self.protocol, "config": self.config}, sort_keys=True) + "\n")

    def summary_table(self) -> str:
        lines = [f"protocol: {self.protocol}", f"{'metric':<16}{'value':>12}"]
        for key, value in self.aggregates.items():
            if key == "latency_ms":
                continue
            lines.append(f"{key:<16}{value:>12.4f}" if isinstance(value, float) else f"{key:<16}{value:>12}")
        for route, stats in self.aggregates.get("latency_ms", {}).items():
            lines.append(f"{'latency ' + route:<16}{'p50 %.2f ms' % stats['p50']:>16}{'p95 %.2f ms' % stats['p95']:>16}")
        return "\n".join(lines)


def _rank_rows(engine: SearchEngine, items: Iterable[tuple[str, Sequence[str], dict]], recovery: bool | None = None) -> list[dict]:
    rows = []
    for text, relevant, extra in items:
        t0 = time.perf_counter()
        ranking = engine.execute(text, recovery=recovery)
        latency = (time.perf_counter() - t0) * 1000.0
        position = {int(d): i + 1 for i, d in enumerate(ranking.docs)}
        hits = [position.get(engine.key_to_doc[r]) for r in relevant]
        found = [h for h in hits if h is not None]
        rows.append(
            {
                "query": text,
                "route": ranking.plan.route.value,
                "rank": min(found) if found else None,
                "hits": hits,
                "organic": ranking.organic_count,
                "total": int(ranking.docs.size),
                "latency_ms": round(latency, 3),
                **extra,
            }
        )
    return rows


def title_as_query_eval(
    engine: SearchEngine, sample: int | None = None, seed: int = 0, ks: tuple[int, ...] = DEFAULT_KS
) -> EvalReport:
    """Query with each template's title and record where that template lands.

    ``sample`` evaluates a seeded subset of templates instead of all of them.
    """
    docs = np.arange(len(engine))
    if sample is not None and sample < docs.size:
        docs = np.sort(np.random.default_rng(seed).choice(docs.size, size=sample, replace=False))
    items = [(engine.records[d].title, [engine.doc_keys[d]], {"source": engine.doc_keys[d]}) for d in docs]
    return EvalReport("title_as_query", _rank_rows(engine, items), ks, {"sample": sample, "seed": seed, "engine": engine.config.to_dict()})


def clicked_eval(engine: SearchEngine, query_set: EvalQuerySet, ks: tuple[int, ...] = DEFAULT_KS) -> EvalReport:
    query_set.validate(set(engine.doc_keys))
    items = [(q.text, list(q.relevant), {"stratum": q.stratum}) for q in query_set.queries]
    return EvalReport("clicked", _rank_rows(engine, items), ks, {"seed": query_set.seed, "engine": engine.config.to_dict()})


def null_rate_eval(query_set: EvalQuerySet, engine: SearchEngine, recovery_on: bool) -> tuple[float, float]:
    """(null rate, low rate); with recovery on, recovered results count towards the page."""
    if not query_set.queries:
        return 0.0, 0.0
    threshold = engine.config.recovery.low_threshold
    totals = [int(engine.execute(q.text, recovery=recovery_on).docs.size) for q in query_set.queries]
    return float(np.mean([t == 0 for t in totals])), float(np.mean([t < threshold for t in totals]))


def _dense_top(engine: SearchEngine, q: np.ndarray, docs: np.ndarray | None, k: int) -> np.ndarray:
    matrix = engine.dense[engine.config.text_image_space]
    if docs is None:
        docs = np.arange(len(engine))
        scores = (matrix @ q.astype(matrix.dtype)).astype(np.float64)
    else:
        scores = (matrix[docs] @ q.astype(matrix.dtype)).astype(np.float64)
    return docs[_top_order(scores, docs, k)]


def sparse_vs_dense_overlap(
    engine: SearchEngine, queries: Sequence[str] | np.ndarray, k: int = 10, min_dims: int | None = None
) -> dict[str, Any]:
    """Mean overlap@k between sparse recall followed by exact dense rescoring, and
    the exhaustive dense ranking over the text-image space.

    ``queries`` is either a list of texts (embedded with the toy embedder) or a
    matrix of query vectors.
    """
    space = engine.config.text_image
    min_dims = engine.config.min_dims if min_dims is None else min_dims
    if isinstance(queries, np.ndarray):
        vectors = [np.asarray(v, dtype=np.float64) for v in queries]
    else:
        vectors = list(engine.query_vectors(t, [space.name])[space.name] for t in queries)
    overlaps = []
    for q in vectors:
        q = q / np.linalg.norm(q)
        cand, _, _ = engine.sparse_index.match_arrays(sparsify(DenseEmbedding(space.name, q), space), min_dims)
        approx = _dense_top(engine, q, cand, k)
        exact = _dense_top(engine, q, None, k)
        overlaps.append(len(np.intersect1d(approx, exact)) / k)
    return {"k": k, "queries": len(overlaps), "mean_overlap": float(np.mean(overlaps)) if overlaps else float("nan"), "per_query": overlaps}


@dataclass
class LatencyReport:
    doc_count: int
    sparse: dict[str, float]
    dense: dict[str, float]
    sparse_candidates: list[tuple[int, ...]]
    dense_candidates: list[tuple[int, ...]]

    @property
    def ratio(self) -> float:
        """How many times slower the exhaustive scan is at p50."""
        return self.dense["p50"] / self.sparse["p50"]

    def to_dict(self) -> dict[str, Any]:
        return {"doc_count": self.doc_count, "sparse_ms": self.sparse, "dense_ms": self.dense, "p50_ratio": self.ratio}


def latency_bench(
    engine: SearchEngine, queries: Sequence[str], repeats: int = 1, depth: int | None = None, warmup: int = 2
) -> LatencyReport:
    """Time the sparse recall path against the exhaustive dense scan.

    The sparse path is query sparsification plus inverted-index match; the dense
    path is the exact blended scan that long queries use, keeping the top
    ``depth`` (rescore depth by default).
    """
    ti, it = engine.config.text_image_space, engine.config.intent_space
    space = engine.config.text_image
    depth = engine.config.rescore.depth if depth is None else depth
    vectors = [engine.query_vectors(q, [ti, it]) for q in queries]
    filters = FilterSpec()

    def sparse_path(qv: dict[str, np.ndarray]) -> np.ndarray:
        q_sparse = sparsify(DenseEmbedding(ti, qv[ti]), space)
        return engine.sparse_index.match_arrays(q_sparse, engine.config.min_dims)[0]

    def dense_path(qv: dict[str, np.ndarray]) -> np.ndarray:
        return engine.long_query_scan_arrays(qv, filters, depth)[0]

    for qv in vectors[:warmup]:
        sparse_path(qv)
        dense_path(qv)
    timings: dict[str, list[float]] = {"sparse": [], "dense": []}
    found: dict[str, list[tuple[int, ...]]] = {"sparse": [], "dense": []}
    for _ in range(repeats):
        for qv in vectors:
            for name, fn in (("sparse", sparse_path), ("dense", dense_path)):
                t0 = time.perf_counter()
                docs = fn(qv)
                timings[name].append((time.perf_counter() - t0) * 1000.0)
                if len(found[name]) < len(vectors):
                    found[name].append(tuple(int(d) for d in docs))
    return LatencyReport(
        len(engine),
        percentile_summary(timings["sparse"]),
        percentile_summary(timings["dense"]),
        found["sparse"],
        found["dense"],
    )
