"""Corpus ingestion: validate records, fill in missing embeddings, build every index."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .ckg import IntentGraph
from .config import EngineConfig
from .embedding import SparseEmbedding, sparsify_block, toy_embed_many
from .errors import ConfigError, RecordError
from .keyword_index import KeywordIndex
from .pipeline import SearchEngine
from .records import TEXT_FIELDS, DocAttributes, TemplateRecord, iter_jsonl, parse_record
from .sparse_index import SparseIndex
from .text import tokenize

log = logging.getLogger(__name__)

SPARSIFY_CHUNK = 2048
EMBED_CHUNK = 16384


@dataclass
class BuildReport:
    indexed: int = 0
    errors: list[dict] = field(default_factory=list)
    generated_dense: dict[str, int] = field(default_factory=dict)
    generated_sparse: int = 0
    unresolved_intents: int = 0
    digest: str | None = None

    def to_dict(self) -> dict:
        return {
            "indexed": self.indexed,
            "error_count": len(self.errors),
            "errors": self.errors,
            "generated_dense": dict(self.generated_dense),
            "generated_sparse": self.generated_sparse,
            "unresolved_intents": self.unresolved_intents,
            "digest": self.digest,
        }


class IndexBuilder:
    """Single-writer accumulator; :meth:`build` produces an immutable :class:`SearchEngine`."""

    def __init__(self, config: EngineConfig | None = None, graph: IntentGraph | None = None) -> None:
        self.config = config or EngineConfig()
        self.graph = graph if graph is not None else IntentGraph.fixture()
        self.records: dict[str, TemplateRecord] = {}
        self.report = BuildReport()

    def add(self, record: TemplateRecord, line: int | None = None) -> None:
        """Validate and stage one record. Raises RecordError (skip) or ConfigError (fatal)."""
        if record.id in self.records:
            raise RecordError("id", f"duplicate id {record.id!r}", line)
        for space_name, vec in record.embeddings.items():
            try:
                space = self.config.space(space_name)
            except ConfigError:
                raise ConfigError(f"line {line}: embedding space {space_name!r} is not configured") from None
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (space.dense_dim,):
                raise RecordError("embeddings", f"space {space_name!r} expects {space.dense_dim} dims, got {vec.shape[0]}", line)
            if not np.any(vec):
                raise RecordError("embeddings", f"space {space_name!r}: zero vector", line)
        if record.sparse_embedding is not None:
            space = self.config.text_image
            try:
                emb = SparseEmbedding(space.name, record.sparse_embedding["dims"], record.sparse_embedding["weights"])
                emb.check_space(space)
            except ValueError as exc:
                raise RecordError("sparse_embedding", str(exc), line) from None
        if not tokenize(record.embedding_text()):
            raise RecordError("title", "no tokens after normalization", line)
        self.records[record.id] = record

    def add_many(self, records: Iterable[TemplateRecord]) -> None:
        for rec in records:
            self.add(rec)

    def _dense_matrix(self, records: list[TemplateRecord], space_name: str) -> np.ndarray:
        space = self.config.space(space_name)
        matrix = np.empty((len(records), space.dense_dim), dtype=self.config.dense_dtype)
        missing = []
        for row, rec in enumerate(records):
            vec = rec.embeddings.get(space_name)
            if vec is None:
                missing.append(row)
            else:
                vec = np.asarray(vec, dtype=np.float64)
                matrix[row] = vec / np.linalg.norm(vec)
        for start in range(0, len(missing), EMBED_CHUNK):
            rows = missing[start : start + EMBED_CHUNK]
            matrix[rows] = toy_embed_many([records[r].embedding_text() for r in rows], space)
        self.report.generated_dense[space_name] = len(missing)
        return matrix

    def build(self) -> SearchEngine:
        cfg = self.config
        records = [self.records[k] for k in sorted(self.records)]
        dense = {s.name: self._dense_matrix(records, s.name) for s in cfg.spaces}

        ti = cfg.text_image
        sparse_index = SparseIndex(ti.name, ti.sparse_dim)
        missing = [i for i, r in enumerate(records) if r.sparse_embedding is None]
        missing_set = set(missing)
        for i, rec in enumerate(records):
            if i not in missing_set:
                sp = rec.sparse_embedding
                sparse_index.insert(i, SparseEmbedding(ti.name, sp["dims"], sp["weights"]))
        for start in range(0, len(missing), SPARSIFY_CHUNK):
            rows = missing[start : start + SPARSIFY_CHUNK]
            sparse_index.insert_block(np.asarray(rows), *sparsify_block(dense[ti.name][rows], ti))
        self.report.generated_sparse = len(missing)
        sparse_index.freeze()

        attributes = DocAttributes.from_records(records)
        keyword = KeywordIndex(cfg.bm25)
        for i, rec in enumerate(records):
            keyword.add(i, {name: rec.field_text(name) for name in TEXT_FIELDS})
        keyword.freeze(attributes)

        doc_intents = []
        for rec in records:
            resolved = []
            for name in rec.intents:
                node = self.graph.resolve(name)
                if node is None:
                    self.report.unresolved_intents += 1
                    node = " ".join(tokenize(name))
                if node:
                    resolved.append(node)
            doc_intents.append(resolved)

        # The engine keeps metadata only; vectors live in the dense matrices.
        stripped = [
            TemplateRecord(**{**{f: getattr(r, f) for f in TemplateRecord.__slots__}, "embeddings": {}, "sparse_embedding": None})
            for r in records
        ]
        engine = SearchEngine(cfg, self.graph, stripped, dense, sparse_index, keyword, doc_intents)
        self.report.indexed = len(records)
        return engine


def ingest(corpus_path: str | Path, config: EngineConfig | None = None, graph: IntentGraph | None = None) -> tuple[SearchEngine, BuildReport]:
    """Read a JSONL corpus, skipping (and reporting) invalid records, and build the engine."""
    builder = IndexBuilder(config, graph)
    for lineno, data in iter_jsonl(corpus_path):
        try:
            if isinstance(data, RecordError):
                raise data
            builder.add(parse_record(data, lineno), lineno)
        except RecordError as exc:
            builder.report.errors.append({"line": lineno, "field": exc.field, "message": str(exc)})
            log.warning("skipping record: %s", exc)
    engine = builder.build()
    return engine, builder.report
