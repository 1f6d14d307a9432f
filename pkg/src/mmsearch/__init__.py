"""Hybrid keyword, sparse and dense template search."""

from .ckg import IntentGraph
from .config import EngineConfig
from .embedding import DenseEmbedding, EmbeddingSpace, SparseEmbedding, cosine, sparse_dot, sparsify, toy_embed
from .ingest import IndexBuilder, ingest
from .pipeline import QueryContext, Route, SearchEngine, SearchResponse
from .records import FilterSpec, TemplateRecord
from .snapshot import snapshot_load, snapshot_save
from .sparse_index import SparseIndex
from .supcola import LossConfig, SupColaBatch, supcola_grad, supcola_loss

__version__ = "0.1.0"

__all__ = [
    "DenseEmbedding",
    "EmbeddingSpace",
    "EngineConfig",
    "FilterSpec",
    "IndexBuilder",
    "IntentGraph",
    "LossConfig",
    "QueryContext",
    "Route",
    "SearchEngine",
    "SearchResponse",
    "SparseEmbedding",
    "SparseIndex",
    "SupColaBatch",
    "TemplateRecord",
    "cosine",
    "ingest",
    "snapshot_load",
    "snapshot_save",
    "sparse_dot",
    "sparsify",
    "supcola_grad",
    "supcola_loss",
    "toy_embed",
]
