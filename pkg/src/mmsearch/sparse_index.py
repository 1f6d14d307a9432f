"""Inverted index over sparse-embedding dimensions.

Each dimension of the sparse space acts like a keyword: its posting list holds
the documents with a positive weight on it. A query retrieves documents that
share at least ``min_dims`` dimensions with it and scores them by the
query-weighted sum of their shared weights.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .embedding import SparseEmbedding
from .errors import DuplicateDocument, IndexFrozen, SpaceMismatch

DEFAULT_MIN_DIMS = 2


class SparseMatch(NamedTuple):
    doc_id: int
    matched_dims: int
    score: float


@dataclass(frozen=True)
class PostingList:
    dimension: int
    doc_ids: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return int(self.doc_ids.size)


class SparseIndex:
    """Build-then-freeze inverted index for one sparse embedding space.

    Inserts accumulate into flat append-only buffers; :meth:`freeze` sorts them
    into CSR form (``offsets`` per dimension, postings sorted by doc id). A
    frozen index is read-only and safe to share between threads.
    """

    def __init__(self, space: str, sparse_dim: int) -> None:
        self.space = space
        self.sparse_dim = int(sparse_dim)
        self._dims = array("q")
        self._docs = array("q")
        self._weights = array("d")
        self._doc_set: set[int] = set()
        self._frozen = False
        self.offsets: np.ndarray | None = None
        self.doc_ids: np.ndarray | None = None
        self.weights: np.ndarray | None = None

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def doc_count(self) -> int:
        return len(self._doc_set)

    def insert(self, doc_id: int, emb: SparseEmbedding) -> None:
        if self._frozen:
            raise IndexFrozen("sparse index is frozen")
        if emb.space != self.space:
            raise SpaceMismatch(f"index is for {self.space!r}, embedding is in {emb.space!r}")
        doc_id = int(doc_id)
        if doc_id in self._doc_set:
            raise DuplicateDocument(f"document {doc_id} already indexed")
        if emb.dims.size and emb.dims[-1] >= self.sparse_dim:
            raise ValueError(f"dimension {int(emb.dims[-1])} outside sparse_dim {self.sparse_dim}")
        self._doc_set.add(doc_id)
        n = emb.dims.size
        self._dims.extend(emb.dims.tolist())
        self._docs.extend([doc_id] * n)
        self._weights.extend(emb.weights.tolist())

    def insert_block(self, doc_ids: np.ndarray, counts: np.ndarray, dims: np.ndarray, weights: np.ndarray) -> None:
        """Bulk insert of many documents in CSR form, as produced by ``sparsify_block``."""
        if self._frozen:
            raise IndexFrozen("sparse index is frozen")
        doc_ids = np.asarray(doc_ids, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if doc_ids.shape != counts.shape or counts.sum() != len(dims) or len(dims) != len(weights):
            raise ValueError("block arrays disagree in length")
        ids = doc_ids.tolist()
        if len(set(ids)) != len(ids) or not self._doc_set.isdisjoint(ids):
            raise DuplicateDocument("block repeats an indexed document")
        dims = np.asarray(dims, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if dims.size and (dims.min() < 0 or dims.max() >= self.sparse_dim):
            raise ValueError(f"dimension outside sparse_dim {self.sparse_dim}")
        if weights.size and not (np.all(np.isfinite(weights)) and np.all(weights > 0)):
            raise ValueError("sparse weights must be finite and > 0")
        self._doc_set.update(ids)
        self._dims.frombytes(dims.tobytes())
        self._docs.frombytes(np.repeat(doc_ids, counts).tobytes())
        self._weights.frombytes(weights.tobytes())

    def freeze(self) -> "SparseIndex":
        if self._frozen:
            return self
        dims = np.frombuffer(self._dims, dtype=np.int64) if len(self._dims) else np.zeros(0, np.int64)
        docs = np.frombuffer(self._docs, dtype=np.int64) if len(self._docs) else np.zeros(0, np.int64)
        weights = np.frombuffer(self._weights, dtype=np.float64) if len(self._weights) else np.zeros(0)
        order = np.lexsort((docs, dims))
        self.doc_ids = docs[order].copy()
        self.weights = weights[order].copy()
        counts = np.bincount(dims, minlength=self.sparse_dim) if dims.size else np.zeros(self.sparse_dim, np.int64)
        self.offsets = np.zeros(self.sparse_dim + 1, dtype=np.int64)
        np.cumsum(counts, out=self.offsets[1:])
        for arr in (self.doc_ids, self.weights, self.offsets):
            arr.flags.writeable = False
        self._dims = array("q")
        self._docs = array("q")
        self._weights = array("d")
        self._frozen = True
        return self

    def posting_list(self, dimension: int) -> PostingList:
        self.freeze()
        lo, hi = self.offsets[dimension], self.offsets[dimension + 1]
        return PostingList(int(dimension), self.doc_ids[lo:hi], self.weights[lo:hi])

    def match_arrays(self, q: SparseEmbedding, min_dims: int = DEFAULT_MIN_DIMS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unbounded match as parallel arrays ``(doc_ids, matched_dims, scores)``.

        Ordered by descending score, then ascending doc id.
        """
        if q.space != self.space:
            raise SpaceMismatch(f"index is for {self.space!r}, query is in {q.space!r}")
        if min_dims < 1:
            raise ValueError("min_dims must be >= 1")
        self.freeze()
        empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        docs_parts, contrib_parts = [], []
        for dim, qw in zip(q.dims.tolist(), q.weights.tolist()):
            if dim >= self.sparse_dim:
                continue
            lo, hi = self.offsets[dim], self.offsets[dim + 1]
            if lo == hi:
                continue
            docs_parts.append(self.doc_ids[lo:hi])
            contrib_parts.append(qw * self.weights[lo:hi])
        if not docs_parts:
            return empty
        docs = np.concatenate(docs_parts)
        contrib = np.concatenate(contrib_parts)
        uniq, inverse = np.unique(docs, return_inverse=True)
        counts = np.bincount(inverse, minlength=uniq.size)
        # bincount accumulates in array order, i.e. ascending query dimension per doc.
        scores = np.bincount(inverse, weights=contrib, minlength=uniq.size)
        keep = counts >= min_dims
        uniq, counts, scores = uniq[keep], counts[keep], scores[keep]
        order = np.lexsort((uniq, -scores))
        return uniq[order], counts[order], scores[order]

    def match(self, q: SparseEmbedding, min_dims: int = DEFAULT_MIN_DIMS, limit: int | None = None) -> list[SparseMatch]:
        if limit is not None and limit < 1:
            raise ValueError("limit must be positive")
        docs, counts, scores = self.match_arrays(q, min_dims)
        if limit is not None:
            docs, counts, scores = docs[:limit], counts[:limit], scores[:limit]
        return [SparseMatch(int(d), int(c), float(s)) for d, c, s in zip(docs, counts, scores)]

    def doc_embedding(self, doc_id: int) -> SparseEmbedding:
        """Reassemble one document's sparse embedding from the posting lists (slow; diagnostics only)."""
        self.freeze()
        hits = np.flatnonzero(self.doc_ids == doc_id)
        dims = np.searchsorted(self.offsets, hits, side="right") - 1
        return SparseEmbedding(self.space, dims, self.weights[hits])

    def to_arrays(self) -> dict[str, np.ndarray]:
        self.freeze()
        return {
            "offsets": np.asarray(self.offsets),
            "doc_ids": np.asarray(self.doc_ids),
            "weights": np.asarray(self.weights),
            "documents": np.array(sorted(self._doc_set), dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, space: str, sparse_dim: int, arrays: dict[str, np.ndarray]) -> "SparseIndex":
        index = cls(space, sparse_dim)
        offsets = np.asarray(arrays["offsets"], dtype=np.int64)
        if offsets.shape != (sparse_dim + 1,) or offsets[0] != 0 or np.any(np.diff(offsets) < 0):
            raise ValueError("malformed posting-list offsets")
        doc_ids = np.asarray(arrays["doc_ids"], dtype=np.int64)
        weights = np.asarray(arrays["weights"], dtype=np.float64)
        if doc_ids.shape != weights.shape or offsets[-1] != doc_ids.size:
            raise ValueError("posting arrays disagree with offsets")
        index.offsets, index.doc_ids, index.weights = offsets, doc_ids, weights
        for arr in (index.offsets, index.doc_ids, index.weights):
            arr.flags.writeable = False
        index._doc_set = set(np.asarray(arrays["documents"], dtype=np.int64).tolist())
        index._frozen = True
        return index
