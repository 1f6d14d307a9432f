"""Field-boosted BM25 keyword recall over template text and metadata."""

from __future__ import annotations

import math
from array import array
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import IndexFrozen
from .records import DocAttributes, FilterSpec
from .text import tokenize

__all__ = ["BM25Params", "KeywordIndex", "tokenize"]

DEFAULT_BOOSTS = {"title": 2.0, "topics": 1.5, "mood": 1.0, "style": 1.0}


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75
    boosts: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BOOSTS))

    def __post_init__(self) -> None:
        if self.k1 < 0 or not 0 <= self.b <= 1:
            raise ValueError("BM25 needs k1 >= 0 and 0 <= b <= 1")
        if not self.boosts or any(v <= 0 for v in self.boosts.values()):
            raise ValueError("field boosts must be > 0")

    def to_dict(self) -> dict:
        return {"k1": self.k1, "b": self.b, "boosts": dict(self.boosts)}


def bm25_idf(n_docs: int, df: int) -> float:
    """Non-negative (Lucene-style) inverse document frequency."""
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


class _FieldPostings:
    def __init__(self) -> None:
        self.terms: dict[str, int] = {}
        self._term = array("q")
        self._doc = array("q")
        self._tf = array("q")
        self._lengths = array("q")
        self.offsets: np.ndarray | None = None
        self.doc_ids: np.ndarray | None = None
        self.tfs: np.ndarray | None = None
        self.lengths: np.ndarray | None = None

    def add(self, doc_id: int, tokens: Sequence[str]) -> None:
        self._lengths.append(len(tokens))
        for tok, tf in Counter(tokens).items():
            tid = self.terms.setdefault(tok, len(self.terms))
            self._term.append(tid)
            self._doc.append(doc_id)
            self._tf.append(tf)

    def freeze(self) -> None:
        term = np.frombuffer(self._term, dtype=np.int64) if len(self._term) else np.zeros(0, np.int64)
        doc = np.frombuffer(self._doc, dtype=np.int64) if len(self._doc) else np.zeros(0, np.int64)
        tf = np.frombuffer(self._tf, dtype=np.int64) if len(self._tf) else np.zeros(0, np.int64)
        order = np.lexsort((doc, term))
        self.doc_ids = doc[order].copy()
        self.tfs = tf[order].copy()
        self.offsets = np.zeros(len(self.terms) + 1, dtype=np.int64)
        if term.size:
            np.cumsum(np.bincount(term, minlength=len(self.terms)), out=self.offsets[1:])
        self.lengths = np.frombuffer(self._lengths, dtype=np.int64).copy() if len(self._lengths) else np.zeros(0, np.int64)
        self._term, self._doc, self._tf, self._lengths = array("q"), array("q"), array("q"), array("q")

    def postings(self, token: str) -> tuple[np.ndarray, np.ndarray]:
        tid = self.terms.get(token)
        if tid is None:
            return self.doc_ids[:0], self.tfs[:0]
        lo, hi = self.offsets[tid], self.offsets[tid + 1]
        return self.doc_ids[lo:hi], self.tfs[lo:hi]

    def to_arrays(self) -> dict[str, np.ndarray]:
        vocab = sorted(self.terms, key=self.terms.__getitem__)
        return {
            "vocab": np.array(vocab, dtype=np.str_),
            "offsets": self.offsets,
            "doc_ids": self.doc_ids,
            "tfs": self.tfs,
            "lengths": self.lengths,
        }

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "_FieldPostings":
        fp = cls()
        fp.terms = {str(t): i for i, t in enumerate(arrays["vocab"].tolist())}
        fp.offsets = np.asarray(arrays["offsets"], dtype=np.int64)
        fp.doc_ids = np.asarray(arrays["doc_ids"], dtype=np.int64)
        fp.tfs = np.asarray(arrays["tfs"], dtype=np.int64)
        fp.lengths = np.asarray(arrays["lengths"], dtype=np.int64)
        if fp.offsets.size != len(fp.terms) + 1 or fp.offsets[-1] != fp.doc_ids.size:
            raise ValueError("keyword postings disagree with vocabulary")
        return fp


class KeywordIndex:
    """Per-field inverted index; the document score is the boost-weighted sum of per-field BM25.

    Document ids must be inserted densely as ``0, 1, 2, ...``.
    """

    def __init__(self, params: BM25Params | None = None) -> None:
        self.params = params or BM25Params()
        self.fields = {name: _FieldPostings() for name in self.params.boosts}
        self.n_docs = 0
        self.attributes: DocAttributes | None = None
        self._frozen = False

    def add(self, doc_id: int, fields: Mapping[str, str | Sequence[str]]) -> None:
        if self._frozen:
            raise IndexFrozen("keyword index is frozen")
        if doc_id != self.n_docs:
            raise ValueError(f"documents must be added in order; expected id {self.n_docs}, got {doc_id}")
        for name, postings in self.fields.items():
            value = fields.get(name, "")
            text = value if isinstance(value, str) else " ".join(value)
            postings.add(doc_id, tokenize(text))
        self.n_docs += 1

    def freeze(self, attributes: DocAttributes | None = None) -> "KeywordIndex":
        if self._frozen:
            return self
        for postings in self.fields.values():
            postings.freeze()
        if attributes is not None and len(attributes) != self.n_docs:
            raise ValueError("attribute table size differs from document count")
        self.attributes = attributes
        self._frozen = True
        return self

    def score_all(self, query_tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Dense BM25 score vector over all documents plus a matched-any-token mask."""
        self.freeze()
        scores = np.zeros(self.n_docs)
        matched = np.zeros(self.n_docs, dtype=bool)
        k1, b = self.params.k1, self.params.b
        unique_tokens = list(dict.fromkeys(query_tokens))
        for name, postings in self.fields.items():
            boost = self.params.boosts[name]
            if self.n_docs == 0:
                continue
            avgdl = float(postings.lengths.mean())
            if avgdl == 0.0:
                continue
            for tok in unique_tokens:
                docs, tfs = postings.postings(tok)
                if docs.size == 0:
                    continue
                idf = bm25_idf(self.n_docs, int(docs.size))
                tf = tfs.astype(np.float64)
                norm = k1 * (1.0 - b + b * postings.lengths[docs] / avgdl)
                scores[docs] += boost * idf * (tf * (k1 + 1.0) / (tf + norm))
                matched[docs] = True
        return scores, matched

    def match_arrays(self, query_tokens: Sequence[str], filters: FilterSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Matching doc ids and scores, descending by score, ties by ascending id."""
        scores, matched = self.score_all(query_tokens)
        if filters is not None and not filters.empty:
            if self.attributes is None:
                raise ValueError("index has no attribute table; cannot filter")
            matched &= self.attributes.mask(filters)
        docs = np.flatnonzero(matched)
        s = scores[docs]
        order = np.lexsort((docs, -s))
        return docs[order], s[order]

    def kw_match(self, query_tokens: Sequence[str], filters: FilterSpec | None = None, limit: int | None = None) -> list[tuple[int, float]]:
        if not query_tokens:
            raise ValueError("kw_match needs at least one token")
        docs, scores = self.match_arrays(query_tokens, filters)
        if limit is not None:
            docs, scores = docs[:limit], scores[:limit]
        return [(int(d), float(s)) for d, s in zip(docs, scores)]

    def to_arrays(self) -> dict[str, np.ndarray]:
        self.freeze()
        out: dict[str, np.ndarray] = {}
        for name, postings in self.fields.items():
            for key, arr in postings.to_arrays().items():
                out[f"{name}.{key}"] = arr
        return out

    @classmethod
    def from_arrays(cls, params: BM25Params, n_docs: int, arrays: Mapping[str, np.ndarray], attributes: DocAttributes | None) -> "KeywordIndex":
        index = cls(params)
        for name in index.fields:
            sub = {key.split(".", 1)[1]: arr for key, arr in arrays.items() if key.split(".", 1)[0] == name}
            index.fields[name] = _FieldPostings.from_arrays(sub)
            if index.fields[name].lengths.size != n_docs:
                raise ValueError(f"field {name!r} lengths disagree with document count")
        index.n_docs = n_docs
        index.attributes = attributes
        index._frozen = True
        return index
