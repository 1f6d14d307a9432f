"""Embedding spaces, dense/sparse vector types, similarity and sparsification.

Dense vectors are plain float arrays tagged with the name of the space they
live in. Sparse vectors are the keyword-like form used by the inverted index:
a short, strictly increasing list of dimensions with positive weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyText, SpaceMismatch, ZeroVector
from .text import tokenize

# Domain-separates toy-embedder token vectors from the sparsifier projection.
_TOY_EMBED_SALT = b"mmsearch.toy_embed.v1"


@dataclass(frozen=True)
class EmbeddingSpace:
    name: str
    dense_dim: int = 2048
    sparse_dim: int = 8192
    sparsifier_seed: int = 0
    sparsifier_top_k: int = 16

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("embedding space needs a name")
        if self.dense_dim < 1 or self.sparse_dim < 1 or self.sparsifier_top_k < 1:
            raise ValueError(f"space {self.name!r}: dimensions and top_k must be positive")
        if self.sparse_dim < self.dense_dim:
            raise ValueError(f"space {self.name!r}: sparse_dim must be >= dense_dim")
        if self.sparsifier_top_k > self.sparse_dim:
            raise ValueError(f"space {self.name!r}: sparsifier_top_k must be <= sparse_dim")
        if not 0 <= self.sparsifier_seed < 2**64:
            raise ValueError(f"space {self.name!r}: sparsifier_seed must fit in 64 bits")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dense_dim": self.dense_dim,
            "sparse_dim": self.sparse_dim,
            "sparsifier_seed": self.sparsifier_seed,
            "sparsifier_top_k": self.sparsifier_top_k,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EmbeddingSpace":
        return cls(**{k: data[k] for k in ("name", "dense_dim", "sparse_dim", "sparsifier_seed", "sparsifier_top_k") if k in data})


@dataclass(frozen=True, eq=False)
class DenseEmbedding:
    space: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("dense embedding must be a 1-d vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("dense embedding contains non-finite values")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def check_space(self, space: EmbeddingSpace) -> None:
        if self.space != space.name:
            raise SpaceMismatch(f"embedding is in {self.space!r}, expected {space.name!r}")
        if self.dim != space.dense_dim:
            raise ValueError(f"embedding has {self.dim} dims, space {space.name!r} expects {space.dense_dim}")

    def normalized(self) -> "DenseEmbedding":
        norm = float(np.linalg.norm(self.values))
        if norm == 0.0:
            raise ZeroVector("cannot normalize a zero vector")
        return DenseEmbedding(self.space, self.values / norm)


@dataclass(frozen=True, eq=False)
class SparseEmbedding:
    """Dimension -> positive weight, stored as two parallel arrays sorted by dimension."""

    space: str
    dims: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        dims = np.asarray(self.dims, dtype=np.int64).reshape(-1).copy()
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1).copy()
        if dims.shape != weights.shape:
            raise ValueError("dims and weights must have the same length")
        if dims.size and (dims[0] < 0 or np.any(np.diff(dims) <= 0)):
            raise ValueError("sparse dimensions must be non-negative and strictly increasing")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("sparse weights must be finite and > 0")
        dims.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_dict(cls, space: str, entries: Mapping[int, float]) -> "SparseEmbedding":
        items = sorted(entries.items())
        return cls(space, [d for d, _ in items], [w for _, w in items])

    def to_dict(self) -> dict[int, float]:
        return {int(d): float(w) for d, w in zip(self.dims, self.weights)}

    def __len__(self) -> int:
        return int(self.dims.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseEmbedding):
            return NotImplemented
        return (
            self.space == other.space
            and np.array_equal(self.dims, other.dims)
            and np.array_equal(self.weights, other.weights)
        )

    def check_space(self, space: EmbeddingSpace) -> None:
        if self.space != space.name:
            raise SpaceMismatch(f"embedding is in {self.space!r}, expected {space.name!r}")
        if self.dims.size and self.dims[-1] >= space.sparse_dim:
            raise ValueError(f"sparse dimension {int(self.dims[-1])} out of range for {space.name!r}")
        if len(self) > space.sparsifier_top_k:
            raise ValueError(f"sparse embedding has {len(self)} entries, space allows {space.sparsifier_top_k}")


def cosine(a: DenseEmbedding, b: DenseEmbedding) -> float:
    if a.space != b.space:
        raise SpaceMismatch(f"cosine across spaces {a.space!r} and {b.space!r}")
    if a.dim != b.dim:
        raise ValueError("dense embeddings differ in length")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine is undefined for a zero vector")
    value = float(np.dot(a.values, b.values)) / (na * nb)
    return min(1.0, max(-1.0, value))


def sparse_dot(q: SparseEmbedding, d: SparseEmbedding) -> tuple[int, float]:
    """Number of shared dimensions and the query-weighted sum over them."""
    if q.space != d.space:
        raise SpaceMismatch(f"sparse_dot across spaces {q.space!r} and {d.space!r}")
    shared, qi, di = np.intersect1d(q.dims, d.dims, assume_unique=True, return_indices=True)
    score = 0.0
    # Ascending-dimension accumulation, the same order the inverted index uses.
    for a, b in zip(q.weights[qi], d.weights[di]):
        score += float(a) * float(b)
    return int(shared.size), score


@lru_cache(maxsize=4)
def projection_matrix(dense_dim: int, sparse_dim: int, seed: int, dtype: str = "float64") -> np.ndarray:
    """Seeded Gaussian projection from the dense space to the overcomplete sparse space."""
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((dense_dim, sparse_dim)).astype(dtype, copy=False)
    matrix.flags.writeable = False
    return matrix


def _space_projection(space: EmbeddingSpace, dtype: np.dtype) -> np.ndarray:
    return projection_matrix(space.dense_dim, space.sparse_dim, space.sparsifier_seed, np.dtype(dtype).name)


def _top_k_positive(row: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (ascending) and values of the k largest strictly positive entries.

    Ties at the cut are resolved toward the lower dimension index.
    """
    positive = np.flatnonzero(row > 0)
    if positive.size <= k:
        return positive, row[positive]
    values = row[positive]
    kth = np.partition(values, values.size - k)[values.size - k]
    above = positive[values > kth]
    tied = positive[values == kth][: k - above.size]
    dims = np.sort(np.concatenate([above, tied]))
    return dims, row[dims]


def sparsify_block(vectors: np.ndarray, space: EmbeddingSpace, chunk_size: int = 2048) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sparsify each row of ``vectors`` in CSR form ``(counts, dims, weights)``.

    Project, rectify, keep the top_k largest positive entries. Rows are
    processed in chunks so the projected block never exceeds
    ``chunk_size x sparse_dim`` floats.
    """
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[1] != space.dense_dim:
        raise ValueError(f"expected an (n, {space.dense_dim}) matrix")
    if vectors.dtype not in (np.float32, np.float64):
        vectors = vectors.astype(np.float64)
    if np.any(~np.any(vectors != 0, axis=1)):
        raise ZeroVector("cannot sparsify a zero vector")
    projection = _space_projection(space, vectors.dtype)
    k = space.sparsifier_top_k
    counts, dims, weights = [], [], []
    for start in range(0, vectors.shape[0], chunk_size):
        block = vectors[start : start + chunk_size] @ projection
        m, width = block.shape
        if k < width:
            kth = np.partition(block, width - k, axis=1)[:, width - k]
            keep = block >= kth[:, None]
            # Rows with ties at the cut or too few positives take the exact per-row path.
            clean = (keep.sum(axis=1) == k) & (kth > 0)
        else:
            keep = block > 0
            clean = np.ones(m, dtype=bool)
        keep &= clean[:, None]
        row_counts = keep.sum(axis=1)
        rows, cols = np.nonzero(keep)
        vals = block[rows, cols].astype(np.float64)
        if clean.all():
            counts.append(row_counts)
            dims.append(cols)
            weights.append(vals)
            continue
        starts = np.concatenate([[0], np.cumsum(row_counts)])
        for r in range(m):
            if clean[r]:
                d, w = cols[starts[r] : starts[r + 1]], vals[starts[r] : starts[r + 1]]
            else:
                d, w = _top_k_positive(block[r], k)
                w = w.astype(np.float64)
            counts.append(np.array([d.size]))
            dims.append(d)
            weights.append(w)
    if not counts:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return (
        np.concatenate(counts).astype(np.int64),
        np.concatenate(dims).astype(np.int64),
        np.concatenate(weights),
    )


def sparsify_many(vectors: np.ndarray, space: EmbeddingSpace, chunk_size: int = 2048) -> list[SparseEmbedding]:
    counts, dims, weights = sparsify_block(vectors, space, chunk_size)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [SparseEmbedding(space.name, dims[a:b], weights[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def sparsify(v: DenseEmbedding, space: EmbeddingSpace) -> SparseEmbedding:
    v.check_space(space)
    return sparsify_many(v.values[None, :], space)[0]


def _token_seed(space: EmbeddingSpace, token: str) -> int:
    h = hashlib.blake2b(digest_size=8, key=_TOY_EMBED_SALT)
    h.update(space.name.encode("utf-8"))
    h.update(b"\x00")
    h.update(token.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


@lru_cache(maxsize=4096)
def _token_vector(space: EmbeddingSpace, token: str) -> np.ndarray:
    vec = np.random.default_rng(_token_seed(space, token)).standard_normal(space.dense_dim)
    vec.flags.writeable = False
    return vec


def _toy_vector(tokens: Sequence[str], space: EmbeddingSpace) -> np.ndarray:
    total = np.zeros(space.dense_dim)
    for tok in tokens:
        total += _token_vector(space, tok)
    norm = float(np.linalg.norm(total))
    if norm == 0.0:
        raise ZeroVector("token vectors cancelled out")
    return total / norm


def toy_embed(text: str, space: EmbeddingSpace) -> DenseEmbedding:
    """Deterministic bag-of-hashed-tokens embedding, L2-normalized.

    Each normalized token maps to a fixed Gaussian vector seeded by a keyed
    hash of (space name, token); the text vector is their sum. Texts that
    share tokens are therefore closer in expectation.
    """
    tokens = tokenize(text)
    if not tokens:
        raise EmptyText("text is empty after normalization")
    return DenseEmbedding(space.name, _toy_vector(tokens, space))


def toy_embed_many(texts: Iterable[str], space: EmbeddingSpace, dtype: str = "float64") -> np.ndarray:
    """Row-wise :func:`toy_embed`; each distinct token's vector is drawn once."""
    vocab: dict[str, int] = {}
    ids: list[int] = []
    lengths: list[int] = []
    for text in texts:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText(f"text {text!r} is empty after normalization")
        ids.extend(vocab.setdefault(t, len(vocab)) for t in tokens)
        lengths.append(len(tokens))
    out = np.zeros((len(lengths), space.dense_dim), dtype=dtype)
    if not lengths:
        return out
    table = np.empty((len(vocab), space.dense_dim))
    for tok, i in vocab.items():
        table[i] = np.random.default_rng(_token_seed(space, tok)).standard_normal(space.dense_dim)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    ids_arr = np.asarray(ids)
    # Summing in token order matches _toy_vector's accumulation exactly.
    total = np.zeros((len(lengths), space.dense_dim))
    for j in range(max(lengths)):
        has = np.flatnonzero(np.asarray(lengths) > j)
        total[has] += table[ids_arr[starts[has] + j]]
    # Per-row norm calls keep the result bitwise equal to toy_embed.
    norms = np.array([np.linalg.norm(row) for row in total])
    if np.any(norms == 0):
        raise ZeroVector("token vectors cancelled out")
    out[:] = total / norms[:, None]
    return out
