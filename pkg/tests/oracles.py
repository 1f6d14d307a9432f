"""Reference implementations that bypass the engine's indexes.

Each oracle recomputes a result from first principles (Counters, dense loops,
explicit projections) so the tests compare two independent code paths.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from itertools import product

import numpy as np
import scipy.sparse as sp

K1, B = 1.2, 0.75
BOOSTS = {"title": 2.0, "topics": 1.5, "mood": 1.0, "style": 1.0}


def words(text: str) -> list[str]:
    text = text.lower().replace("'", "").replace("’", "")
    return re.sub(r"[^\w\s]+", " ", text).split()


# -- sparse --------------------------------------------------------------


def sparse_matrix(embeddings: list[dict[int, float]], n_dims: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for r, emb in enumerate(embeddings):
        for d, w in sorted(emb.items()):
            rows.append(r)
            cols.append(d)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(embeddings), n_dims))


def brute_sparse_match(matrix: sp.csr_matrix, query: dict[int, float], min_dims: int) -> list[tuple[int, int, float]]:
    """(doc, matched dims, score) for docs sharing >= min_dims dims; score desc, doc asc."""
    q = np.zeros(matrix.shape[1])
    for d, w in query.items():
        q[d] = w
    counts = (matrix > 0).astype(np.int64) @ (q > 0).astype(np.int64)
    scores = matrix @ q
    hits = [(int(i), int(counts[i]), float(scores[i])) for i in np.flatnonzero(counts >= min_dims)]
    return sorted(hits, key=lambda h: (-h[2], h[0]))


def explicit_sparsify(vectors: np.ndarray, dense_dim: int, sparse_dim: int, seed: int, top_k: int) -> list[dict[int, float]]:
    """Projection with an explicitly regenerated matrix; rectify; top_k by value."""
    proj = np.random.default_rng(seed).standard_normal((dense_dim, sparse_dim))
    out = []
    for row in np.atleast_2d(vectors) @ proj:
        order = sorted((i for i in range(sparse_dim) if row[i] > 0), key=lambda i: (-row[i], i))[:top_k]
        out.append({i: float(row[i]) for i in sorted(order)})
    return out


# -- keyword -------------------------------------------------------------


def bm25_scores(docs: list[dict[str, str]], query: str) -> dict[int, float]:
    """Field-boosted BM25 over every doc that contains at least one query token."""
    q_tokens = list(dict.fromkeys(words(query)))
    n = len(docs)
    scores: dict[int, float] = {}
    for field, boost in BOOSTS.items():
        toks = [words(d.get(field, "")) for d in docs]
        total = sum(len(t) for t in toks)
        if n == 0 or total == 0:
            continue
        avgdl = total / n
        tfs = [Counter(t) for t in toks]
        for tok in q_tokens:
            df = sum(1 for c in tfs if tok in c)
            if df == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            for i, c in enumerate(tfs):
                if tok in c:
                    tf = c[tok]
                    norm = K1 * (1 - B + B * len(toks[i]) / avgdl)
                    scores[i] = scores.get(i, 0.0) + boost * idf * (tf * (K1 + 1) / (tf + norm))
    return scores


# -- ranking -------------------------------------------------------------


def minmax(values: list[float]) -> list[float]:
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0 if hi > 0 else 0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def rank_candidates(
    cands: list[int],
    bm25: dict[int, float],
    sparse_only: set[int],
    days: np.ndarray,
    as_of: int,
    locale: np.ndarray,
    engagement: np.ndarray,
    sims: dict[int, float],
    embed_weight: float = 2 / 3,
    depth: int = 10_000,
) -> list[int]:
    """First round, then rescoring of the top ``depth``; ties by first round, then id."""
    if not cands:
        return []
    bm = minmax([bm25.get(c, 0.0) for c in cands])
    top = max(float(engagement[c]) for c in cands)
    fr = {}
    for c, b in zip(cands, bm):
        age = max(as_of - int(days[c]), 0)
        behavior = math.log1p(engagement[c]) / math.log1p(top) if top > 0 else 0.0
        s = 0.5 * b + 0.2 * 2.0 ** (-age / 180.0) + 0.1 * float(locale[c]) + 0.2 * behavior
        fr[c] = s * 0.8 if c in sparse_only else s
    first = sorted(cands, key=lambda c: (-fr[c], c))
    head, tail = first[:depth], first[depth:]
    frn = dict(zip(cands, minmax([fr[c] for c in cands])))
    final = {c: embed_weight * sims[c] + (1 - embed_weight) * frn[c] for c in head}
    return sorted(head, key=lambda c: (-final[c], -fr[c], c)) + tail


def recover(query_intents: set[str], doc_intents: list[set[str]], exclude: set[int], allowed, limit: int = 50) -> list[int]:
    hits = [(len(query_intents & ints), d) for d, ints in enumerate(doc_intents) if d not in exclude and allowed[d]]
    hits = [(c, d) for c, d in hits if c > 0]
    return [d for _, d in sorted(hits, key=lambda h: (-h[0], h[1]))[:limit]]


class EngineOracle:
    """Ranks a query over an engine's documents without touching its indexes.

    Inputs taken from the engine are *data*: the stored dense vectors (the
    embedder's output) and the records. Keyword scores come from Counters,
    sparse recall from an explicitly regenerated projection, and ranking from
    the formulas above.
    """

    def __init__(self, engine) -> None:
        from mmsearch.embedding import toy_embed

        self.engine = engine
        self.toy_embed = toy_embed
        cfg = engine.config
        self.ti, self.it = cfg.text_image, cfg.intent
        self.docs = [{f: r.field_text(f) for f in BOOSTS} for r in engine.records]
        self.dense_ti = np.asarray(engine.dense[self.ti.name], dtype=np.float64)
        self.dense_it = np.asarray(engine.dense[self.it.name], dtype=np.float64)
        self.doc_sparse = explicit_sparse_rows(self.dense_ti, self.ti)
        self.sparse = sparse_matrix(self.doc_sparse, self.ti.sparse_dim)
        self.days = np.array([r.day for r in engine.records])
        self.as_of = int(self.days.max())
        self.locale = np.array([1.0 if r.language == "en-US" else 0.0 for r in engine.records])
        self.engagement = np.array([r.edits + r.exports for r in engine.records], dtype=np.float64)
        self.doc_intents = [set(i) for i in engine.doc_intents]
        self.allowed = np.ones(len(engine), dtype=bool)

    def rank(self, query: str) -> list[int]:
        tokens = words(query)
        q_ti = self.toy_embed(query, self.ti).values
        bm25 = bm25_scores(self.docs, query)
        if len(tokens) >= 4:
            q_it = self.toy_embed(query, self.it).values
            cands = list(range(len(self.docs)))
            sims = {c: (1 / 3) * float(self.dense_it[c] @ q_it) + (2 / 3) * float(self.dense_ti[c] @ q_ti) for c in cands}
            return rank_candidates(cands, bm25, set(), self.days, self.as_of, self.locale, self.engagement, sims)
        q_sparse = explicit_sparsify(q_ti, self.ti.dense_dim, self.ti.sparse_dim, self.ti.sparsifier_seed, self.ti.sparsifier_top_k)[0]
        sparse_hits = {d for d, _, _ in brute_sparse_match(self.sparse, q_sparse, 2)}
        cands = sorted(set(bm25) | sparse_hits)
        sims = {c: float(self.dense_ti[c] @ q_ti) for c in cands}
        organic = rank_candidates(cands, bm25, sparse_hits - set(bm25), self.days, self.as_of, self.locale, self.engagement, sims)
        if len(organic) < 5:
            intents = set(self.engine.graph.extract_intents(query))
            organic += recover(intents, self.doc_intents, set(organic), self.allowed)
        return organic


def explicit_sparse_rows(dense: np.ndarray, space) -> list[dict[int, float]]:
    """Doc sparse embeddings via one explicit projection (top_k by value)."""
    proj = np.random.default_rng(space.sparsifier_seed).standard_normal((space.dense_dim, space.sparse_dim))
    out = []
    k = space.sparsifier_top_k
    for start in range(0, dense.shape[0], 1024):
        block = dense[start : start + 1024] @ proj
        top = np.argsort(-block, axis=1, kind="stable")[:, :k]
        for row, idx in zip(block, top):
            idx = np.sort(idx[row[idx] > 0])
            out.append({int(i): float(row[i]) for i in idx})
    return out


# -- contrastive loss ------------------------------------------------------


def supcon_loss(z: np.ndarray, labels: list[str], tau: float) -> float:
    """Standard supervised contrastive loss (one view per sample, one label per view),
    summed over anchors."""
    n = len(labels)
    total = 0.0
    for i in range(n):
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(float(z[i] @ z[a]) / tau) for a in range(n) if a != i)
        total += -sum(math.log(math.exp(float(z[i] @ z[p]) / tau) / denom) for p in positives) / len(positives)
    return total


def triple_loop_loss(z: np.ndarray, samples: list[int], labels: list[set[str]], tau: float) -> float:
    """Direct transcription of the multi-view, multi-label loss with explicit loops."""
    n = len(samples)
    total = 0.0
    for i in range(n):
        anchors = [a for a in range(n) if a != i]
        positives = [p for p in anchors if labels[p] & labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(float(z[i] @ z[a]) / tau) for a in anchors)
        acc = 0.0
        for p, v in product(positives, range(n)):
            if samples[v] == samples[p] and v != i and labels[v] & labels[i]:
                acc += math.log(math.exp(float(z[i] @ z[v]) / tau) / denom)
        total += -acc / len(positives)
    return total
