"""Label-aligned supervised contrastive loss over multi-view, multi-label batches.

Every view (image, text or label embedding of a sample) is an anchor and a
contrast feature. For anchor ``i``:

* ``A(i)`` is every other view in the batch,
* ``P(i)`` is the views in ``A(i)`` sharing at least one label with ``i``,
* ``j(p)`` is the views of ``p``'s sample that share a label with ``i``,
  excluding ``i`` itself.

The per-anchor loss is ``-(1/|P(i)|) * sum_{p in P(i)} sum_{v in j(p)} log softmax_i(v)``
where the softmax runs over ``A(i)`` with logits ``z_i . z_n / tau``. Anchors
without positives contribute 0. The batch loss is the sum over anchors.

Because ``j(p)`` only depends on ``p``'s sample, a positive view ``v`` is
counted once per positive view of its sample; the loss is therefore a
weighted cross-entropy ``sum_i sum_v c[i, v] * (-log softmax_i(v))`` with a
fixed coefficient matrix ``c``. Both the loss and its gradient are computed
from that matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateBatch

VIEW_KINDS = ("image", "text", "label")
NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.07

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True, eq=False)
class SupColaBatch:
    """Views stacked row-wise in ``vectors`` with their sample index, kind and label set."""

    vectors: np.ndarray
    sample_index: tuple[int, ...]
    kinds: tuple[str, ...]
    labels: tuple[frozenset[str], ...]
    check_norms: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        vectors = np.array(self.vectors, dtype=np.float64, ndmin=2)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "sample_index", tuple(int(s) for s in self.sample_index))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "labels", tuple(frozenset(l) for l in self.labels))
        n = vectors.shape[0]
        if n < 2:
            raise DegenerateBatch(f"need at least 2 views, got {n}")
        if not (len(self.sample_index) == len(self.kinds) == len(self.labels) == n):
            raise ValueError("vectors, sample_index, kinds and labels must have equal length")
        bad_kind = [k for k in self.kinds if k not in VIEW_KINDS]
        if bad_kind:
            raise ValueError(f"unknown view kind {bad_kind[0]!r}")
        if any(not l for l in self.labels):
            raise ValueError("every view needs at least one label")
        if self.check_norms:
            norms = np.linalg.norm(vectors, axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
                raise ValueError("view embeddings must be L2-normalized")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def build(
        cls,
        vectors: np.ndarray,
        labels: Sequence[Iterable[str]],
        sample_index: Sequence[int] | None = None,
        kinds: Sequence[str] | None = None,
        normalize: bool = False,
    ) -> "SupColaBatch":
        """Convenience constructor; defaults to one image view per sample."""
        vectors = np.array(vectors, dtype=np.float64, ndmin=2)
        if normalize:
            vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
        n = vectors.shape[0]
        return cls(
            vectors,
            tuple(range(n)) if sample_index is None else tuple(sample_index),
            ("image",) * n if kinds is None else tuple(kinds),
            tuple(frozenset(l) for l in labels),
        )

    def with_vectors(self, vectors: np.ndarray, check_norms: bool = False) -> "SupColaBatch":
        return replace(self, vectors=vectors, check_norms=check_norms)

    def permuted(self, order: Sequence[int]) -> "SupColaBatch":
        order = list(order)
        return replace(
            self,
            vectors=self.vectors[order],
            sample_index=tuple(self.sample_index[k] for k in order),
            kinds=tuple(self.kinds[k] for k in order),
            labels=tuple(self.labels[k] for k in order),
        )


def positive_weights(batch: SupColaBatch) -> np.ndarray:
    """Coefficient matrix ``c`` with ``loss = sum_iv c[i, v] * -log softmax_i(v)``."""
    n = len(batch)
    share = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for v in range(n):
            share[i, v] = v != i and bool(batch.labels[i] & batch.labels[v])
    samples = np.asarray(batch.sample_index)
    same_sample = samples[:, None] == samples[None, :]
    # positives of anchor i that belong to v's sample
    per_sample = (share.astype(np.int64) @ same_sample.astype(np.int64))
    n_pos = share.sum(axis=1)
    coeff = np.zeros((n, n))
    has = n_pos > 0
    coeff[has] = np.where(share[has], per_sample[has], 0) / n_pos[has, None]
    return coeff


def _log_softmax_rows(z: np.ndarray, tau: float) -> np.ndarray:
    logits = (z @ z.T) / tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    shifted = logits - row_max
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - log_norm


def _loss_from(z: np.ndarray, coeff: np.ndarray, tau: float) -> float:
    log_prob = _log_softmax_rows(z, tau)
    mask = coeff > 0
    return float(-(coeff[mask] * log_prob[mask]).sum())


def supcola_loss(batch: SupColaBatch, cfg: LossConfig | None = None) -> float:
    cfg = cfg or LossConfig()
    if len(batch) < 2:
        raise DegenerateBatch("need at least 2 views")
    return _loss_from(batch.vectors, positive_weights(batch), cfg.temperature)


def supcola_loss_and_grad(batch: SupColaBatch, cfg: LossConfig | None = None) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient w.r.t. every (unnormalized) view vector."""
    cfg = cfg or LossConfig()
    tau = cfg.temperature
    z = batch.vectors
    coeff = positive_weights(batch)
    log_prob = _log_softmax_rows(z, tau)
    prob = np.exp(log_prob)  # diagonal is exp(-inf) = 0
    mask = coeff > 0
    loss = float(-(coeff[mask] * log_prob[mask]).sum())
    # d loss / d logit[i, n] = C_i * p[i, n] - c[i, n], with C_i = sum_v c[i, v]
    g_logits = (coeff.sum(axis=1, keepdims=True) * prob - coeff) / tau
    grad = (g_logits + g_logits.T) @ z
    return loss, grad


def supcola_grad(batch: SupColaBatch, cfg: LossConfig | None = None) -> np.ndarray:
    return supcola_loss_and_grad(batch, cfg)[1]


@dataclass
class AlignResult:
    batch: SupColaBatch
    losses: list[float]


def align_toy(batch: SupColaBatch, cfg: LossConfig | None = None, steps: int = 200, learning_rate: float = 0.1) -> AlignResult:
    """Plain gradient descent on every view, re-normalizing rows after each step.

    ``losses[0]`` is the starting loss and ``losses[k]`` the loss after step ``k``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    cfg = cfg or LossConfig()
    z = batch.vectors.copy()
    current = batch.with_vectors(z)
    losses = [supcola_loss(current, cfg)]
    for _ in range(steps):
        _, grad = supcola_loss_and_grad(current, cfg)
        z = z - learning_rate * grad
        z = z / np.linalg.norm(z, axis=1, keepdims=True)
        current = batch.with_vectors(z)
        losses.append(supcola_loss(current, cfg))
    return AlignResult(batch.with_vectors(z, check_norms=True), losses)


def write_batch(path: str | Path, batch: SupColaBatch) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(len(batch)):
            row = {
                "sample_index": batch.sample_index[k],
                "kind": batch.kinds[k],
                "labels": sorted(batch.labels[k]),
                "vector": batch.vectors[k].tolist(),
            }
            fh.write(json.dumps(row) + "\n")


def read_batch(path: str | Path, check_norms: bool = True) -> SupColaBatch:
    samples, kinds, labels, vectors = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                samples.append(int(row["sample_index"]))
                kinds.append(str(row["kind"]))
                labels.append(frozenset(row["labels"]))
                vectors.append([float(x) for x in row["vector"]])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: malformed batch row ({exc})") from None
    if len(vectors) < 2:
        raise DegenerateBatch(f"need at least 2 views, got {len(vectors)}")
    return SupColaBatch(np.array(vectors), tuple(samples), tuple(kinds), tuple(labels), check_norms=check_norms)


def random_batch(
    rng: np.random.Generator,
    n_samples: int = 4,
    dim: int = 8,
    n_labels: int = 3,
    kinds: Sequence[str] = ("image", "text"),
) -> SupColaBatch:
    """Seeded multi-view, multi-label batch with unit-norm views (for gradient checks)."""
    pool = [f"L{k}" for k in range(n_labels)]
    vectors, samples, view_kinds, labels = [], [], [], []
    for s in range(n_samples):
        size = int(rng.integers(1, min(3, n_labels) + 1))
        sample_labels = frozenset(rng.choice(pool, size=size, replace=False).tolist())
        for kind in kinds:
            vectors.append(rng.standard_normal(dim))
            samples.append(s)
            view_kinds.append(kind)
            labels.append(sample_labels)
    return SupColaBatch.build(np.array(vectors), labels, samples, view_kinds, normalize=True)


def finite_difference_grad(batch: SupColaBatch, cfg: LossConfig | None = None, eps: float = 1e-5) -> np.ndarray:
    """Central differences of :func:`supcola_loss` in every coordinate."""
    z = batch.vectors
    grad = np.zeros_like(z)
    for idx in np.ndindex(*z.shape):
        plus, minus = z.copy(), z.copy()
        plus[idx] += eps
        minus[idx] -= eps
        grad[idx] = (supcola_loss(batch.with_vectors(plus), cfg) - supcola_loss(batch.with_vectors(minus), cfg)) / (2 * eps)
    return grad


def gradient_check(batch: SupColaBatch, cfg: LossConfig | None = None, eps: float = 1e-5) -> float:
    """max |analytic - numeric| / max |numeric| (0 when both vanish)."""
    analytic = supcola_grad(batch, cfg)
    numeric = finite_difference_grad(batch, cfg, eps)
    scale = float(np.abs(numeric).max())
    diff = float(np.abs(analytic - numeric).max())
    if scale == 0.0:
        return diff
    return diff / scale
