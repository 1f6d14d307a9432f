"""Template records: the ingestion schema, closed vocabularies and hard filters."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from .errors import RecordError

LANGUAGES = ("en-US", "fr-FR", "de-DE", "ja-JP", "ko-KR")
REGIONS = ("all", "us", "fr", "de", "jp", "kr")
BEHAVIORS = ("still", "animated", "video")
LICENSES = ("free", "premium")

COUNTER_FIELDS = ("impressions", "clicks", "edits", "exports")
TEXT_FIELDS = ("title", "topics", "mood", "style")


@dataclass(slots=True)
class TemplateRecord:
    id: str
    title: str
    topics: list[str] = field(default_factory=list)
    mood: list[str] = field(default_factory=list)
    style: list[str] = field(default_factory=list)
    region: str = "all"
    language: str = "en-US"
    date: str = "1970-01-01"
    behavior: str = "still"
    license: str = "free"
    intents: list[str] = field(default_factory=list)
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    sparse_embedding: dict[str, list] | None = None
    impressions: int = 0
    clicks: int = 0
    edits: int = 0
    exports: int = 0

    @property
    def day(self) -> int:
        """Days since 1970-01-01."""
        return (dt.date.fromisoformat(self.date) - dt.date(1970, 1, 1)).days

    def field_text(self, name: str) -> str:
        value = getattr(self, name)
        return value if isinstance(value, str) else " ".join(value)

    def embedding_text(self) -> str:
        return " ".join([self.title, *self.topics])

    def to_dict(self, include_embeddings: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "title": self.title,
            "topics": list(self.topics),
            "mood": list(self.mood),
            "style": list(self.style),
            "region": self.region,
            "language": self.language,
            "date": self.date,
            "behavior": self.behavior,
            "license": self.license,
            "intents": list(self.intents),
        }
        for name in COUNTER_FIELDS:
            out[name] = getattr(self, name)
        if include_embeddings:
            if self.embeddings:
                out["embeddings"] = {k: np.asarray(v).tolist() for k, v in sorted(self.embeddings.items())}
            if self.sparse_embedding is not None:
                out["sparse_embedding"] = self.sparse_embedding
        return out


def _str_list(data: Mapping, name: str, line: int | None) -> list[str]:
    value = data.get(name, [])
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise RecordError(name, "expected a list of strings", line)
    return list(value)


def _choice(data: Mapping, name: str, vocab: tuple[str, ...], default: str, line: int | None) -> str:
    value = data.get(name, default)
    if value not in vocab:
        raise RecordError(name, f"{value!r} not in {list(vocab)}", line)
    return value


def parse_record(data: Mapping[str, Any], line: int | None = None) -> TemplateRecord:
    """Validate one decoded record. Raises :class:`RecordError` naming the offending field."""
    if not isinstance(data, Mapping):
        raise RecordError("<record>", "expected an object", line)
    unknown = set(data) - {
        "id", "title", *TEXT_FIELDS, "region", "language", "date", "behavior", "license",
        "intents", "embeddings", "sparse_embedding", *COUNTER_FIELDS,
    }
    if unknown:
        raise RecordError(sorted(unknown)[0], "unknown field", line)
    rid = data.get("id")
    if not isinstance(rid, str) or not rid:
        raise RecordError("id", "must be a non-empty string", line)
    title = data.get("title")
    if not isinstance(title, str) or not title.strip():
        raise RecordError("title", "must be a non-empty string", line)
    date = data.get("date", "1970-01-01")
    try:
        dt.date.fromisoformat(date)
    except (TypeError, ValueError):
        raise RecordError("date", f"{date!r} is not an ISO 8601 date", line) from None

    counters = {}
    for name in COUNTER_FIELDS:
        value = data.get(name, 0)
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise RecordError(name, "must be a non-negative integer", line)
        counters[name] = value

    embeddings: dict[str, np.ndarray] = {}
    raw = data.get("embeddings", {}) or {}
    if not isinstance(raw, Mapping):
        raise RecordError("embeddings", "expected an object of space -> vector", line)
    for space, vec in raw.items():
        try:
            arr = np.asarray(vec, dtype=np.float64)
        except (TypeError, ValueError):
            raise RecordError("embeddings", f"space {space!r}: not a numeric vector", line) from None
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise RecordError("embeddings", f"space {space!r}: expected a finite 1-d vector", line)
        embeddings[space] = arr

    sparse = data.get("sparse_embedding")
    if sparse is not None:
        if not isinstance(sparse, Mapping) or set(sparse) != {"dims", "weights"}:
            raise RecordError("sparse_embedding", "expected {dims: [...], weights: [...]}", line)

    return TemplateRecord(
        id=rid,
        title=title,
        topics=_str_list(data, "topics", line),
        mood=_str_list(data, "mood", line),
        style=_str_list(data, "style", line),
        region=_choice(data, "region", REGIONS, "all", line),
        language=_choice(data, "language", LANGUAGES, "en-US", line),
        date=date,
        behavior=_choice(data, "behavior", BEHAVIORS, "still", line),
        license=_choice(data, "license", LICENSES, "free", line),
        intents=_str_list(data, "intents", line),
        embeddings=embeddings,
        sparse_embedding=dict(sparse) if sparse is not None else None,
        **counters,
    )


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield ``(line_number, decoded_or_exception)`` for every non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                yield lineno, json.loads(text)
            except json.JSONDecodeError as exc:
                yield lineno, RecordError("<json>", str(exc), lineno)


def write_jsonl(path: str | Path, records: list[TemplateRecord], include_embeddings: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(include_embeddings), sort_keys=True))
            fh.write("\n")


@dataclass(frozen=True)
class FilterSpec:
    """Hard constraints. A ``region`` filter also admits templates published for region ``all``."""

    language: str | None = None
    region: str | None = None
    behavior: str | None = None
    license: str | None = None

    def __post_init__(self) -> None:
        for name, vocab in (("language", LANGUAGES), ("region", REGIONS), ("behavior", BEHAVIORS), ("license", LICENSES)):
            value = getattr(self, name)
            if value is not None and value not in vocab:
                raise ValueError(f"filter {name}={value!r} not in {list(vocab)}")

    @property
    def empty(self) -> bool:
        return all(getattr(self, n) is None for n in ("language", "region", "behavior", "license"))

    def admits(self, rec: TemplateRecord) -> bool:
        return (
            (self.language is None or rec.language == self.language)
            and (self.region is None or rec.region in (self.region, "all"))
            and (self.behavior is None or rec.behavior == self.behavior)
            and (self.license is None or rec.license == self.license)
        )

    def to_dict(self) -> dict[str, str]:
        return {n: getattr(self, n) for n in ("language", "region", "behavior", "license") if getattr(self, n) is not None}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> "FilterSpec":
        data = dict(data or {})
        unknown = set(data) - {"language", "region", "behavior", "license"}
        if unknown:
            raise ValueError(f"unknown filter field {sorted(unknown)[0]!r}")
        return cls(**data)


class DocAttributes:
    """Columnar filter attributes for the indexed documents, as small-int codes."""

    def __init__(self, language: np.ndarray, region: np.ndarray, behavior: np.ndarray, license: np.ndarray) -> None:
        self.language = np.asarray(language, dtype=np.int8)
        self.region = np.asarray(region, dtype=np.int8)
        self.behavior = np.asarray(behavior, dtype=np.int8)
        self.license = np.asarray(license, dtype=np.int8)

    @classmethod
    def from_records(cls, records: list[TemplateRecord]) -> "DocAttributes":
        return cls(
            [LANGUAGES.index(r.language) for r in records],
            [REGIONS.index(r.region) for r in records],
            [BEHAVIORS.index(r.behavior) for r in records],
            [LICENSES.index(r.license) for r in records],
        )

    def __len__(self) -> int:
        return int(self.language.size)

    def mask(self, filters: FilterSpec | None) -> np.ndarray:
        keep = np.ones(len(self), dtype=bool)
        if filters is None:
            return keep
        if filters.language is not None:
            keep &= self.language == LANGUAGES.index(filters.language)
        if filters.region is not None:
            keep &= (self.region == REGIONS.index(filters.region)) | (self.region == REGIONS.index("all"))
        if filters.behavior is not None:
            keep &= self.behavior == BEHAVIORS.index(filters.behavior)
        if filters.license is not None:
            keep &= self.license == LICENSES.index(filters.license)
        return keep

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"language": self.language, "region": self.region, "behavior": self.behavior, "license": self.license}
