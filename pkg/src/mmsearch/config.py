"""Engine configuration: one JSON document holding every tunable with its default."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .embedding import EmbeddingSpace
from .errors import ConfigError
from .keyword_index import DEFAULT_BOOSTS, BM25Params
from .ranking import FirstRoundWeights, RescoreConfig
from .sparse_index import DEFAULT_MIN_DIMS


def default_spaces() -> tuple[EmbeddingSpace, ...]:
    return (
        EmbeddingSpace("text_image", dense_dim=2048, sparse_dim=8192, sparsifier_seed=20240101, sparsifier_top_k=16),
        EmbeddingSpace("intent", dense_dim=2048, sparse_dim=8192, sparsifier_seed=20240102, sparsifier_top_k=16),
    )


@dataclass(frozen=True)
class RecoveryConfig:
    enabled: bool = True
    low_threshold: int = 5
    limit: int = 50

    def __post_init__(self) -> None:
        if self.low_threshold < 1 or self.limit < 1:
            raise ConfigError("recovery low_threshold and limit must be >= 1")


@dataclass(frozen=True)
class EngineConfig:
    spaces: tuple[EmbeddingSpace, ...] = field(default_factory=default_spaces)
    # Which catalog entries play the text-image and intent roles; swap names to swap models.
    text_image_space: str = "text_image"
    intent_space: str = "intent"
    bm25: BM25Params = field(default_factory=BM25Params)
    min_dims: int = DEFAULT_MIN_DIMS
    first_round: FirstRoundWeights = field(default_factory=FirstRoundWeights)
    rescore: RescoreConfig = field(default_factory=RescoreConfig)
    long_query_min_words: int = 4
    long_route_union: bool = False
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    page_size: int = 50
    dense_dtype: str = "float64"

    def __post_init__(self) -> None:
        names = [s.name for s in self.spaces]
        if len(set(names)) != len(names):
            raise ConfigError("embedding space names must be unique")
        for role in ("text_image_space", "intent_space"):
            if getattr(self, role) not in names:
                raise ConfigError(f"{role} {getattr(self, role)!r} is not in the space catalog")
        if self.min_dims < 1:
            raise ConfigError("min_dims must be >= 1")
        if self.long_query_min_words < 1:
            raise ConfigError("long_query_min_words must be >= 1")
        if self.page_size < 1:
            raise ConfigError("page_size must be >= 1")
        if self.dense_dtype not in ("float32", "float64"):
            raise ConfigError("dense_dtype must be float32 or float64")

    def space(self, name: str) -> EmbeddingSpace:
        for s in self.spaces:
            if s.name == name:
                return s
        raise ConfigError(f"unknown embedding space {name!r}")

    @property
    def text_image(self) -> EmbeddingSpace:
        return self.space(self.text_image_space)

    @property
    def intent(self) -> EmbeddingSpace:
        return self.space(self.intent_space)

    def with_overrides(self, **changes: Any) -> "EngineConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "spaces": [s.to_dict() for s in self.spaces],
            "text_image_space": self.text_image_space,
            "intent_space": self.intent_space,
            "bm25": self.bm25.to_dict(),
            "min_dims": self.min_dims,
            "first_round": asdict(self.first_round),
            "rescore": asdict(self.rescore),
            "long_query_min_words": self.long_query_min_words,
            "long_route_union": self.long_route_union,
            "recovery": asdict(self.recovery),
            "page_size": self.page_size,
            "dense_dtype": self.dense_dtype,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        kwargs: dict[str, Any] = {}
        try:
            if "spaces" in data:
                kwargs["spaces"] = tuple(EmbeddingSpace.from_dict(s) for s in data["spaces"])
            if "bm25" in data:
                b = dict(data["bm25"])
                kwargs["bm25"] = BM25Params(
                    k1=b.get("k1", 1.2), b=b.get("b", 0.75), boosts=dict(b.get("boosts", DEFAULT_BOOSTS))
                )
            if "first_round" in data:
                kwargs["first_round"] = FirstRoundWeights(**data["first_round"])
            if "rescore" in data:
                kwargs["rescore"] = RescoreConfig(**data["rescore"])
            if "recovery" in data:
                kwargs["recovery"] = RecoveryConfig(**data["recovery"])
            for key in ("text_image_space", "intent_space", "min_dims", "long_query_min_words",
                        "long_route_union", "page_size", "dense_dtype"):
                if key in data:
                    kwargs[key] = data[key]
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "EngineConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")
