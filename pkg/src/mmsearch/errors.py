"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class MMSearchError(Exception):
    """Base class for all engine errors."""


class SpaceMismatch(MMSearchError, ValueError):
    """Two embeddings (or an embedding and an index) live in different spaces."""


class ZeroVector(MMSearchError, ValueError):
    pass


class EmptyText(MMSearchError, ValueError):
    pass


class DuplicateDocument(MMSearchError, KeyError):
    pass


class IndexFrozen(MMSearchError, RuntimeError):
    """Raised on writes after an index has been frozen for reading."""


class DegenerateBatch(MMSearchError, ValueError):
    pass


class MissingEmbedding(MMSearchError, KeyError):
    pass


class EmptyQuery(MMSearchError, ValueError):
    pass


class SnapshotNotLoaded(MMSearchError, RuntimeError):
    pass


class CorruptSnapshot(MMSearchError, ValueError):
    pass


class VersionMismatch(MMSearchError, ValueError):
    pass


class GraphError(MMSearchError, ValueError):
    """Intent graph failed validation. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class RecordError(MMSearchError, ValueError):
    """A corpus record failed validation."""

    def __init__(self, field: str, message: str, line: int | None = None) -> None:
        self.field = field
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{field}: {message}")


class ConfigError(MMSearchError, ValueError):
    pass
