"""Creative knowledge graph: hierarchical intent taxonomy, lexical intent extraction
and intent-overlap recovery for null and low result pages.

Graph files are tab-separated, one node per line::

    id <TAB> label <TAB> parent_id (may be empty) <TAB> synonym|synonym|...

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphError
from .text import normalize, tokenize


@dataclass(frozen=True)
class IntentNode:
    id: str
    label: str
    parent_id: str | None
    path: tuple[str, ...]
    synonyms: frozenset[str]


class IntentGraph:
    def __init__(self, nodes: Mapping[str, IntentNode], surface_map: Mapping[str, str]) -> None:
        self.nodes = dict(nodes)
        self.surface_map = dict(surface_map)
        self.max_surface_tokens = max((len(s.split()) for s in self.surface_map), default=0)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "IntentGraph":
        raw: dict[str, tuple[str, str | None, list[str], int]] = {}
        for lineno, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2 or len(parts) > 4:
                raise GraphError(f"expected 2-4 tab-separated fields, got {len(parts)}", lineno)
            parts += [""] * (4 - len(parts))
            node_id, label, parent, synonyms = (p.strip() for p in parts)
            if not node_id:
                raise GraphError("empty node id", lineno)
            if node_id in raw:
                raise GraphError(f"duplicate node id {node_id!r}", lineno)
            if not normalize(label):
                raise GraphError(f"node {node_id!r} has an empty label", lineno)
            syns = [s for s in synonyms.split("|") if s.strip()] if synonyms else []
            raw[node_id] = (label, parent or None, syns, lineno)

        for node_id, (_, parent, _, lineno) in raw.items():
            if parent is not None and parent not in raw:
                raise GraphError(f"node {node_id!r} has unknown parent {parent!r}", lineno)

        nodes: dict[str, IntentNode] = {}
        surface_map: dict[str, str] = {}
        for node_id, (label, parent, syns, lineno) in raw.items():
            chain: list[str] = []
            seen = {node_id}
            cursor = parent
            while cursor is not None:
                if cursor in seen:
                    raise GraphError(f"cycle through node {node_id!r}", lineno)
                seen.add(cursor)
                chain.append(normalize(raw[cursor][0]))
                cursor = raw[cursor][1]
            canonical = normalize(label)
            surfaces = [canonical]
            for syn in syns:
                norm = normalize(syn)
                if not norm:
                    raise GraphError(f"node {node_id!r} has an empty synonym", lineno)
                if norm in surfaces:
                    raise GraphError(f"node {node_id!r} repeats surface {norm!r}", lineno)
                surfaces.append(norm)
            for surface in surfaces:
                owner = surface_map.get(surface)
                if owner is not None:
                    raise GraphError(f"surface {surface!r} of {node_id!r} already maps to {owner!r}", lineno)
                surface_map[surface] = node_id
            nodes[node_id] = IntentNode(
                id=node_id,
                label=canonical,
                parent_id=parent,
                path=tuple(reversed(chain)) + (canonical,),
                synonyms=frozenset(surfaces[1:]),
            )
        return cls(nodes, surface_map)

    @classmethod
    def load(cls, path: str | Path) -> "IntentGraph":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)

    @classmethod
    def fixture(cls) -> "IntentGraph":
        """The small taxonomy shipped with the package (~100 nodes)."""
        text = resources.files("mmsearch.data").joinpath("ckg_fixture.tsv").read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())

    def to_lines(self) -> list[str]:
        out = []
        for node in self.nodes.values():
            out.append("\t".join([node.id, node.label, node.parent_id or "", "|".join(sorted(node.synonyms))]))
        return out

    def resolve(self, name: str) -> str | None:
        """Map a node id or any surface form to a node id."""
        if name in self.nodes:
            return name
        return self.surface_map.get(normalize(name))

    def extract_intent_list(self, text: str) -> list[str]:
        """Greedy longest-match scan; node ids in order of first occurrence."""
        tokens = tokenize(text)
        found: list[str] = []
        i = 0
        while i < len(tokens):
            for width in range(min(self.max_surface_tokens, len(tokens) - i), 0, -1):
                node_id = self.surface_map.get(" ".join(tokens[i : i + width]))
                if node_id is not None:
                    if node_id not in found:
                        found.append(node_id)
                    i += width
                    break
            else:
                i += 1
        return found

    def extract_intents(self, text: str) -> frozenset[str]:
        return frozenset(self.extract_intent_list(text))


class IntentPostings:
    """Intent id -> sorted array of document ids carrying that intent."""

    def __init__(self, postings: Mapping[str, np.ndarray]) -> None:
        self.postings = {k: np.asarray(v, dtype=np.int64) for k, v in postings.items()}

    @classmethod
    def from_doc_intents(cls, doc_intents: Sequence[Iterable[str]]) -> "IntentPostings":
        acc: dict[str, list[int]] = {}
        for doc_id, intents in enumerate(doc_intents):
            for intent in set(intents):
                acc.setdefault(intent, []).append(doc_id)
        return cls({k: np.array(v, dtype=np.int64) for k, v in sorted(acc.items())})

    def get(self, intent: str) -> np.ndarray:
        return self.postings.get(intent, np.zeros(0, dtype=np.int64))


def recover(
    query_intents: Iterable[str],
    intent_postings: IntentPostings,
    exclude: Iterable[int] = (),
    limit: int | None = None,
    allowed: np.ndarray | None = None,
) -> list[tuple[int, int]]:
    """Documents sharing at least one intent with the query, by shared-intent count.

    ``allowed`` is an optional boolean mask over doc ids (hard filters).
    Ties are broken by ascending doc id.
    """
    parts = [intent_postings.get(i) for i in sorted(set(query_intents))]
    parts = [p for p in parts if p.size]
    if not parts:
        return []
    docs, counts = np.unique(np.concatenate(parts), return_counts=True)
    keep = np.ones(docs.size, dtype=bool)
    excluded = np.fromiter((int(e) for e in exclude), dtype=np.int64)
    if excluded.size:
        keep &= ~np.isin(docs, excluded)
    if allowed is not None:
        keep &= allowed[docs]
    docs, counts = docs[keep], counts[keep]
    order = np.lexsort((docs, -counts))
    if limit is not None:
        order = order[:limit]
    return [(int(docs[k]), int(counts[k])) for k in order]
