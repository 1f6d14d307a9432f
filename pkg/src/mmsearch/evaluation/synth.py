"""Seeded synthetic template corpora and query sets.

Templates are assembled from the intent taxonomy so that every recall path
has designed blind spots: some templates carry an intent that never appears
in their text (keyword recall misses them, intent recovery finds them), and
long tail queries combine several intents that few templates satisfy.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from ..ckg import IntentGraph
from ..records import TemplateRecord

FILLER = (
    "template", "design", "modern", "simple", "minimal", "vintage", "retro", "cute", "classic",
    "bright", "clean", "fresh", "bold", "layout", "creative", "stylish", "fancy", "cool",
)
STYLES = ("bright", "minimal", "vintage", "modern", "handmade", "photo", "illustrated")
_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vi", "zo", "pe", "qu", "sha", "dre", "bli", "mon", "tel", "xa")

EPOCH = dt.date(2023, 1, 1)


def pseudo_words(n: int, rng: np.random.Generator) -> list[str]:
    """``n`` distinct nonsense words (never collide with taxonomy or filler vocabulary)."""
    base = len(_SYLLABLES)
    length = 3
    while base**length < 4 * n:
        length += 1
    codes = rng.choice(base**length, size=n, replace=False)
    out = []
    for code in codes.tolist():
        parts = []
        for _ in range(length):
            code, r = divmod(code, base)
            parts.append(_SYLLABLES[r])
        out.append("".join(parts))
    return out


def _children(graph: IntentGraph, parent: str) -> list[str]:
    return sorted(n.id for n in graph.nodes.values() if n.parent_id == parent)


def _leaves(graph: IntentGraph, root: str) -> list[str]:
    out, stack = [], [root]
    while stack:
        node = stack.pop()
        kids = _children(graph, node)
        if kids:
            stack.extend(kids)
        elif node != root:
            out.append(node)
    return sorted(out)


@dataclass
class Vocabulary:
    primary: list[str]
    objects: list[str]
    canvases: list[str]
    colors: list[str]
    moods: list[str]

    @classmethod
    def from_graph(cls, graph: IntentGraph) -> "Vocabulary":
        return cls(
            primary=_leaves(graph, "events") + _leaves(graph, "actions"),
            objects=_leaves(graph, "objects"),
            canvases=_leaves(graph, "canvas_types"),
            colors=_leaves(graph, "colors"),
            moods=_leaves(graph, "moods"),
        )


def synthetic_corpus(
    n: int,
    seed: int = 0,
    graph: IntentGraph | None = None,
    hidden_rate: float = 0.15,
    hidden_intents: tuple[str, ...] = (),
    distinct_titles: bool = False,
    with_topics: bool = True,
) -> list[TemplateRecord]:
    """``n`` templates with ids ``tpl-000000`` ... in a seeded, reproducible layout.

    ``hidden_rate`` is the chance a template's primary intent is left out of its
    text; intents in ``hidden_intents`` are always left out.
    ``distinct_titles`` appends a unique nonsense word to every title.
    """
    graph = graph or IntentGraph.fixture()
    vocab = Vocabulary.from_graph(graph)
    rng = np.random.default_rng(seed)
    uniques = pseudo_words(n, rng) if distinct_titles else []
    hidden_set = set(hidden_intents)
    records = []
    for i in range(n):
        primary = vocab.primary[int(rng.integers(len(vocab.primary)))]
        canvas = vocab.canvases[int(rng.integers(len(vocab.canvases)))]
        obj = vocab.objects[int(rng.integers(len(vocab.objects)))] if rng.random() < 0.6 else None
        color = vocab.colors[int(rng.integers(len(vocab.colors)))] if rng.random() < 0.4 else None
        mood = vocab.moods[int(rng.integers(len(vocab.moods)))]
        hidden = primary in hidden_set or rng.random() < hidden_rate

        words: list[str] = []
        if color:
            words.append(graph.nodes[color].label)
        if obj:
            words.append(graph.nodes[obj].label)
        if not hidden:
            words.append(graph.nodes[primary].label)
        words.append(graph.nodes[canvas].label)
        words.extend(FILLER[int(k)] for k in rng.choice(len(FILLER), size=int(rng.integers(0, 3)), replace=False))
        if distinct_titles:
            words.append(uniques[i])
        title = " ".join(words)

        topics: list[str] = []
        if with_topics:
            pool = [w for w in FILLER if w not in words]
            topics = [pool[int(k)] for k in rng.choice(len(pool), size=int(rng.integers(1, 4)), replace=False)]
            if obj and rng.random() < 0.5:
                syns = sorted(graph.nodes[obj].synonyms)
                if syns:
                    topics.append(syns[int(rng.integers(len(syns)))])

        intents = [primary, canvas, mood] + ([obj] if obj else []) + ([color] if color else [])
        impressions = int(rng.geometric(0.002))
        clicks = int(rng.binomial(impressions, 0.05))
        edits = int(rng.binomial(clicks, 0.5))
        exports = int(rng.binomial(edits, 0.4))
        date = EPOCH + dt.timedelta(days=int(rng.integers(0, 730)))
        language = ("en-US", "en-US", "en-US", "fr-FR", "de-DE", "ja-JP", "ko-KR")[int(rng.integers(7))]
        region = ("all", "all", "us", "fr", "de", "jp", "kr")[int(rng.integers(7))]
        records.append(
            TemplateRecord(
                id=f"tpl-{i:06d}",
                title=title,
                topics=topics,
                mood=[graph.nodes[mood].label],
                style=[STYLES[int(rng.integers(len(STYLES)))]],
                region=region,
                language=language,
                date=date.isoformat(),
                behavior=("still", "still", "still", "animated", "video")[int(rng.integers(5))],
                license=("free", "premium")[int(rng.integers(2))],
                intents=intents,
                impressions=impressions,
                clicks=clicks,
                edits=edits,
                exports=exports,
            )
        )
    return records


@dataclass
class EvalQuery:
    text: str
    relevant: tuple[str, ...] = ()
    source: str | None = None
    stratum: str = ""


@dataclass
class EvalQuerySet:
    queries: list[EvalQuery]
    seed: int
    meta: dict = field(default_factory=dict)

    def validate(self, doc_ids: set[str]) -> None:
        for q in self.queries:
            missing = [d for d in (*q.relevant, *([q.source] if q.source else [])) if d not in doc_ids]
            if missing:
                raise ValueError(f"query {q.text!r} references unknown doc {missing[0]!r}")


def clicked_query_set(records: list[TemplateRecord], n: int, seed: int = 0, graph: IntentGraph | None = None) -> EvalQuerySet:
    """Queries over intent combinations; "clicked" docs are those carrying every query intent.

    Strata: head (one intent), torso (intent + canvas), tail (color/object + intent + canvas).
    """
    graph = graph or IntentGraph.fixture()
    rng = np.random.default_rng(seed)
    queries: list[EvalQuery] = []
    by_intents = [set(r.intents) for r in records]
    attempts = 0
    while len(queries) < n and attempts < 50 * n:
        attempts += 1
        base = records[int(rng.integers(len(records)))]
        primary, canvas = base.intents[0], base.intents[1]
        extras = [x for x in base.intents[3:]]
        stratum = ("head", "torso", "tail")[int(rng.integers(3))]
        if stratum == "head":
            wanted = [primary]
        elif stratum == "torso":
            wanted = [primary, canvas]
        else:
            if not extras:
                continue
            wanted = [extras[int(rng.integers(len(extras)))], primary, canvas]
        text = " ".join(graph.nodes[w].label for w in wanted)
        relevant = tuple(r.id for r, ints in zip(records, by_intents) if set(wanted) <= ints)
        queries.append(EvalQuery(text=text, relevant=relevant, stratum=stratum))
    return EvalQuerySet(queries, seed, {"protocol": "clicked"})


def null_heavy_query_set(
    hidden_intents: tuple[str, ...], visible_queries: list[str], n: int, seed: int = 0, graph: IntentGraph | None = None
) -> EvalQuerySet:
    """Half the queries name an intent that is never present in template text, padded with
    nonsense words; the other half are ordinary keyword queries."""
    graph = graph or IntentGraph.fixture()
    rng = np.random.default_rng(seed)
    fillers = pseudo_words(n, rng)
    queries = []
    for k in range(n):
        if k % 2 == 0:
            intent = hidden_intents[int(rng.integers(len(hidden_intents)))]
            text = f"{fillers[k]} {graph.nodes[intent].label}"
            queries.append(EvalQuery(text=text, stratum="intent_only"))
        else:
            queries.append(EvalQuery(text=visible_queries[int(rng.integers(len(visible_queries)))], stratum="keyword"))
    return EvalQuerySet(queries, seed, {"protocol": "null_heavy"})
