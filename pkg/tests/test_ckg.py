import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmsearch.ckg import IntentGraph, IntentPostings, recover
from mmsearch.errors import GraphError
from mmsearch.text import tokenize


def exhaustive_longest_match(graph: IntentGraph, text: str) -> set[str]:
    """Enumerate every span; scan left to right keeping the longest span starting at each cursor."""
    tokens = tokenize(text)
    spans = {
        (i, j): graph.surface_map[" ".join(tokens[i:j])]
        for i in range(len(tokens))
        for j in range(i + 1, len(tokens) + 1)
        if " ".join(tokens[i:j]) in graph.surface_map
    }
    out, i = set(), 0
    while i < len(tokens):
        ends = [j for (s, j) in spans if s == i]
        if ends:
            j = max(ends)
            out.add(spans[(i, j)])
            i = j
        else:
            i += 1
    return out


def test_fixture_size_and_categories(graph):
    assert 90 <= len(graph) <= 110
    roots = {n.id for n in graph.nodes.values() if n.parent_id is None}
    assert roots == {"events", "actions", "objects", "moods", "canvas_types", "colors", "backgrounds"}
    assert graph.nodes["halloween"].path == ("events", "seasonal", "halloween")


def test_extract_examples(graph):
    assert graph.extract_intents("hot yoga studio opening") == {"yoga"}
    assert graph.extract_intents("") == frozenset()
    assert graph.extract_intents("halloween birthday party") == {"halloween", "birthday_party"}
    assert graph.extract_intents("coffee promotion") == {"coffee", "sale"}


@given(st.lists(st.sampled_from(["birthday", "party", "halloween", "instagram", "post", "portrait", "yoga",
                                 "grand", "opening", "new", "year", "card", "zebra", "of", "4th", "july"]), max_size=8))
def test_extract_matches_exhaustive_oracle(words):
    graph = IntentGraph.fixture()
    text = " ".join(words)
    assert graph.extract_intents(text) == exhaustive_longest_match(graph, text)


@given(st.lists(st.sampled_from(["Birthday", "PARTY", "yoga", "Coffee", "sale"]), max_size=6),
       st.sampled_from([" ", "   ", "\t", " \n "]))
def test_extract_invariant_to_case_and_whitespace(words, sep):
    graph = IntentGraph.fixture()
    assert graph.extract_intents(sep.join(words)) == graph.extract_intents(" ".join(w.lower() for w in words))


@pytest.mark.parametrize(
    "lines, line_no",
    [
        (["a\tA\t", "b\tB\ta", "a\tAgain\t"], 3),
        (["a\tA\tmissing"], 1),
        (["a\tA\tb", "b\tB\ta"], 1),
        (["a\t \t"], 1),
        (["a\tA\t\tx", "b\tB\t\tx"], 2),
    ],
)
def test_graph_validation_reports_lines(lines, line_no):
    with pytest.raises(GraphError) as info:
        IntentGraph.from_lines(lines)
    assert info.value.line == line_no


def test_graph_round_trip(graph):
    clone = IntentGraph.from_lines(graph.to_lines())
    assert clone.surface_map == graph.surface_map
    assert {k: v.path for k, v in clone.nodes.items()} == {k: v.path for k, v in graph.nodes.items()}


def test_recover_examples():
    postings = IntentPostings.from_doc_intents([["yoga"], ["cake"], ["yoga", "opening"], ["yoga"]])
    assert recover({"yoga"}, postings) == [(0, 1), (2, 1), (3, 1)]
    assert recover(set(), postings) == []
    assert recover({"yoga", "opening"}, postings)[0] == (2, 2)
    assert recover({"yoga"}, postings, exclude={0}, limit=1) == [(2, 1)]
    assert recover({"yoga"}, postings, allowed=np.array([True, True, False, True])) == [(0, 1), (3, 1)]


@given(st.lists(st.sets(st.sampled_from("abcdef"), max_size=3), max_size=30),
       st.sets(st.sampled_from("abcdefg"), max_size=3), st.sets(st.integers(0, 29), max_size=5))
def test_recover_soundness(doc_intents, query, exclude):
    results = recover(query, IntentPostings.from_doc_intents(doc_intents), exclude=exclude)
    for doc, count in results:
        assert doc not in exclude
        assert count == len(doc_intents[doc] & query) >= 1
    assert results == sorted(results, key=lambda r: (-r[1], r[0]))
