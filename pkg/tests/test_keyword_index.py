import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsearch.keyword_index import BM25Params, KeywordIndex, bm25_idf, tokenize
from mmsearch.records import DocAttributes, FilterSpec, TemplateRecord

from conftest import unicorn_record
from oracles import bm25_scores

WORDS = ["pink", "unicorn", "party", "card", "yoga", "coffee", "sale", "gold", "kids", "happy"]


def build(records):
    index = KeywordIndex()
    for i, rec in enumerate(records):
        index.add(i, {f: rec.field_text(f) for f in ("title", "topics", "mood", "style")})
    return index.freeze(DocAttributes.from_records(records))


def test_tokenize_examples():
    assert tokenize("Coffee, Instagram!") == ["coffee", "instagram"]
    assert tokenize("") == []
    assert len(tokenize("colorful coffee promotion instagram")) == 4
    assert tokenize("Mother's Day") == ["mothers", "day"]


@given(st.text(max_size=60))
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_unicorn_matches_only_unicorn_template():
    records = [
        unicorn_record(),
        TemplateRecord(id="b", title="Yoga Class Flyer", topics=["fitness"]),
        TemplateRecord(id="c", title="Coffee Sale Poster", topics=["cafe"]),
    ]
    index = build(records)
    assert [d for d, _ in index.kw_match(["unicorn"])] == [0]
    assert index.kw_match(["zebra"]) == []


def test_hand_computed_bm25_title_tf():
    # two docs, equal length titles, "pink" twice vs once; only the title field is populated
    index = build([TemplateRecord(id="a", title="pink pink cake"), TemplateRecord(id="b", title="pink blue cake")])
    n, df, k1, b = 2, 2, 1.2, 0.75
    idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
    # avgdl = 3 and both docs have length 3, so the length norm is exactly k1
    s_a = 2.0 * idf * (2 * (k1 + 1) / (2 + k1))
    s_b = 2.0 * idf * (1 * (k1 + 1) / (1 + k1))
    got = index.kw_match(["pink"])
    assert [d for d, _ in got] == [0, 1]
    assert got[0][1] == pytest.approx(s_a, abs=1e-12)
    assert got[1][1] == pytest.approx(s_b, abs=1e-12)


def test_idf_non_negative():
    assert bm25_idf(10, 10) > 0
    assert bm25_idf(10, 1) > bm25_idf(10, 5)


def _random_records(rng, n):
    recs = []
    for i in range(n):
        pick = lambda k: [WORDS[j] for j in rng.integers(0, len(WORDS), size=k)]  # noqa: E731
        recs.append(
            TemplateRecord(
                id=f"d{i:03d}",
                title=" ".join(pick(int(rng.integers(1, 6)))),
                topics=pick(int(rng.integers(0, 4))),
                mood=pick(int(rng.integers(0, 2))),
                style=pick(int(rng.integers(0, 2))),
                language=["en-US", "fr-FR"][int(rng.integers(2))],
                region=["all", "us", "fr"][int(rng.integers(3))],
                behavior=["still", "video"][int(rng.integers(2))],
                license=["free", "premium"][int(rng.integers(2))],
            )
        )
    return recs


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bm25_matches_counter_oracle(seed):
    rng = np.random.default_rng(seed)
    records = _random_records(rng, int(rng.integers(1, 100)))
    index = build(records)
    query = " ".join(WORDS[j] for j in rng.integers(0, len(WORDS), size=int(rng.integers(1, 4))))
    expected = bm25_scores([{f: r.field_text(f) for f in ("title", "topics", "mood", "style")} for r in records], query)
    got = dict(index.kw_match(tokenize(query)))
    assert set(got) == set(expected)
    for d, s in expected.items():
        assert got[d] == pytest.approx(s, abs=1e-9)
    ordered = index.kw_match(tokenize(query))
    assert ordered == sorted(ordered, key=lambda h: (-h[1], h[0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([None, "en-US", "fr-FR"]), st.sampled_from([None, "us", "fr"]),
       st.sampled_from([None, "still", "video"]), st.sampled_from([None, "free", "premium"]))
def test_filter_soundness(seed, language, region, behavior, license):
    rng = np.random.default_rng(seed)
    records = _random_records(rng, 60)
    index = build(records)
    filters = FilterSpec(language=language, region=region, behavior=behavior, license=license)
    hits = index.kw_match(["pink", "yoga", "card"], filters)
    assert all(filters.admits(records[d]) for d, _ in hits)
    unfiltered = {d for d, _ in index.kw_match(["pink", "yoga", "card"])}
    assert {d for d, _ in hits} == {d for d in unfiltered if filters.admits(records[d])}


def test_round_trip_arrays():
    records = _random_records(np.random.default_rng(5), 30)
    index = build(records)
    clone = KeywordIndex.from_arrays(BM25Params(), len(records), index.to_arrays(), index.attributes)
    assert clone.kw_match(["pink", "gold"]) == index.kw_match(["pink", "gold"])


def test_filter_vocabulary_closed():
    with pytest.raises(ValueError):
        FilterSpec(behavior="gif")
    with pytest.raises(ValueError):
        FilterSpec.from_dict({"colour": "red"})


def test_add_out_of_order_rejected():
    index = KeywordIndex()
    with pytest.raises(ValueError):
        index.add(3, {"title": "x"})
