import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmsearch.ckg import IntentGraph  # noqa: E402
from mmsearch.config import EngineConfig  # noqa: E402
from mmsearch.evaluation import synthetic_corpus  # noqa: E402
from mmsearch.ingest import IndexBuilder  # noqa: E402
from mmsearch.records import TemplateRecord  # noqa: E402

CORPUS_10K_SEED = 10_000


def build_engine(records, config=None, graph=None):
    builder = IndexBuilder(config or EngineConfig(), graph)
    builder.add_many(records)
    return builder.build()


def unicorn_record(**overrides) -> TemplateRecord:
    fields = dict(
        id="pink-unicorn",
        title="Pink Unicorn Birthday Party Instagram Portrait Post",
        topics=["confetti", "fantasy", "glitter", "gold", "kids", "sparkle", "star", "unicorn"],
        mood=["happy", "joyful"],
        style=["bright"],
        region="all",
        language="en-US",
        date="2023-12-12",
        behavior="still",
        license="premium",
        intents=["birthday_party", "instagram_post", "unicorn"],
        impressions=1200,
        clicks=80,
        edits=30,
        exports=12,
    )
    fields.update(overrides)
    return TemplateRecord(**fields)


@pytest.fixture(scope="session")
def graph():
    return IntentGraph.fixture()


@pytest.fixture(scope="session")
def small_records():
    return synthetic_corpus(500, seed=11)


@pytest.fixture(scope="session")
def small_engine(small_records, graph):
    return build_engine(small_records, graph=graph)


@pytest.fixture(scope="session")
def corpus_10k(graph):
    """The seeded 10K-template corpus shared by the evaluation checks."""
    return build_engine(synthetic_corpus(10_000, seed=CORPUS_10K_SEED), graph=graph)


# -- acceptance summary ------------------------------------------------------

_ACCEPTANCE: dict[str, list[str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE.setdefault(report.nodeid, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    by_number: dict[int, bool] = {}
    for nodeid, outcomes in _ACCEPTANCE.items():
        name = nodeid.split("::")[-1]
        if not name.startswith("test_ac"):
            continue
        number = int(name[len("test_ac") : len("test_ac") + 2])
        ok = all(o == "passed" for o in outcomes)
        by_number[number] = by_number.get(number, True) and ok
    for number, title in sorted(CRITERIA.items()):
        if number in by_number:
            status = "PASS" if by_number[number] else "FAIL"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {number:2d} {status:7s} {title}")
