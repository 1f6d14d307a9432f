import json
import threading
import urllib.error
import urllib.request

import pytest

from mmsearch.cli import main
from mmsearch.records import TemplateRecord, write_jsonl
from mmsearch.service import SearchService, make_server
from mmsearch.snapshot import snapshot_load, snapshot_save

from conftest import build_engine, unicorn_record


def ten_docs():
    titles = ["Coffee Instagram Post", "Yoga Class Flyer", "Summer Sale Banner", "Happy New Year Card",
              "Halloween Party Poster", "Wedding Invitation", "Bakery Menu", "Travel Vlog Thumbnail", "Resume"]
    docs = [unicorn_record()]
    docs += [TemplateRecord(id=f"doc{i}", title=t, topics=["misc"]) for i, t in enumerate(titles)]
    return docs


@pytest.fixture(scope="module")
def service(graph):
    return SearchService(build_engine(ten_docs(), graph=graph))


def post(service, body):
    return service.handle("POST", "/search", json.dumps(body).encode())


def test_health(service):
    status, body = service.handle("GET", "/health")
    assert status == 200
    assert body["doc_count"] == 10 and body["status"] == "ok" and len(body["digest"]) == 64


def test_search_title_match_first(service):
    status, body = post(service, {"query": "coffee instagram"})
    assert status == 200
    top = body["results"][0]
    assert top["doc_id"] == "doc0" and top["provenance"]["keyword"]


def test_empty_query_structured_error(service):
    status, body = post(service, {"query": "   "})
    assert status == 400
    assert body["error"]["type"] == "EmptyQuery"


@pytest.mark.parametrize(
    "body, kind",
    [
        (b"not json", "BadRequest"),
        (b"[1, 2]", "BadRequest"),
        (json.dumps({"query": 3}).encode(), "BadRequest"),
        (json.dumps({"query": "x", "page": 0}).encode(), "BadRequest"),
        (json.dumps({"query": "x", "filters": {"behavior": "gif"}}).encode(), "BadRequest"),
        (json.dumps({"query": "x", "extra": 1}).encode(), "BadRequest"),
        (json.dumps({"query": "x", "context": {"language": "xx"}}).encode(), "BadRequest"),
    ],
)
def test_bad_requests(service, body, kind):
    status, payload = service.handle("POST", "/search", body)
    assert status == 400 and payload["error"]["type"] == kind


def test_routes_and_methods(service):
    assert service.handle("GET", "/nope")[0] == 404
    assert service.handle("GET", "/search")[0] == 405
    assert service.handle("POST", "/health")[0] == 405


def test_not_loaded():
    status, body = SearchService().handle("GET", "/health")
    assert status == 503 and body["error"]["type"] == "SnapshotNotLoaded"


def test_paging_and_explain(service):
    _, body = post(service, {"query": "party", "page": 1, "page_size": 1, "explain": True})
    assert len(body["results"]) <= 1
    if body["results"]:
        assert "explain" in body["results"][0]


def test_swap_changes_engine(graph):
    svc = SearchService(build_engine(ten_docs()[:3], graph=graph))
    assert svc.health()["doc_count"] == 3
    svc.swap(build_engine(ten_docs(), graph=graph))
    assert svc.health()["doc_count"] == 10


def test_http_round_trip(service):
    server = make_server(service, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        with urllib.request.urlopen(base + "/health") as resp:
            assert json.load(resp)["doc_count"] == 10
        req = urllib.request.Request(base + "/search", data=json.dumps({"query": "unicorn"}).encode(), method="POST")
        with urllib.request.urlopen(req) as resp:
            assert json.load(resp)["results"][0]["doc_id"] == "pink-unicorn"
        bad = urllib.request.Request(base + "/search", data=b'{"query": ""}', method="POST")
        with pytest.raises(urllib.error.HTTPError) as info:
            urllib.request.urlopen(bad)
        assert info.value.code == 400
        assert json.load(info.value)["error"]["type"] == "EmptyQuery"
    finally:
        server.shutdown()
        server.server_close()


def test_cli_end_to_end(tmp_path, capsys):
    corpus, snap = tmp_path / "c.jsonl", tmp_path / "e.snap"
    assert main(["synth", "--docs", "120", "--seed", "4", "--out", str(corpus)]) == 0
    assert main(["index", str(corpus), "--out", str(snap)]) == 0
    capsys.readouterr()
    assert main(["query", "--snapshot", str(snap), "birthday party", "--filter", "behavior=still"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["plan"]["route"] == "HYBRID" and out["plan"]["filters"]["behavior"] == "still"
    assert main(["eval", "--snapshot", str(snap), "--protocol", "title", "--sample", "20"]) == 0
    assert "mrr" in capsys.readouterr().out
    assert main(["eval", "--snapshot", str(snap), "--protocol", "null", "--queries", "10"]) == 0
    assert "recovery_on" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    snap = tmp_path / "e.snap"
    snapshot_save(build_engine(ten_docs()), snap)
    assert main(["query", "--snapshot", str(snap), "?!"]) == 1
    assert main(["query", "--snapshot", str(snap), "x", "--filter", "behavior=gif"]) == 1
    assert main(["query", "--snapshot", str(tmp_path / "missing.snap"), "x"]) == 1
    bad_cfg = tmp_path / "cfg.json"
    bad_cfg.write_text('{"min_dims": 0}')
    write_jsonl(tmp_path / "c.jsonl", ten_docs())
    assert main(["index", str(tmp_path / "c.jsonl"), "--out", str(snap), "--config", str(bad_cfg)]) == 2
    assert snapshot_load(snap).digest


def test_cli_loss_check(capsys):
    assert main(["loss-check", "--batches", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
