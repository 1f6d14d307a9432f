"""Operator command line: ``mmsearch <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .ckg import IntentGraph
from .config import EngineConfig
from .embedding import EmbeddingSpace
from .errors import ConfigError, MMSearchError
from .ingest import IndexBuilder, ingest
from .pipeline import QueryContext
from .records import FilterSpec, write_jsonl
from .snapshot import snapshot_load, snapshot_save

log = logging.getLogger("mmsearch")


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_config(path: str | None) -> EngineConfig:
    return EngineConfig.load(path) if path else EngineConfig()


def _load_graph(path: str | None) -> IntentGraph:
    return IntentGraph.load(path) if path else IntentGraph.fixture()


def bench_config(dense_dim: int = 256) -> EngineConfig:
    """Reduced dense width in float32 so a 300K-template corpus fits on one small machine."""
    base = EngineConfig()
    spaces = tuple(
        EmbeddingSpace(s.name, dense_dim, s.sparse_dim, s.sparsifier_seed, s.sparsifier_top_k) for s in base.spaces
    )
    return base.with_overrides(spaces=spaces, dense_dtype="float32")


def cmd_synth(args: argparse.Namespace) -> int:
    from .evaluation import synthetic_corpus

    records = synthetic_corpus(args.docs, seed=args.seed, distinct_titles=args.distinct_titles)
    write_jsonl(args.out, records, include_embeddings=False)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    engine, report = ingest(args.corpus, _load_config(args.config), _load_graph(args.graph))
    report.digest = snapshot_save(engine, args.out)
    _print(report.to_dict())
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    engine = snapshot_load(args.snapshot)
    filters = FilterSpec.from_dict(dict(f.split("=", 1) for f in args.filter))
    context = QueryContext(language=args.language, region=args.region, as_of=args.as_of)
    response = engine.search(
        args.text, filters=filters, page_size=args.page_size, offset=args.offset,
        explain=not args.no_explain, context=context, recovery=False if args.no_recovery else None,
    )
    _print(response.to_dict(include_timings=args.timings))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import SearchService, make_server

    service = SearchService(snapshot_load(args.snapshot))
    server = make_server(service, args.host, args.port)
    log.info("serving %s on http://%s:%d", args.snapshot, args.host, server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import (
        clicked_eval,
        clicked_query_set,
        null_rate_eval,
        sparse_vs_dense_overlap,
        title_as_query_eval,
    )

    engine = snapshot_load(args.snapshot)
    if args.protocol == "title":
        report = title_as_query_eval(engine, sample=args.sample, seed=args.seed)
    elif args.protocol == "clicked":
        report = clicked_eval(engine, clicked_query_set(engine.records, args.queries, seed=args.seed, graph=engine.graph))
    else:
        queries = clicked_query_set(engine.records, args.queries, seed=args.seed, graph=engine.graph)
        if args.protocol == "null":
            off = null_rate_eval(queries, engine, recovery_on=False)
            on = null_rate_eval(queries, engine, recovery_on=True)
            _print({"recovery_off": {"null_rate": off[0], "low_rate": off[1]}, "recovery_on": {"null_rate": on[0], "low_rate": on[1]}})
        else:
            result = sparse_vs_dense_overlap(engine, [q.text for q in queries.queries], k=args.k)
            _print({k: v for k, v in result.items() if k != "per_query"})
        return 0
    if args.out:
        report.write_jsonl(args.out)
    print(report.summary_table())
    return 0


def cmd_loss_check(args: argparse.Namespace) -> int:
    from .supcola import LossConfig, SupColaBatch, gradient_check, random_batch, supcola_loss

    cfg = LossConfig(args.temperature)
    errors = [gradient_check(random_batch(np.random.default_rng(args.seed + k)), cfg, args.eps) for k in range(args.batches)]
    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    example = supcola_loss(SupColaBatch.build(z, [{"A"}, {"A"}, {"B"}]), LossConfig(1.0))
    worst = max(errors)
    ok = worst < args.tolerance and abs(example - 0.62652) < 1e-4
    _print({"batches": args.batches, "max_relative_error": worst, "three_view_loss": example, "ok": ok})
    return 0 if ok else 1


def cmd_bench(args: argparse.Namespace) -> int:
    from .evaluation import clicked_query_set, latency_bench, synthetic_corpus

    cfg = bench_config(args.dense_dim)
    builder = IndexBuilder(cfg)
    builder.add_many(synthetic_corpus(args.docs, seed=args.seed, distinct_titles=True))
    engine = builder.build()
    queries = [q.text for q in clicked_query_set(engine.records, args.queries, seed=args.seed + 1).queries]
    report = latency_bench(engine, queries, repeats=args.repeats)
    _print(report.to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmsearch", description="Hybrid sparse/dense template search engine.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--docs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distinct-titles", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("index", help="ingest a corpus and save a snapshot")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--graph", help="intent graph TSV (default: bundled fixture)")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="one-shot search with explain output")
    p.add_argument("--snapshot", required=True)
    p.add_argument("text")
    p.add_argument("--filter", action="append", default=[], metavar="FIELD=VALUE")
    p.add_argument("--page-size", type=int, default=None)
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--language", default="en-US")
    p.add_argument("--region")
    p.add_argument("--as-of")
    p.add_argument("--no-explain", action="store_true")
    p.add_argument("--no-recovery", action="store_true")
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("serve", help="serve a snapshot over HTTP")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="run an offline evaluation protocol")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--protocol", choices=("title", "clicked", "null", "overlap"), default="title")
    p.add_argument("--sample", type=int)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="per-query rows as JSONL")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loss-check", help="contrastive loss gradient suite")
    p.add_argument("--batches", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("bench", help="sparse recall vs exhaustive dense scan latency")
    p.add_argument("--docs", type=int, default=300_000)
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--dense-dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MMSearchError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
