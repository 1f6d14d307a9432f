from .harness import (
    EvalReport,
    LatencyReport,
    clicked_eval,
    latency_bench,
    null_rate_eval,
    percentile_summary,
    sparse_vs_dense_overlap,
    title_as_query_eval,
)
from .synth import EvalQuery, EvalQuerySet, clicked_query_set, null_heavy_query_set, pseudo_words, synthetic_corpus

__all__ = [
    "EvalQuery",
    "EvalQuerySet",
    "EvalReport",
    "LatencyReport",
    "clicked_eval",
    "clicked_query_set",
    "latency_bench",
    "null_heavy_query_set",
    "null_rate_eval",
    "percentile_summary",
    "pseudo_words",
    "sparse_vs_dense_overlap",
    "synthetic_corpus",
    "title_as_query_eval",
]
