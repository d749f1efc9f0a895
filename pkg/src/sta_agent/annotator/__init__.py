from sta_agent.annotator.distance import levenshtein, levenshtein_below
from sta_agent.annotator.reuse import AnnotationCache, cache_key, try_reuse
from sta_agent.annotator.scoring import ScoredClass, cta_scores
from sta_agent.annotator.workflow import (
    CeaAnnotation,
    CtaAnnotation,
    Deps,
    Provenance,
    TableResult,
    TableTelemetry,
    Tool,
    annotate_cell,
    annotate_column_cta,
    annotate_table,
)

__all__ = [
    "AnnotationCache",
    "CeaAnnotation",
    "CtaAnnotation",
    "Deps",
    "Provenance",
    "ScoredClass",
    "TableResult",
    "TableTelemetry",
    "Tool",
    "annotate_cell",
    "annotate_column_cta",
    "annotate_table",
    "cache_key",
    "cta_scores",
    "levenshtein",
    "levenshtein_below",
    "try_reuse",
]
