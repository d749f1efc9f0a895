"""Corpus-level orchestration: wiring backends, the table worker pool, output files, ablations."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from sta_agent.annotator import AnnotationCache, CeaAnnotation, CtaAnnotation, Deps, TableTelemetry, annotate_table
from sta_agent.config import ConfigError, RunConfig
from sta_agent.evaluate import CEA, CTA, MetricsReport, normalize_uri, read_annotations, score_annotations
from sta_agent.kg import (
    DBpediaBackend,
    KgBackend,
    KgClient,
    KgFixture,
    RecordingBackend,
    ReplayBackend,
    atomic_write_text,
)
from sta_agent.llm import ChatCompletionLlm, LlmBackend, LlmClient, StubLlm
from sta_agent.llm.prompts import PROMPT_VERSION
from sta_agent.preprocessing import EntityTagger, GazetteerTagger
from sta_agent.table import Table, TargetSet, load_tables, load_targets

logger = logging.getLogger(__name__)

CEA_FILE = "cea.csv"
CTA_FILE = "cta.csv"
TELEMETRY_FILE = "telemetry.json"
METRICS_FILE = "metrics.json"
ABLATION_FILE = "ablation.json"

K_SWEEP = (1, 5, 10, 15)


def make_kg_backend(config: RunConfig) -> KgBackend:
    kg = config.kg
    if kg.mode == "replay":
        return ReplayBackend.from_file(kg.fixture)
    live = DBpediaBackend(kg.lookup_url, kg.sparql_url, namespace=kg.ontology_namespace, timeout=kg.timeout)
    if kg.mode == "record":
        existing = KgFixture.load(kg.fixture) if kg.fixture and Path(kg.fixture).exists() else None
        return RecordingBackend(live, existing)
    return live


def make_llm_backend(config: RunConfig) -> LlmBackend:
    s = config.llm
    if s.is_stub:
        return StubLlm.from_file(s.stub_fixture) if s.stub_fixture else StubLlm()
    return ChatCompletionLlm(s.base_url, s.model, timeout=s.timeout, requests_per_minute=s.requests_per_minute)


def build_deps(
    config: RunConfig,
    *,
    kg_backend: Optional[KgBackend] = None,
    llm_backend: Optional[LlmBackend] = None,
    tagger: Optional[EntityTagger] = None,
) -> Deps:
    kg = KgClient(
        kg_backend if kg_backend is not None else make_kg_backend(config),
        cache=config.kg.cache,
        attempts=config.kg.attempts,
        backoff=config.kg.backoff,
        max_in_flight=config.kg.max_in_flight,
        namespace=config.kg.ontology_namespace,
    )
    llm = LlmClient(llm_backend if llm_backend is not None else make_llm_backend(config))
    if tagger is None:
        tagger = GazetteerTagger.from_file(config.tagger_fixture) if config.tagger_fixture else GazetteerTagger()
    return Deps(kg, llm, tagger)


@dataclass
class RunResult:
    cea: list[CeaAnnotation]
    cta: list[CtaAnnotation]
    telemetry: list[TableTelemetry]
    deps: Deps
    warnings: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0

    def totals(self) -> dict[str, int]:
        keys = ("cells_processed", "fresh_annotations", "reused", "abstained", "fallbacks", "short_circuits")
        return {k: sum(getattr(t, k) for t in self.telemetry) for k in keys}

    def telemetry_dict(self, config: RunConfig) -> dict:
        return {
            "lookup_text": "corrected",
            "prompt_version": PROMPT_VERSION,
            "settings": {
                "cache_scope": config.cache_scope,
                "cea_candidate_limit": config.cea_candidate_limit,
                "class_depth_m": config.class_depth_m,
                "cta_shortlist_limit": config.cta_shortlist_limit,
                "rep_cell_limit": config.rep_cell_limit,
                "threshold_factor_k": config.threshold_factor_k,
                "toggles": {t: getattr(config, t) for t in RunConfig.TOGGLES},
            },
            "tables": [t.as_dict() for t in self.telemetry],
            "totals": self.totals(),
            "kg": self.deps.kg.stats.as_dict(),
            "llm": self.deps.llm.usage_report().as_dict(),
            "warnings": self.warnings,
        }


def annotate_corpus(
    tables: Mapping[str, Table],
    targets: Optional[TargetSet],
    config: RunConfig,
    deps: Deps,
) -> RunResult:
    """Annotate every table; tables are the unit of parallelism.

    A run-wide reuse cache makes results depend on table order, so that scope
    runs the tables one by one whatever ``workers`` says.
    """
    start = time.perf_counter()
    ids = sorted(tables)
    if config.cache_scope == "run":
        shared = AnnotationCache(config.threshold_factor_k)
        results = [annotate_table(tables[t], targets, deps, config, shared) for t in ids]
    elif config.workers == 1:
        results = [annotate_table(tables[t], targets, deps, config) for t in ids]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda t: annotate_table(tables[t], targets, deps, config), ids))
    cea = [a for r in results for a in r.cea]
    cta = [a for r in results for a in r.cta]
    return RunResult(
        cea,
        cta,
        [r.telemetry for r in results],
        deps,
        list(targets.warnings) if targets is not None else [],
        time.perf_counter() - start,
    )


def cea_csv(annotations: Sequence[CeaAnnotation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for a in sorted(annotations, key=lambda a: (a.cell.table_id, a.cell.row, a.cell.col)):
        w.writerow([a.cell.table_id, a.cell.row, a.cell.col, a.entity_uri])
    return buf.getvalue()


def cta_csv(annotations: Sequence[CtaAnnotation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for a in sorted(annotations, key=lambda a: a.column):
        w.writerow([a.column[0], a.column[1], a.class_uri])
    return buf.getvalue()


def system_maps(result: RunResult) -> dict[str, dict[tuple, frozenset[str]]]:
    return {
        CEA: {(a.cell.table_id, a.cell.row, a.cell.col): frozenset([normalize_uri(a.entity_uri)]) for a in result.cea},
        CTA: {(a.column[0], a.column[1]): frozenset([normalize_uri(a.class_uri)]) for a in result.cta},
    }


def evaluate_result(result: RunResult, config: RunConfig) -> dict[str, MetricsReport]:
    maps = system_maps(result)
    reports = {}
    if config.gold_cea:
        reports[CEA] = score_annotations(maps[CEA], read_annotations(config.gold_cea, CEA, multi=True), CEA)
    if config.gold_cta:
        reports[CTA] = score_annotations(maps[CTA], read_annotations(config.gold_cta, CTA, multi=True), CTA)
    return reports


def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_outputs(result: RunResult, config: RunConfig, out_dir: Path,
                  reports: Optional[Mapping[str, MetricsReport]] = None) -> dict[str, Path]:
    """Write outputs, each via temp file + rename so a present file is complete."""
    out_dir = Path(out_dir)
    paths = {"cea": out_dir / CEA_FILE, "cta": out_dir / CTA_FILE, "telemetry": out_dir / TELEMETRY_FILE}
    atomic_write_text(paths["cea"], cea_csv(result.cea))
    atomic_write_text(paths["cta"], cta_csv(result.cta))
    atomic_write_text(paths["telemetry"], _dump(result.telemetry_dict(config)))
    if reports:
        paths["metrics"] = out_dir / METRICS_FILE
        atomic_write_text(paths["metrics"], _dump({k: r.as_dict() for k, r in sorted(reports.items())}))
    return paths


def load_inputs(config: RunConfig) -> tuple[dict[str, Table], Optional[TargetSet]]:
    if config.tables is None:
        raise ConfigError("no tables directory configured")
    tables = load_tables(config.tables, header=config.header)
    if not tables:
        raise ConfigError(f"no *.csv tables in {config.tables}")
    targets = None
    if config.cea_targets or config.cta_targets:
        targets = load_targets(config.cea_targets, config.cta_targets, tables)
    return tables, targets


def run(config: RunConfig, *, deps: Optional[Deps] = None) -> tuple[RunResult, dict[str, MetricsReport]]:
    """Annotate the configured corpus, write outputs, and score against gold when given."""
    config.validate()
    if config.output_dir is None:
        raise ConfigError("no output directory configured")
    tables, targets = load_inputs(config)
    deps = deps if deps is not None else build_deps(config)
    result = annotate_corpus(tables, targets, config, deps)
    reports = evaluate_result(result, config)
    write_outputs(result, config, config.output_dir, reports)
    backend = deps.kg.backend
    if config.kg.mode == "record" and isinstance(backend, RecordingBackend):
        backend.fixture.save(config.kg.fixture)
    return result, reports


# ---------------------------------------------------------------------------
# Ablation


@dataclass
class AblationRow:
    variant: str
    metrics: dict[str, dict]
    totals: dict[str, int]
    kg_backend_calls: int
    llm_calls: int
    llm_tokens: int
    wall_clock_s: float

    def as_dict(self) -> dict:
        return dict(vars(self))


def ablation_variants(config: RunConfig, axis: str, values: Optional[Sequence[int]] = None) -> list[tuple[str, RunConfig]]:
    if axis in RunConfig.TOGGLES:
        return [(f"{axis}=on", config.replace(**{axis: True})), (f"{axis}=off", config.replace(**{axis: False}))]
    if axis == "candidates":
        return [
            (f"K={k}", config.replace(cea_candidate_limit=k, cta_shortlist_limit=k))
            for k in (values or K_SWEEP)
        ]
    raise ConfigError(f"unknown ablation axis {axis!r}; use one of {RunConfig.TOGGLES + ('candidates',)}")


def ablate(
    config: RunConfig,
    axis: str,
    values: Optional[Sequence[int]] = None,
    *,
    kg_backend_factory=None,
    llm_backend_factory=None,
) -> list[AblationRow]:
    """Run one variant per setting of ``axis`` with fresh backends and counters."""
    config.validate()
    tables, targets = load_inputs(config)
    rows = []
    for name, variant in ablation_variants(config, axis, values):
        deps = build_deps(
            variant,
            kg_backend=kg_backend_factory() if kg_backend_factory else None,
            llm_backend=llm_backend_factory() if llm_backend_factory else None,
        )
        result = annotate_corpus(tables, targets, variant, deps)
        usage = deps.llm.usage_report()
        rows.append(
            AblationRow(
                name,
                {k: r.as_dict() for k, r in sorted(evaluate_result(result, variant).items())},
                result.totals(),
                deps.kg.stats.backend_calls,
                usage.call_count,
                usage.prompt_tokens + usage.completion_tokens,
                round(result.elapsed_s, 4),
            )
        )
    if config.output_dir is not None:
        atomic_write_text(Path(config.output_dir) / ABLATION_FILE, _dump([r.as_dict() for r in rows]))
    return rows


def format_ablation(rows: Sequence[AblationRow]) -> str:
    header = f"{'variant':<22}{'CEA F1':>8}{'CTA F1':>8}{'fresh':>8}{'reused':>8}{'kg':>6}{'llm':>6}{'tokens':>9}{'secs':>8}"
    lines = [header]
    for r in rows:
        cea = r.metrics.get(CEA, {}).get("f1")
        cta = r.metrics.get(CTA, {}).get("f1")
        lines.append(
            f"{r.variant:<22}"
            f"{'-' if cea is None else f'{cea:.3f}':>8}"
            f"{'-' if cta is None else f'{cta:.3f}':>8}"
            f"{r.totals['fresh_annotations']:>8}{r.totals['reused']:>8}"
            f"{r.kg_backend_calls:>6}{r.llm_calls:>6}{r.llm_tokens:>9}{r.wall_clock_s:>8.3f}"
        )
    return "\n".join(lines)
