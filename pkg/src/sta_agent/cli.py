"""Command-line entry point: ``sta annotate | score | ablate | record-fixtures``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from sta_agent.config import ConfigError, RunConfig, load_config
from sta_agent.evaluate import ScoreError, score
from sta_agent.kg import KgError, KgFixtureMiss
from sta_agent.runner import K_SWEEP, ablate, format_ablation, run
from sta_agent.table import TableLoadError

logger = logging.getLogger("sta_agent")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_FIXTURE_MISS = 3


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--tables", type=Path, help="directory of *.csv tables")
    p.add_argument("--cea-targets", type=Path)
    p.add_argument("--cta-targets", type=Path)
    p.add_argument("--gold-cea", type=Path)
    p.add_argument("--gold-cta", type=Path)
    p.add_argument("--no-header", action="store_true", help="first CSV row is data, not a header")
    p.add_argument("--out", type=Path, dest="output_dir", help="output directory")
    p.add_argument("--kg-fixture", type=Path, help="KG fixture JSON (replay unless --kg-mode says otherwise)")
    p.add_argument("--kg-mode", choices=["live", "replay", "record"])
    p.add_argument("--no-kg-cache", action="store_true")
    p.add_argument("--llm-stub", type=Path, help="stub LLM fixture JSON")
    p.add_argument("--llm-base-url")
    p.add_argument("--llm-model")
    p.add_argument("--tagger-fixture", type=Path, help="gazetteer JSON for the entity-type tagger")
    p.add_argument("--workers", type=int)
    p.add_argument("-k", "--threshold-factor", type=float, dest="threshold_factor_k")
    p.add_argument("--candidates", type=int, help="candidate count K for both CEA lookup and CTA shortlist")
    p.add_argument("--class-depth", type=int, dest="class_depth_m")
    p.add_argument("--rep-cells", type=int, dest="rep_cell_limit")
    p.add_argument("--cache-scope", choices=["table", "run"])
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--no-topic", action="store_true")
    p.add_argument("--no-kg", action="store_true")
    p.add_argument("--no-reuse", action="store_true")


def build_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    for name in ("tables", "cea_targets", "cta_targets", "gold_cea", "gold_cta", "output_dir", "tagger_fixture",
                 "workers", "threshold_factor_k", "class_depth_m", "rep_cell_limit", "cache_scope"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if args.candidates is not None:
        config.cea_candidate_limit = config.cta_shortlist_limit = args.candidates
    if args.no_header:
        config.header = False
    for flag, toggle in (("no_dedup", "dedup"), ("no_topic", "topic_detection"), ("no_kg", "kg_lookup"),
                         ("no_reuse", "lev_reuse")):
        if getattr(args, flag):
            setattr(config, toggle, False)
    if args.kg_fixture is not None:
        config.kg.fixture = args.kg_fixture
        if args.kg_mode is None:
            config.kg.mode = "replay"
    if args.kg_mode is not None:
        config.kg.mode = args.kg_mode
    if args.no_kg_cache:
        config.kg.cache = False
    if args.llm_stub is not None:
        config.llm.stub_fixture = args.llm_stub
    if args.llm_base_url is not None:
        config.llm.base_url = args.llm_base_url
    if args.llm_model is not None:
        config.llm.model = args.llm_model
    return config


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sta", description="Semantic table annotation (CTA / CEA).")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate tables and write SemTab-style outputs")
    _run_options(p)

    p = sub.add_parser("record-fixtures", help="annotate against the live KG and record a replay fixture")
    _run_options(p)

    p = sub.add_parser("ablate", help="rerun the corpus once per setting of one axis")
    _run_options(p)
    p.add_argument("--axis", required=True,
                   choices=[*RunConfig.TOGGLES, "candidates"])
    p.add_argument("--values", type=int, nargs="+", default=list(K_SWEEP), help="K values for --axis candidates")

    p = sub.add_parser("score", help="precision/recall/F1 of a system file against gold")
    p.add_argument("--system", type=Path, required=True)
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--task", choices=["CEA", "CTA", "cea", "cta"], required=True)
    p.add_argument("--out", type=Path, help="write the report JSON here as well")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "score":
            report = score(args.system, args.gold, args.task)
            text = json.dumps(report.as_dict(), indent=2, sort_keys=True)
            if args.out:
                args.out.write_text(text + "\n", encoding="utf-8")
            print(text)
            return EXIT_OK

        config = build_config(args)
        if args.command == "record-fixtures":
            config.kg.mode = "record"
        if args.command == "ablate":
            rows = ablate(config, args.axis, args.values)
            print(format_ablation(rows))
            return EXIT_OK

        result, reports = run(config)
        totals = result.totals()
        print(f"annotated {len(result.cea)} cells and {len(result.cta)} columns "
              f"({totals['fresh_annotations']} fresh, {totals['reused']} reused) -> {config.output_dir}")
        for task, report in sorted(reports.items()):
            print(f"{task}: P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f}")
        return EXIT_OK
    except KgFixtureMiss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIXTURE_MISS
    except (ConfigError, ScoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TableLoadError, KgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
