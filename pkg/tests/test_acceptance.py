"""Acceptance gate: one or more tests per criterion, summarised as PASS/FAIL lines."""

from __future__ import annotations

import random
import string
import time

import pytest

from conftest import GOLDEN, golden_config, golden_deps
from eval_cases import CASES
from oracles import cta_tally, lev_recursive
from sta_agent.annotator import AnnotationCache, annotate_table, cta_scores, levenshtein, levenshtein_below, try_reuse
from sta_agent.config import RunConfig
from sta_agent.evaluate import score
from sta_agent.kg import CandidateClass, KgClient
from sta_agent.llm import LlmClient, LlmTask, StubLlm
from sta_agent.preprocessing import GazetteerTagger
from sta_agent.annotator import Deps
from sta_agent.runner import annotate_corpus, build_deps, run
from sta_agent.table import CellRef, Table, TargetSet, load_tables, load_targets

R = "http://dbpedia.org/resource/"
O = "http://dbpedia.org/ontology/"


# ---------------------------------------------------------------------------
# 1. Edit distance against the recursive oracle


@pytest.mark.criterion(1, "edit distance == recursive oracle on 10,000 pairs (<10 s); metric laws on 1,000 triples")
def test_c1_oracle_equivalence():
    rng = random.Random(1)
    start = time.perf_counter()
    for _ in range(10_000):
        a = "".join(rng.choices("abcd", k=rng.randint(0, 8)))
        b = "".join(rng.choices("abcd", k=rng.randint(0, 8)))
        assert levenshtein(a, b) == lev_recursive(a, b), (a, b)
    assert time.perf_counter() - start < 10


@pytest.mark.criterion(1, "edit distance == recursive oracle on 10,000 pairs (<10 s); metric laws on 1,000 triples")
def test_c1_metric_properties():
    rng = random.Random(2)
    for _ in range(1_000):
        a, b, c = ("".join(rng.choices("abcd", k=rng.randint(0, 8))) for _ in range(3))
        ab, ba = levenshtein(a, b), levenshtein(b, a)
        assert ab == ba
        assert (ab == 0) == (a == b)
        assert abs(len(a) - len(b)) <= ab <= max(len(a), len(b))
        assert levenshtein(a, c) <= ab + levenshtein(b, c)


# ---------------------------------------------------------------------------
# 2. Class scoring against the tally oracle


@pytest.mark.criterion(2, "class scores == tally oracle on 500 collections; rank vector 1.0..0.1")
def test_c2_tally_oracle():
    rng = random.Random(3)
    pool = [O + f"C{i}" for i in range(15)]
    for _ in range(500):
        lists = []
        for _ in range(rng.randint(0, 10)):
            uris = rng.sample(pool, rng.randint(0, 10))
            lists.append([CandidateClass(u, u, r) for r, u in enumerate(uris, start=1)])
        got = [(s.class_uri, s.cta_score) for s in cta_scores(lists)]
        assert got == cta_tally(lists)


@pytest.mark.criterion(2, "class scores == tally oracle on 500 collections; rank vector 1.0..0.1")
def test_c2_rank_vector():
    uris = [O + f"C{i:02d}" for i in range(10)]
    out = {s.class_uri: s.cta_score for s in cta_scores([[CandidateClass(u, u, r) for r, u in enumerate(uris, 1)]])}
    assert [out[u] for u in uris] == [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]


# ---------------------------------------------------------------------------
# 3. Reuse on a synthetic corpus with a known duplicate rate

N_CELLS = 1_000
N_SEEDS = 340


def _one_edit(word: str, rng: random.Random) -> str:
    i = rng.randrange(len(word))
    op = rng.choice("sid")
    letters = string.ascii_lowercase
    if op == "s":
        return word[:i] + rng.choice([c for c in letters if c != word[i]]) + word[i + 1:]
    if op == "i":
        return word[:i] + rng.choice(letters) + word[i:]
    return word[:i] + word[i + 1:]


def synthetic_corpus():
    """340 well-separated seeds plus 660 one-edit variants, shuffled.

    Returns the table and a map from every cell text to its seed's entity.
    """
    rng = random.Random(4)
    seeds: list[str] = []
    while len(seeds) < N_SEEDS:
        word = "".join(rng.choices(string.ascii_lowercase, k=rng.randint(16, 20)))
        # Keep seeds far apart so a variant can only match its own seed.
        if not any(levenshtein_below(word, s, 8) for s in seeds):
            seeds.append(word)
    cells = list(seeds)
    owner = {s: s for s in seeds}
    while len(cells) < N_CELLS:
        seed = rng.choice(seeds)
        variant = _one_edit(seed, rng)
        if variant in owner:
            continue
        owner[variant] = seed
        cells.append(variant)
    rng.shuffle(cells)
    table = Table("synthetic", ("name",), tuple((c,) for c in cells))
    return table, {c: R + owner[c].capitalize() for c in cells}


class ClusterKg:
    """Every spelling of a seed resolves to the seed's entity first, a decoy second."""

    def __init__(self, entity_of):
        self.entity_of = entity_of

    def lookup(self, text, limit):
        return [{"uri": self.entity_of[text]}, {"uri": R + text + "_(decoy)"}][:limit]

    def classes(self, uri, limit):
        return []


def synthetic_run(table, entity_of, *, lev_reuse):
    deps = Deps(KgClient(ClusterKg(entity_of)), LlmClient(StubLlm()), GazetteerTagger())
    config = RunConfig(lev_reuse=lev_reuse)
    start = time.perf_counter()
    result = annotate_table(table, TargetSet(None, []), deps, config)
    return result, deps, time.perf_counter() - start


@pytest.fixture(scope="module")
def synthetic():
    table, entity_of = synthetic_corpus()
    return table, entity_of, synthetic_run(table, entity_of, lev_reuse=True), synthetic_run(table, entity_of, lev_reuse=False)


@pytest.mark.criterion(3, "reuse: fresh <= 340 + seeds, reduction >= 60% and within 10 pp of 66%, < 30 s")
def test_c3_reuse_reduction(synthetic):
    table, _, (on, deps_on, secs_on), (off, _, secs_off) = synthetic
    fresh_on = on.telemetry.fresh_annotations
    fresh_off = off.telemetry.fresh_annotations
    duplicate_rate = (N_CELLS - N_SEEDS) / N_CELLS
    reduction = 1 - fresh_on / fresh_off
    print(f"fresh with reuse {fresh_on}, without {fresh_off}, reduction {reduction:.3f}, "
          f"secs {secs_on:.2f}+{secs_off:.2f}")
    assert fresh_off == N_CELLS
    assert fresh_on <= 340 + N_SEEDS
    assert reduction >= 0.60
    assert abs(reduction - duplicate_rate) <= 0.10
    assert secs_on + secs_off < 30
    assert deps_on.llm.usage_report().calls(LlmTask.CEA_SELECT) == fresh_on


# ---------------------------------------------------------------------------
# 4. Threshold arithmetic


def _cache(text, uri):
    cache = AnnotationCache(0.2)
    cache.add(text, uri)
    return cache


@pytest.mark.criterion(4, "reuse threshold: Mississipi hit, cat hit, car miss")
def test_c4_threshold_examples():
    assert try_reuse("Mississipi", _cache("Mississippi", "uri1")) == "uri1"
    assert try_reuse("cat", _cache("cat", "uri2")) == "uri2"
    assert try_reuse("car", _cache("cat", "uri2")) is None


# ---------------------------------------------------------------------------
# 5. Routing per column situation

FULL = ["ColumnTopic", "EntityLinking", "ClassLookup", "ClassRank", "CtaSelect"]


@pytest.mark.criterion(5, "routing: topic first for (a), CtaSelect only and no CEA for (b), no topic for (c)")
def test_c5_routing(tmp_path):
    result, _ = run(golden_config(tmp_path))
    tools = {t.table_id: t.tools for t in result.telemetry}
    situations = {t.table_id: t.situations for t in result.telemetry}
    assert situations["players"] == {0: "HeaderlessWithCells", 1: "HeaderlessWithCells", 2: "HeaderlessWithCells"}
    assert tools["players"] == {0: FULL, 1: FULL, 2: FULL}
    assert situations["parks"] == {1: "HeadersWithEmptyCells"}
    assert tools["parks"] == {1: ["CtaSelect"]}
    parks = next(t for t in result.telemetry if t.table_id == "parks")
    assert parks.cells_processed == 0 and not any(a.cell.table_id == "parks" for a in result.cea)
    assert situations["films"] == {0: "FullyMeaningful", 1: "FullyMeaningful"}
    assert tools["films"] == {0: FULL[1:], 1: FULL[1:]}


@pytest.mark.criterion(5, "routing: topic first for (a), CtaSelect only and no CEA for (b), no topic for (c)")
def test_c5_empty_column_makes_no_cea_calls():
    tables = load_tables(GOLDEN / "tables")
    deps = golden_deps()
    cea_on_empty_column = [CellRef("parks", r, 1) for r in range(3)]
    result = annotate_table(tables["parks"], TargetSet(cea_on_empty_column, [("parks", 1)]), deps, RunConfig())
    assert result.telemetry.tools == {1: ["CtaSelect"]}
    assert result.cea == []
    usage = deps.llm.usage_report()
    assert usage.calls(LlmTask.CEA_SELECT) == 0
    assert deps.kg.stats.requests == 0


# ---------------------------------------------------------------------------
# 6. Golden end-to-end run

OUTPUTS = ("cea.csv", "cta.csv", "telemetry.json", "metrics.json")


@pytest.mark.criterion(6, "golden run: byte-identical across runs and workers {1,4}; Cristiano_Ronaldo and SoccerPlayer")
def test_c6_golden_run(tmp_path):
    outputs = []
    for i, workers in enumerate((1, 1, 4, 4)):
        out = tmp_path / f"run{i}"
        run(golden_config(out, workers=workers))
        outputs.append({name: (out / name).read_bytes() for name in OUTPUTS})
    assert all(o == outputs[0] for o in outputs[1:])
    for name in ("cea.csv", "cta.csv"):
        assert outputs[0][name] == (GOLDEN / "expected" / name).read_bytes()
    cea = outputs[0]["cea.csv"].decode()
    cta = outputs[0]["cta.csv"].decode()
    assert f"players,0,0,{R}Cristiano_Ronaldo\n" in cea
    assert f"players,0,{O}SoccerPlayer\n" in cta


# ---------------------------------------------------------------------------
# 7. Metrics


@pytest.mark.criterion(7, "metrics: three hand-computed pairs to 1e-12; perfect 1/1/1, empty 0/0/0")
@pytest.mark.parametrize("task,system,gold,expected", CASES)
def test_c7_hand_computed(tmp_path, task, system, gold, expected):
    s = tmp_path / "s.csv"
    g = tmp_path / "g.csv"
    s.write_text("".join(r + "\n" for r in system))
    g.write_text("".join(r + "\n" for r in gold))
    report = score(s, g, task)
    for got, want in zip((report.precision, report.recall, report.f1), expected):
        assert abs(got - want) <= 1e-12


@pytest.mark.criterion(7, "metrics: three hand-computed pairs to 1e-12; perfect 1/1/1, empty 0/0/0")
def test_c7_edge_cases(tmp_path):
    gold = GOLDEN / "gold_cta.csv"
    perfect = score(gold, gold, "CTA")
    assert (perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    none = score(empty, gold, "CTA")
    assert (none.precision, none.recall, none.f1) == (0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# 8. Cache transparency


@pytest.mark.criterion(8, "KG cache changes no output bytes; reuse changes no CEA URI where answers coincide")
def test_c8_kg_cache_transparent(tmp_path):
    on = golden_config(tmp_path / "on")
    off = golden_config(tmp_path / "off")
    off.kg.cache = False
    run(on)
    run(off)
    for name in ("cea.csv", "cta.csv", "metrics.json"):
        assert (tmp_path / "on" / name).read_bytes() == (tmp_path / "off" / name).read_bytes()


@pytest.mark.criterion(8, "KG cache changes no output bytes; reuse changes no CEA URI where answers coincide")
def test_c8_reuse_transparent_on_golden(tmp_path):
    run(golden_config(tmp_path / "on"))
    run(golden_config(tmp_path / "off", lev_reuse=False))
    assert (tmp_path / "on" / "cea.csv").read_bytes() == (tmp_path / "off" / "cea.csv").read_bytes()


@pytest.mark.criterion(8, "KG cache changes no output bytes; reuse changes no CEA URI where answers coincide")
def test_c8_reuse_transparent_on_synthetic(synthetic):
    _, entity_of, (on, _, _), (off, _, _) = synthetic
    assert [(a.cell, a.entity_uri) for a in on.cea] == [(a.cell, a.entity_uri) for a in off.cea]
    assert all(a.entity_uri == entity_of[table_text] for a, table_text in
               zip(on.cea, (r[0] for r in synthetic[0].rows)))


# ---------------------------------------------------------------------------
# 9. Token accounting


@pytest.mark.criterion(9, "usage report call counts == telemetry-predicted counts on the golden corpus")
def test_c9_token_accounting():
    config = golden_config()
    tables = load_tables(config.tables)
    targets = load_targets(config.cea_targets, config.cta_targets, tables)
    deps = build_deps(config)
    result = annotate_corpus(tables, targets, config, deps)
    usage = deps.llm.usage_report()
    totals = result.totals()

    predicted_cea = len(targets.cea_targets) - totals["reused"] - totals["abstained"]
    assert totals["cells_processed"] == len(targets.cea_targets)
    assert totals["short_circuits"] == totals["fallbacks"] == 0
    assert usage.calls(LlmTask.CEA_SELECT) == predicted_cea == 13

    topic_columns = sum(tools.count("ColumnTopic") for t in result.telemetry for tools in t.tools.values())
    assert usage.calls(LlmTask.COLUMN_TOPIC) == topic_columns == 3
    assert usage.calls(LlmTask.CTA_SELECT) == len(targets.cta_targets)
    corrected_columns = sum(1 for t in result.telemetry for c in t.corrections.values() if c["flagged"])
    assert usage.calls(LlmTask.CELL_CORRECT) == corrected_columns
    assert usage.call_count == predicted_cea + topic_columns + len(targets.cta_targets) + corrected_columns
