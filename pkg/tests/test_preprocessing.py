import json

from hypothesis import given
from hypothesis import strategies as st

from sta_agent.llm import FailingLlm, LlmClient, LlmTask, StubLlm
from sta_agent.preprocessing import (
    UNTYPED,
    CorrectionKind,
    GazetteerTagger,
    TableView,
    correct_cells,
    dedup_representative_cells,
    flag_inconsistent_cells,
    profile_entity_types,
)
from sta_agent.table import CellRef, parse_table

STUB = {"CellCorrect": {"spelling": {"Lodnon": "London"}, "abbreviations": {"NYC": "New York City"}}}


def refs(*texts):
    return [(CellRef("T", i, 0), t) for i, t in enumerate(texts)]


def test_dedup_examples():
    assert dedup_representative_cells(["A", "A", "B", "", "A", "C"], 10) == ["A", "B", "C"]
    xs = [f"x{i}" for i in range(1, 21)]
    assert dedup_representative_cells(xs, 10) == xs[:10]
    assert dedup_representative_cells([], 10) == []


@given(st.lists(st.sampled_from(["", "a", "b", "c", "d"])), st.integers(min_value=1, max_value=5))
def test_dedup_unique_and_bounded(cells, limit):
    out = dedup_representative_cells(cells, limit)
    assert len(out) == len(set(out)) <= limit
    assert "" not in out


def test_profile_examples():
    tagger = GazetteerTagger()
    p = profile_entity_types(["Paris", "London", "42"], tagger)
    assert p.type_counts == {"NUMBER": 1, "PLACE": 2}
    assert p.predominant == "PLACE"
    assert profile_entity_types(["qwe", "rty"], tagger).predominant == UNTYPED
    assert profile_entity_types(["Paris"], tagger).predominant == "PLACE"


def test_profile_tie_breaks_lexicographically():
    p = profile_entity_types(["Paris", "42"], GazetteerTagger())
    assert p.predominant == "NUMBER"


def test_flagging():
    tagger = GazetteerTagger()
    cells = refs("Paris", "Lodnon", "Rome")
    p = profile_entity_types([t for _, t in cells], tagger)
    assert flag_inconsistent_cells(cells, p, tagger) == [CellRef("T", 1, 0)]
    home = refs("Paris", "Rome")
    assert flag_inconsistent_cells(home, profile_entity_types(["Paris", "Rome"], tagger), tagger) == []
    odd = refs("qwe", "Paris", "rty")
    assert flag_inconsistent_cells(odd, profile_entity_types(["qwe", "Paris", "rty"], tagger), tagger) == []


def test_gazetteer_from_file(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"gazetteer": {"ANIMAL": ["Lion"]}}))
    assert GazetteerTagger.from_file(path).tag("lion") == "ANIMAL"


def test_spell_fix_and_abbreviation():
    llm = LlmClient(StubLlm(STUB))
    out = correct_cells(refs("Lodnon", "NYC", "Paris"), "city", ["Paris", "Rome"], llm)
    assert [(c.corrected, c.kind) for c in out] == [
        ("London", CorrectionKind.SPELL_FIX),
        ("New York City", CorrectionKind.ABBREV_EXPANSION),
        ("Paris", CorrectionKind.UNCHANGED),
    ]
    assert llm.usage_report().calls(LlmTask.CELL_CORRECT) == 1


def test_backend_failure_leaves_cells_unchanged():
    out = correct_cells(refs("Lodnon"), "city", [], LlmClient(FailingLlm()))
    assert out[0].kind is CorrectionKind.UNCHANGED
    assert out[0].corrected == "Lodnon"


def test_view_overlay():
    table = parse_table("city\nLodnon\nParis\n", "T")
    view = TableView(table)
    view.apply(correct_cells([(CellRef("T", 0, 0), "Lodnon")], "city", [], LlmClient(StubLlm(STUB))))
    assert view.column(0) == ["London", "Paris"]
    assert table.cell(0, 0) == "Lodnon"
