import pytest
from hypothesis import given
from hypothesis import strategies as st

from eval_cases import CASES
from sta_agent.evaluate import ScoreError, metrics, normalize_uri, score


def write(path, rows):
    path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.mark.parametrize("task,system,gold,expected", CASES)
def test_hand_computed_cases(tmp_path, task, system, gold, expected):
    report = score(write(tmp_path / "s.csv", system), write(tmp_path / "g.csv", gold), task)
    for got, want in zip((report.precision, report.recall, report.f1), expected):
        assert abs(got - want) <= 1e-12


def test_perfect_match(tmp_path):
    rows = CASES[0][2]
    report = score(write(tmp_path / "s.csv", rows), write(tmp_path / "g.csv", rows), "CEA")
    assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)


def test_empty_system(tmp_path):
    report = score(write(tmp_path / "s.csv", []), write(tmp_path / "g.csv", CASES[0][2]), "cea")
    assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)


def test_duplicate_system_key(tmp_path):
    s = write(tmp_path / "s.csv", ["T,0,0,a", "T,0,0,b"])
    with pytest.raises(ScoreError, match="duplicate"):
        score(s, write(tmp_path / "g.csv", ["T,0,0,a"]), "CEA")


def test_bad_index(tmp_path):
    with pytest.raises(ScoreError):
        score(write(tmp_path / "s.csv", ["T,x,0,a"]), write(tmp_path / "g.csv", []), "CEA")


def test_normalize_uri():
    assert normalize_uri("HTTP://DBpedia.org/resource/A_%28b%29") == "http://dbpedia.org/resource/A_(b)"
    assert normalize_uri("<http://x.org/Path>") == "http://x.org/Path"


counts = st.integers(min_value=0, max_value=50)


@given(counts, counts, counts)
def test_metric_invariants(correct, extra_system, extra_target):
    r = metrics("CEA", correct, correct + extra_system, correct + extra_target)
    assert 0 <= r.f1 <= 1
    assert r.f1 <= 2 * min(r.precision, r.recall) + 1e-12
    swapped = metrics("CEA", correct, correct + extra_target, correct + extra_system)
    assert (swapped.precision, swapped.recall) == (r.recall, r.precision)
