from __future__ import annotations

import sys
from pathlib import Path

import pytest

from sta_agent.config import RunConfig
from sta_agent.kg import KgClient, ReplayBackend
from sta_agent.llm import LlmClient, StubLlm
from sta_agent.preprocessing import GazetteerTagger
from sta_agent.annotator import Deps

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden"


def golden_config(out_dir: Path | None = None, **changes) -> RunConfig:
    config = RunConfig(
        tables=GOLDEN / "tables",
        cea_targets=GOLDEN / "cea_targets.csv",
        cta_targets=GOLDEN / "cta_targets.csv",
        gold_cea=GOLDEN / "gold_cea.csv",
        gold_cta=GOLDEN / "gold_cta.csv",
        output_dir=out_dir,
    )
    config.kg.mode = "replay"
    config.kg.fixture = GOLDEN / "kg_fixture.json"
    config.llm.stub_fixture = GOLDEN / "llm_stub.json"
    return config.replace(**changes) if changes else config


def golden_deps(**kg_kwargs) -> Deps:
    kg = KgClient(ReplayBackend.from_file(GOLDEN / "kg_fixture.json"), sleep=lambda s: None, **kg_kwargs)
    llm = LlmClient(StubLlm.from_file(GOLDEN / "llm_stub.json"))
    return Deps(kg, llm, GazetteerTagger())


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture
def deps() -> Deps:
    return golden_deps()


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    status = "PASS" if report.passed else "FAIL"
    previous = _CRITERIA.get(number)
    if previous is None or previous[0] == "PASS":
        _CRITERIA[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
