"""Run configuration.

Precedence: defaults < YAML config file < environment (secrets, endpoints) <
command-line flags. Example file::

    tables: data/tables
    cea_targets: data/cea_targets.csv
    cta_targets: data/cta_targets.csv
    rep_cell_limit: 10
    cea_candidate_limit: 10
    cta_shortlist_limit: 10
    class_depth_m: 10
    threshold_factor_k: 0.2
    toggles: {dedup: true, topic_detection: true, kg_lookup: true, lev_reuse: true}
    llm: {base_url: null, model: null, stub_fixture: fixtures/llm_stub.json}
    kg: {fixture: fixtures/kg.json, mode: replay}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from sta_agent.kg import DBPEDIA_ONTOLOGY, DBPEDIA_RESOURCE

KG_MODES = ("live", "replay", "record")
CACHE_SCOPES = ("table", "run")


class ConfigError(ValueError):
    pass


@dataclass
class LlmSettings:
    base_url: Optional[str] = None
    model: Optional[str] = None
    stub_fixture: Optional[Path] = None
    requests_per_minute: float = 60.0
    timeout: float = 60.0

    @property
    def is_stub(self) -> bool:
        return self.stub_fixture is not None or not (self.base_url and self.model)


@dataclass
class KgSettings:
    mode: str = "live"
    fixture: Optional[Path] = None
    lookup_url: Optional[str] = None
    sparql_url: Optional[str] = None
    ontology_namespace: str = DBPEDIA_ONTOLOGY
    resource_namespace: str = DBPEDIA_RESOURCE
    cache: bool = True
    max_in_flight: int = 4
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 15.0


@dataclass
class RunConfig:
    tables: Optional[Path] = None
    cea_targets: Optional[Path] = None
    cta_targets: Optional[Path] = None
    gold_cea: Optional[Path] = None
    gold_cta: Optional[Path] = None
    output_dir: Optional[Path] = None
    tagger_fixture: Optional[Path] = None
    header: bool = True

    rep_cell_limit: int = 10
    cea_candidate_limit: int = 10
    cta_shortlist_limit: int = 10
    class_depth_m: int = 10
    threshold_factor_k: float = 0.2
    min_valid_cells: int = 3
    empty_cell_fraction: float = 0.5
    max_steps: int = 12

    dedup: bool = True
    topic_detection: bool = True
    kg_lookup: bool = True
    lev_reuse: bool = True

    cache_scope: str = "table"
    workers: int = 1

    llm: LlmSettings = field(default_factory=LlmSettings)
    kg: KgSettings = field(default_factory=KgSettings)

    TOGGLES = ("dedup", "topic_detection", "kg_lookup", "lev_reuse")

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def validate(self, *, check_paths: bool = True) -> "RunConfig":
        for name in ("rep_cell_limit", "cea_candidate_limit", "cta_shortlist_limit", "class_depth_m",
                     "min_valid_cells", "max_steps", "workers"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if not self.threshold_factor_k > 0:
            raise ConfigError(f"threshold_factor_k must be > 0, got {self.threshold_factor_k!r}")
        if not 0 < self.empty_cell_fraction <= 1:
            raise ConfigError(f"empty_cell_fraction must be in (0, 1], got {self.empty_cell_fraction!r}")
        if self.cache_scope not in CACHE_SCOPES:
            raise ConfigError(f"cache_scope must be one of {CACHE_SCOPES}, got {self.cache_scope!r}")
        if self.kg.mode not in KG_MODES:
            raise ConfigError(f"kg.mode must be one of {KG_MODES}, got {self.kg.mode!r}")
        if self.kg.mode in ("replay", "record") and self.kg.fixture is None:
            raise ConfigError(f"kg.mode={self.kg.mode} needs a fixture path")
        if self.kg.max_in_flight < 1 or self.kg.attempts < 1:
            raise ConfigError("kg.max_in_flight and kg.attempts must be >= 1")
        if check_paths:
            must_exist = [self.tables, self.cea_targets, self.cta_targets, self.gold_cea, self.gold_cta,
                          self.tagger_fixture, self.llm.stub_fixture]
            if self.kg.mode == "replay":
                must_exist.append(self.kg.fixture)
            for p in must_exist:
                if p is not None and not Path(p).exists():
                    raise ConfigError(f"path does not exist: {p}")
        return self

    def as_dict(self) -> dict:
        def conv(v):
            if isinstance(v, Path):
                return str(v)
            if dataclasses.is_dataclass(v):
                return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
            return v

        return conv(self)


_PATH_FIELDS = {"tables", "cea_targets", "cta_targets", "gold_cea", "gold_cta", "output_dir", "tagger_fixture"}


def _section(cls, data: Mapping[str, Any], base_dir: Path, path_fields: set[str]):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    values = {}
    for key, value in data.items():
        if key in path_fields and value is not None:
            value = Path(value)
            if not value.is_absolute():
                value = base_dir / value
        values[key] = value
    return values


def config_from_mapping(data: Mapping[str, Any], base_dir: Path = Path(".")) -> RunConfig:
    data = dict(data or {})
    llm = LlmSettings(**_section(LlmSettings, data.pop("llm", None) or {}, base_dir, {"stub_fixture"}))
    kg = KgSettings(**_section(KgSettings, data.pop("kg", None) or {}, base_dir, {"fixture"}))
    toggles = data.pop("toggles", None) or {}
    bad = set(toggles) - set(RunConfig.TOGGLES)
    if bad:
        raise ConfigError(f"unknown toggles: {sorted(bad)}")
    data.update(toggles)
    return RunConfig(llm=llm, kg=kg, **_section(RunConfig, data, base_dir, _PATH_FIELDS))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data, path.parent)
