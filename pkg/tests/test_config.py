import pytest

from sta_agent.config import ConfigError, RunConfig, load_config


def test_defaults():
    c = RunConfig()
    assert (c.rep_cell_limit, c.cea_candidate_limit, c.cta_shortlist_limit, c.class_depth_m) == (10, 10, 10, 10)
    assert c.threshold_factor_k == 0.2
    assert all(getattr(c, t) for t in RunConfig.TOGGLES)


@pytest.mark.parametrize("change", [{"threshold_factor_k": 0}, {"cea_candidate_limit": 0}, {"cache_scope": "global"}])
def test_invalid_values(change):
    with pytest.raises(ConfigError):
        RunConfig(**change).validate(check_paths=False)


def test_missing_path():
    with pytest.raises(ConfigError, match="does not exist"):
        RunConfig(tables="/no/such/dir").validate()


def test_load_yaml_resolves_relative_paths(tmp_path):
    (tmp_path / "t").mkdir()
    cfg = tmp_path / "run.yaml"
    cfg.write_text("tables: t\nthreshold_factor_k: 0.3\ntoggles:\n  dedup: false\nkg:\n  mode: live\n")
    c = load_config(cfg).validate()
    assert c.tables == tmp_path / "t"
    assert c.threshold_factor_k == 0.3 and c.dedup is False


def test_unknown_key(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("candidate_count: 5\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_config(cfg)
