import pytest
import yaml

from hrc_sim.config import (
    ConfigError,
    SimConfig,
    defaults_yaml,
    dump_config,
    from_dict,
    parse_config,
    resolve_seed,
)


def test_defaults_are_valid(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("scenario:\n  kind: SRSW\n")
    assert parse_config(path) == SimConfig()


def test_zero_ci_is_rejected_with_its_key():
    with pytest.raises(ConfigError) as exc:
        parse_config(overrides=["collaboration.ci_s=0"])
    assert "collaboration.ci_s must be > 0" in exc.value.problems


def test_unknown_key_is_named(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("colaboration:\n  ci_s: 300\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(path)
    assert any("colaboration" in p for p in exc.value.problems)


def test_all_violations_are_listed():
    with pytest.raises(ConfigError) as exc:
        parse_config(overrides=["collaboration.ci_s=-1", "robot.lay_time_s=0", "workers.fatigue.alpha=2"])
    assert len(exc.value.problems) == 3


def test_type_errors_are_reported():
    with pytest.raises(ConfigError) as exc:
        from_dict({"site": {"courses": "many"}})
    assert exc.value.problems == ["site.courses must be an integer"]


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("site: [unclosed\n")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_round_trip_is_identity(tmp_path):
    cfg = parse_config(overrides=["collaboration.mode=proactive", "scenario.kind=MRMW", "scenario.teams=3",
                                  "site.storage_stock=500", "site.storage_capacity=800"])
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert parse_config(path) == cfg
    assert parse_config(path).digest() == cfg.digest()


def test_printed_defaults_parse_back(tmp_path):
    text = defaults_yaml()
    assert "# non-paper default" in text
    path = tmp_path / "d.yaml"
    path.write_text(text)
    cfg = parse_config(path)
    assert cfg.sweep is not None
    assert cfg.replace(sweep=None) == SimConfig()


def test_seed_precedence(monkeypatch):
    cfg = SimConfig().replace(**{"run.master_seed": 5})
    monkeypatch.delenv("HRC_SIM_SEED", raising=False)
    assert resolve_seed(cfg) == 5
    monkeypatch.setenv("HRC_SIM_SEED", "11")
    assert resolve_seed(cfg) == 11
    assert resolve_seed(cfg, 3) == 3


def test_cross_field_validation():
    with pytest.raises(ConfigError) as exc:
        parse_config(overrides=["collaboration.sl=99"])
    assert "collaboration.sl must lie in [0, robot.buffer_capacity]" in exc.value.problems
    with pytest.raises(ConfigError):
        parse_config(overrides=["scenario.kind=MRSW", "site.team_spacing_m=5"])


def test_overrides_parse_yaml_scalars():
    cfg = parse_config(overrides=["robot.backlog_limit=null", "collaboration.mutual_help=true"])
    assert cfg.robot.backlog_limit is None and cfg.collaboration.mutual_help is True
    with pytest.raises(ConfigError):
        parse_config(overrides=["no-equals-sign"])
