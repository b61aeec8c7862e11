"""Run configuration: defaults, YAML parsing, validation and dotted overrides.

Every setting has a flat dotted key (``collaboration.ci_s``, ``workers.fatigue.alpha``)
and that key is what overrides and error messages refer to. Unknown keys are
rejected so a typo in a sweep script fails loudly instead of being ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised with the complete list of problems found in a configuration."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _f(default, doc: str, reported: bool = False, **kw):
    # reported=False marks an assumed default rather than a published value
    if isinstance(default, (list, dict)):
        return field(default_factory=lambda d=default: list(d) if isinstance(d, list) else dict(d),
                     metadata={"doc": doc, "reported": reported}, **kw)
    return field(default=default, metadata={"doc": doc, "reported": reported}, **kw)


@dataclass
class SiteConfig:
    wall_length_m: float = _f(10.0, "length of each wall")
    courses: int = _f(6, "brick courses per wall")
    bricks_per_course: int = _f(40, "bricks in one course")
    storage_offset_m: float = _f(-6.0, "storage position relative to its wall origin")
    storage_capacity: int | None = _f(None, "storage capacity in bricks (null = unlimited)")
    storage_stock: int | None = _f(None, "initial storage stock (null = unlimited)")
    team_spacing_m: float = _f(20.0, "distance between the origins of neighbouring walls")


@dataclass
class RobotConfig:
    lay_time_s: float = _f(18.0, "nominal laying time per brick")
    move_speed_mps: float = _f(0.5, "repositioning speed")
    reach_m: float = _f(1.0, "distance the arm reaches before the base must move")
    buffer_capacity: int = _f(12, "bricks the robot can hold")
    initial_buffer: int | None = _f(None, "bricks on board at t=0 (null = full)")
    safety_radius_m: float = _f(0.2, "workers closer than this to the next brick block the robot")
    backlog_limit: int | None = _f(8, "laid-but-uncleaned bricks that block laying (null = unlimited)")


@dataclass
class FatigueConfig:
    enabled: bool = _f(True, "apply fatigue to worker task durations")
    lambda_per_s: float = _f(1.0 / 7200.0, "fatigue accumulation rate while working")
    mu_per_s: float = _f(1.0 / 900.0, "fatigue recovery rate while idle")
    alpha: float = _f(0.5, "performance loss per unit fatigue")
    m_min: float = _f(0.4, "floor of the performance multiplier")


@dataclass
class ForgettingConfig:
    enabled: bool = _f(False, "apply forgetting to periodic checks")
    p_skip: float = _f(0.0, "probability a scheduled check is forgotten")
    extra_delay_mean_s: float = _f(0.0, "mean lateness of a remembered check")


@dataclass
class WorkerConfig:
    walk_speed_mps: float = _f(1.2, "walking speed")
    clean_time_s: float = _f(25.0, "nominal mortar removal time per brick")
    carry_capacity: int = _f(12, "bricks carried per supply trip")
    load_time_s: float = _f(2.0, "time to load (and to unload) one brick")
    check_time_s: float = _f(5.0, "time spent inspecting a robot's buffer")
    fatigue: FatigueConfig = field(default_factory=FatigueConfig)
    forgetting: ForgettingConfig = field(default_factory=ForgettingConfig)


@dataclass
class CollaborationConfig:
    ci_s: float = _f(240.0, "check interval")
    sl: int = _f(4, "supply limit: a check at or below this level triggers supply")
    mode: str = _f("passive", "passive (periodic checks) or proactive (robot signals)")
    mutual_help: bool = _f(False, "BS workers also check and supply other teams' robots")
    reaction_delay_s: float = _f(10.0, "worker response latency to a proactive signal")
    phase_mode: str = _f("deterministic", "initial check phases: deterministic or random")
    check_walk: bool = _f(True, "workers walk to the robot to check (false = remote check)")
    heartbeat: bool = _f(False, "keep periodic checks running in proactive mode")


@dataclass
class ScenarioConfig:
    kind: str = _f("SRSW", "SRSW, MRSW or MRMW")
    robots: int = _f(2, "robots served by the single BS worker (MRSW)")
    teams: int = _f(2, "identical robot+BS+EMR teams (MRMW)")


@dataclass
class RunSettings:
    master_seed: int = _f(0, "master seed of all random streams")
    time_cap_s: float = _f(10 * 86400.0, "simulated-time cap")


@dataclass
class SweepConfig:
    ci_grid: list[float] = _f([120.0 * k for k in range(1, 16)], "check intervals to sweep")
    sl_grid: list[int] = _f([0, 5, 10, 11, 12], "supply limits to sweep")
    modes: list[str] = _f(["passive", "proactive"], "interaction modes to sweep")
    replications: int = _f(20, "replications per grid cell")
    scale_teams: int | None = _f(None, "also run an MRMW sweep with this many teams and compare")


@dataclass
class SimConfig:
    site: SiteConfig = field(default_factory=SiteConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    workers: WorkerConfig = field(default_factory=WorkerConfig)
    collaboration: CollaborationConfig = field(default_factory=CollaborationConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    run: RunSettings = field(default_factory=RunSettings)
    sweep: SweepConfig | None = None

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        if data["sweep"] is None:
            del data["sweep"]
        return data

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **dotted: Any) -> "SimConfig":
        """Copy with dotted-key overrides, e.g. ``cfg.replace(**{"collaboration.sl": 5})``."""
        data = self.to_dict()
        for key, value in dotted.items():
            _set_dotted(data, key, value)
        return from_dict(data)


# ---------------------------------------------------------------- parsing

def _unwrap_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _coerce(value: Any, tp: Any, key: str, problems: list[str]) -> Any:
    base, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        problems.append(f"{key} must not be null")
        return None
    if dataclasses.is_dataclass(base):
        return _build(base, value, key, problems)
    origin = typing.get_origin(base)
    if origin is list:
        (item_tp,) = typing.get_args(base)
        if not isinstance(value, list):
            problems.append(f"{key} must be a list")
            return []
        return [_coerce(v, item_tp, f"{key}[{i}]", problems) for i, v in enumerate(value)]
    if base is bool:
        if not isinstance(value, bool):
            problems.append(f"{key} must be true or false")
        return bool(value)
    if base is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            problems.append(f"{key} must be an integer")
            return 0
        return int(value)
    if base is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{key} must be a number")
            return 0.0
        return float(value)
    if base is str:
        if not isinstance(value, str):
            problems.append(f"{key} must be a string")
        return str(value)
    return value


def _build(cls, data: Any, prefix: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{prefix or 'config'} must be a mapping")
        return cls()
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            problems.append(f"unknown key '{_join(prefix, key)}'")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(data[f.name], hints[f.name], _join(prefix, f.name), problems)
        elif f.name == "sweep":
            kwargs[f.name] = None
    return cls(**kwargs)


def _join(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else str(key)


def _set_dotted(data: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        if node.get(part) is None:
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def validate(cfg: SimConfig) -> list[str]:
    """Every range and cross-reference violation, in key order."""
    p: list[str] = []

    def positive(key: str, value: float | None, allow_none: bool = False) -> None:
        if value is None:
            if not allow_none:
                p.append(f"{key} must be set")
        elif value <= 0:
            p.append(f"{key} must be > 0")

    def nonneg(key: str, value: float | None) -> None:
        if value is not None and value < 0:
            p.append(f"{key} must be >= 0")

    s, r, w, c = cfg.site, cfg.robot, cfg.workers, cfg.collaboration
    positive("site.wall_length_m", s.wall_length_m)
    nonneg("site.courses", s.courses)
    positive("site.bricks_per_course", s.bricks_per_course)
    nonneg("site.storage_capacity", s.storage_capacity)
    nonneg("site.storage_stock", s.storage_stock)
    if s.storage_stock is not None and s.storage_capacity is not None and s.storage_stock > s.storage_capacity:
        p.append("site.storage_stock must be <= site.storage_capacity")
    if cfg.scenario.kind != "SRSW" and s.team_spacing_m < s.wall_length_m:
        p.append("site.team_spacing_m must be >= site.wall_length_m (walls would overlap)")

    positive("robot.lay_time_s", r.lay_time_s)
    positive("robot.move_speed_mps", r.move_speed_mps)
    nonneg("robot.reach_m", r.reach_m)
    positive("robot.buffer_capacity", r.buffer_capacity)
    if r.initial_buffer is not None and not 0 <= r.initial_buffer <= r.buffer_capacity:
        p.append("robot.initial_buffer must lie in [0, robot.buffer_capacity]")
    nonneg("robot.safety_radius_m", r.safety_radius_m)
    positive("robot.backlog_limit", r.backlog_limit, allow_none=True)

    positive("workers.walk_speed_mps", w.walk_speed_mps)
    positive("workers.clean_time_s", w.clean_time_s)
    positive("workers.carry_capacity", w.carry_capacity)
    positive("workers.load_time_s", w.load_time_s)
    nonneg("workers.check_time_s", w.check_time_s)
    fa = w.fatigue
    nonneg("workers.fatigue.lambda_per_s", fa.lambda_per_s)
    nonneg("workers.fatigue.mu_per_s", fa.mu_per_s)
    if not 0.0 <= fa.alpha <= 1.0:
        p.append("workers.fatigue.alpha must lie in [0, 1]")
    if not 0.0 < fa.m_min <= 1.0:
        p.append("workers.fatigue.m_min must lie in (0, 1]")
    fo = w.forgetting
    if not 0.0 <= fo.p_skip <= 1.0:
        p.append("workers.forgetting.p_skip must lie in [0, 1]")
    nonneg("workers.forgetting.extra_delay_mean_s", fo.extra_delay_mean_s)

    positive("collaboration.ci_s", c.ci_s)
    if not 0 <= c.sl <= r.buffer_capacity:
        p.append("collaboration.sl must lie in [0, robot.buffer_capacity]")
    if c.mode not in ("passive", "proactive"):
        p.append("collaboration.mode must be 'passive' or 'proactive'")
    nonneg("collaboration.reaction_delay_s", c.reaction_delay_s)
    if c.phase_mode not in ("deterministic", "random"):
        p.append("collaboration.phase_mode must be 'deterministic' or 'random'")

    sc = cfg.scenario
    if sc.kind not in ("SRSW", "MRSW", "MRMW"):
        p.append("scenario.kind must be SRSW, MRSW or MRMW")
    if sc.kind == "MRSW" and sc.robots < 2:
        p.append("scenario.robots must be >= 2 for MRSW")
    if sc.kind == "MRMW" and sc.teams < 2:
        p.append("scenario.teams must be >= 2 for MRMW")

    nonneg("run.master_seed", cfg.run.master_seed)
    positive("run.time_cap_s", cfg.run.time_cap_s)

    if cfg.sweep is not None:
        sw = cfg.sweep
        if not sw.ci_grid:
            p.append("sweep.ci_grid must not be empty")
        for i, ci in enumerate(sw.ci_grid):
            positive(f"sweep.ci_grid[{i}]", ci)
        if not sw.sl_grid:
            p.append("sweep.sl_grid must not be empty")
        for i, sl in enumerate(sw.sl_grid):
            if not 0 <= sl <= r.buffer_capacity:
                p.append(f"sweep.sl_grid[{i}] must lie in [0, robot.buffer_capacity]")
        if not sw.modes or any(m not in ("passive", "proactive") for m in sw.modes):
            p.append("sweep.modes must be a non-empty subset of [passive, proactive]")
        positive("sweep.replications", sw.replications)
        if sw.scale_teams is not None and sw.scale_teams < 2:
            p.append("sweep.scale_teams must be >= 2")
    return p


def from_dict(data: dict[str, Any]) -> SimConfig:
    problems: list[str] = []
    cfg = _build(SimConfig, data, "", problems)
    if problems:
        raise ConfigError(problems)
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_value(text: str) -> Any:
    return yaml.safe_load(text)


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``key=value`` strings (values parsed as YAML scalars)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override '{item}' is not of the form key=value"])
        key, text = item.split("=", 1)
        _set_dotted(data, key.strip(), parse_value(text))
    return data


def load_dict(path: Path | str) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed config {path}: {exc}"]) from exc
    return data or {}


def parse_config(path: Path | str | None = None, overrides: list[str] | None = None) -> SimConfig:
    """Load, override and validate a config file; ``path=None`` starts from defaults."""
    data = load_dict(path) if path is not None else {}
    if overrides:
        data = apply_overrides(data, overrides)
    return from_dict(data)


def resolve_seed(cfg: SimConfig, flag: int | None = None) -> int:
    """Seed precedence: config < ``HRC_SIM_SEED`` < command-line flag."""
    if flag is not None:
        return int(flag)
    env = os.environ.get("HRC_SIM_SEED")
    if env not in (None, ""):
        return int(env)
    return cfg.run.master_seed


def dump_config(cfg: SimConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def defaults_yaml(with_sweep: bool = True) -> str:
    """Default configuration with one comment per key."""
    cfg = SimConfig(sweep=SweepConfig() if with_sweep else None)
    lines: list[str] = []
    _emit(cfg, lines, 0)
    return "\n".join(lines) + "\n"


def _emit(obj, lines: list[str], depth: int) -> None:
    pad = "  " * depth
    for f in fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            lines.append(f"{pad}{f.name}:")
            _emit(value, lines, depth + 1)
            continue
        doc = f.metadata.get("doc", "")
        tag = "" if f.metadata.get("reported") else "  # non-paper default"
        rendered = yaml.safe_dump(value, default_flow_style=True).strip()
        if rendered.endswith("\n..."):
            rendered = rendered[:-4].strip()
        rendered = rendered.removesuffix("...").strip()
        lines.append(f"{pad}{f.name}: {rendered}{tag}; {doc}" if tag else f"{pad}{f.name}: {rendered}  # {doc}")
