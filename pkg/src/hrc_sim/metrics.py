"""Site recorder, derived run metrics and Gantt/metrics exports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .engine import SchedulingError

GANTT_COLUMNS = ["agent_id", "agent_kind", "state", "start_s", "end_s"]
METRICS_COLUMNS = [
    "scenario", "mode", "ci_s", "sl", "teams", "replication", "seed",
    "makespan_s", "bricks", "cp_per_h", "util", "starved_s", "blocked_s",
    "interruptions", "checks", "redundant_checks", "gci_mean_s",
]

STATE_COLORS = {
    "Laying": "#2e7d32",
    "Moving": "#81c784",
    "Starved": "#c62828",
    "Blocked": "#f9a825",
    "Done": "#bdbdbd",
    "Working": "#1565c0",
    "Walking": "#90caf9",
    "Checking": "#8e24aa",
    "Fetching": "#ff8f00",
    "Supplying": "#6d4c41",
    "Idle": "#eeeeee",
}

ROBOT_GAP_STATES = {"Starved", "Blocked"}


@dataclass(frozen=True)
class Interval:
    agent_id: str
    state: str
    t_start: float
    t_end: float


@dataclass(frozen=True)
class Mark:
    """Point event: a check arrival, a laid brick, a delivery."""

    time: float
    agent_id: str
    kind: str
    target: str = ""
    detail: str = ""


@dataclass
class StateTimeline:
    intervals: list[Interval] = field(default_factory=list)
    marks: list[Mark] = field(default_factory=list)
    agent_kinds: dict[str, str] = field(default_factory=dict)
    makespan: float = 0.0
    config_hash: str = ""
    master_seed: int = 0
    demand: int = 0
    truncated: bool = False

    def for_agent(self, agent_id: str) -> list[Interval]:
        return [iv for iv in self.intervals if iv.agent_id == agent_id]

    def agents(self, kind: str | None = None) -> list[str]:
        return [a for a, k in self.agent_kinds.items() if kind is None or k == kind]

    def time_in(self, agent_id: str, state: str) -> float:
        return sum(iv.t_end - iv.t_start for iv in self.intervals if iv.agent_id == agent_id and iv.state == state)


class Recorder:
    """Collects per-agent state intervals as transitions happen."""

    def __init__(self) -> None:
        self._open: dict[str, tuple[str, float]] = {}
        self._closed: dict[str, list[Interval]] = {}
        self.kinds: dict[str, str] = {}
        self.marks: list[Mark] = []

    def register(self, agent_id: str, kind: str) -> None:
        self.kinds[agent_id] = kind
        self._closed[agent_id] = []

    def state_of(self, agent_id: str) -> str | None:
        open_ = self._open.get(agent_id)
        return open_[0] if open_ else None

    def record_transition(self, agent_id: str, new_state: str, time: float) -> None:
        closed = self._closed.setdefault(agent_id, [])
        current = self._open.get(agent_id)
        last = current[1] if current else (closed[-1].t_end if closed else 0.0)
        if time < last:
            raise SchedulingError(f"{agent_id}: transition to {new_state} at t={time} precedes t={last}")
        if current is None:
            if closed and closed[-1].t_end == time and closed[-1].state == new_state:
                prev = closed.pop()
                self._open[agent_id] = (new_state, prev.t_start)
            else:
                self._open[agent_id] = (new_state, time)
            return
        state, start = current
        if state == new_state:
            return
        if time == start:
            # zero-width interval: overwrite, then merge with an identical predecessor
            if closed and closed[-1].state == new_state and closed[-1].t_end == time:
                prev = closed.pop()
                self._open[agent_id] = (new_state, prev.t_start)
            else:
                self._open[agent_id] = (new_state, time)
            return
        closed.append(Interval(agent_id, state, start, time))
        self._open[agent_id] = (new_state, time)

    def mark(self, time: float, agent_id: str, kind: str, target: str = "", detail: str = "") -> None:
        self.marks.append(Mark(time, agent_id, kind, target, detail))

    def finish(self, end: float, **meta) -> StateTimeline:
        for agent_id, (state, start) in list(self._open.items()):
            if end > start:
                self._closed[agent_id].append(Interval(agent_id, state, start, end))
        self._open.clear()
        intervals = [iv for agent in self.kinds for iv in self._closed.get(agent, [])]
        return StateTimeline(intervals=intervals, marks=list(self.marks), agent_kinds=dict(self.kinds), makespan=end, **meta)


@dataclass
class RunMetrics:
    makespan: float = 0.0
    bricks_laid: int = 0
    cp: float = 0.0
    robot_utilization: float = 0.0
    starved_time: float = 0.0
    blocked_time: float = 0.0
    moving_time: float = 0.0
    interruption_count: int = 0
    check_count: int = 0
    redundant_check_count: int = 0
    gci_per_robot: dict[str, float] = field(default_factory=dict)
    improvement_vs_baseline: float | None = None

    @property
    def gci_mean(self) -> float | None:
        if not self.gci_per_robot:
            return None
        return sum(self.gci_per_robot.values()) / len(self.gci_per_robot)


def count_interruptions(intervals: Iterable[Interval]) -> int:
    """Number of maximal stretches spent Starved or Blocked."""
    count, inside, last_end = 0, False, None
    for iv in intervals:
        gap = iv.state in ROBOT_GAP_STATES
        contiguous = last_end is not None and iv.t_start == last_end
        if gap and not (inside and contiguous):
            count += 1
        inside = gap
        last_end = iv.t_end
    return count


def mean_gap(times: list[float]) -> float | None:
    if len(times) < 2:
        return None
    times = sorted(times)
    return (times[-1] - times[0]) / (len(times) - 1)


def compute_metrics(timeline: StateTimeline) -> RunMetrics:
    """Derive every run statistic from the recorded timeline alone."""
    if timeline.makespan <= 0 and not timeline.intervals:
        return RunMetrics()
    m = RunMetrics(makespan=timeline.makespan)
    m.bricks_laid = sum(1 for mk in timeline.marks if mk.kind == "laid")
    m.cp = m.bricks_laid / m.makespan * 3600.0 if m.makespan > 0 else 0.0

    active_total = laying_total = 0.0
    for robot in timeline.agents("robot"):
        ivs = timeline.for_agent(robot)
        active = [iv for iv in ivs if iv.state != "Done"]
        active_total += sum(iv.t_end - iv.t_start for iv in active)
        laying_total += sum(iv.t_end - iv.t_start for iv in active if iv.state == "Laying")
        m.starved_time += sum(iv.t_end - iv.t_start for iv in active if iv.state == "Starved")
        m.blocked_time += sum(iv.t_end - iv.t_start for iv in active if iv.state == "Blocked")
        m.moving_time += sum(iv.t_end - iv.t_start for iv in active if iv.state == "Moving")
        m.interruption_count += count_interruptions(ivs)
    m.robot_utilization = laying_total / active_total if active_total > 0 else 0.0

    arrivals: dict[str, list[float]] = {}
    for mk in timeline.marks:
        if mk.kind != "check":
            continue
        m.check_count += 1
        if mk.detail == "redundant":
            m.redundant_check_count += 1
        arrivals.setdefault(mk.target, []).append(mk.time)
    for robot, times in sorted(arrivals.items()):
        gap = mean_gap(times)
        if gap is not None:
            m.gci_per_robot[robot] = gap
    return m


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(round(value, 6))
    return str(value)


def metrics_row(metrics: RunMetrics | None, *, scenario: str, mode: str, ci: float, sl: int,
                teams: int, replication: int, seed: int) -> list[str]:
    """One row of the metrics CSV; ``metrics=None`` marks a failed run (blank results)."""
    head = [scenario, mode, _fmt(float(ci)), str(sl), str(teams), str(replication), str(seed)]
    if metrics is None:
        return head + [""] * (len(METRICS_COLUMNS) - len(head))
    return head + [
        _fmt(metrics.makespan), str(metrics.bricks_laid), _fmt(metrics.cp),
        _fmt(metrics.robot_utilization), _fmt(metrics.starved_time), _fmt(metrics.blocked_time),
        str(metrics.interruption_count), str(metrics.check_count),
        str(metrics.redundant_check_count), _fmt(metrics.gci_mean),
    ]


def write_csv(path: Path | str, header: list[str], rows: Iterable[list[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def export_gantt(timeline: StateTimeline, path: Path | str, svg_path: Path | str | None = None) -> None:
    rows = [
        [iv.agent_id, timeline.agent_kinds.get(iv.agent_id, ""), iv.state, _fmt(iv.t_start), _fmt(iv.t_end)]
        for iv in timeline.intervals
    ]
    write_csv(path, GANTT_COLUMNS, rows)
    if svg_path is not None:
        Path(svg_path).write_text(gantt_svg(timeline), encoding="utf-8")


def gantt_svg(timeline: StateTimeline, width: int = 1200, band: int = 26) -> str:
    """State-band chart, one row per agent, colours from ``STATE_COLORS``."""
    agents = list(timeline.agent_kinds)
    label_w, top = 150, 30
    legend_h = 30
    height = top + band * len(agents) + legend_h + 30
    span = timeline.makespan or 1.0
    scale = (width - label_w - 20) / span
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{label_w}" y="18">makespan {timeline.makespan:.0f} s</text>',
    ]
    for row, agent in enumerate(agents):
        y = top + row * band
        out.append(f'<text x="4" y="{y + band * 0.65:.1f}">{agent} ({timeline.agent_kinds[agent]})</text>')
    for iv in timeline.intervals:
        row = agents.index(iv.agent_id)
        x = label_w + iv.t_start * scale
        w = max((iv.t_end - iv.t_start) * scale, 0.1)
        color = STATE_COLORS.get(iv.state, "#000000")
        out.append(
            f'<rect x="{x:.2f}" y="{top + row * band + 3}" width="{w:.2f}" height="{band - 6}" '
            f'fill="{color}"><title>{iv.state} {iv.t_start:.1f}-{iv.t_end:.1f}</title></rect>'
        )
    ly = top + band * len(agents) + 20
    for i, (state, color) in enumerate(STATE_COLORS.items()):
        x = label_w + i * 90
        out.append(f'<rect x="{x}" y="{ly}" width="12" height="12" fill="{color}" stroke="#555"/>')
        out.append(f'<text x="{x + 16}" y="{ly + 10}">{state}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
