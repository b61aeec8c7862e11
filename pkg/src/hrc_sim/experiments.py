"""Scenario construction, CI x SL x mode sweeps and the reports built on them."""

from __future__ import annotations

import csv
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .config import SimConfig, from_dict
from .engine import DeadlockError
from .metrics import METRICS_COLUMNS, RunMetrics, compute_metrics, metrics_row, write_csv
from .simulation import run

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    kind: str = "SRSW"
    n_robots: int = 1
    n_bs_workers: int = 1
    n_emr_workers: int = 1
    teams: int = 1
    mutual_help: bool = False

    def __post_init__(self) -> None:
        if self.kind == "SRSW":
            ok = (self.n_robots, self.n_bs_workers, self.n_emr_workers, self.teams) == (1, 1, 1, 1)
        elif self.kind == "MRSW":
            ok = self.n_robots >= 2 and self.n_bs_workers == 1 and self.n_emr_workers == self.n_robots
        elif self.kind == "MRMW":
            ok = self.teams >= 2 and self.n_robots == self.n_bs_workers == self.n_emr_workers == self.teams
        else:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not ok:
            raise ValueError(f"inconsistent {self.kind} composition: {self}")

    @classmethod
    def srsw(cls) -> "Scenario":
        return cls()

    @classmethod
    def mrsw(cls, robots: int) -> "Scenario":
        return cls("MRSW", robots, 1, robots, 1)

    @classmethod
    def mrmw(cls, teams: int, mutual_help: bool) -> "Scenario":
        return cls("MRMW", teams, teams, teams, teams, mutual_help)

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "Scenario":
        sc = cfg.scenario
        if sc.kind == "MRSW":
            return cls.mrsw(sc.robots)
        if sc.kind == "MRMW":
            return cls.mrmw(sc.teams, cfg.collaboration.mutual_help)
        return cls.srsw()

    def apply(self, cfg: SimConfig) -> SimConfig:
        changes = {"scenario.kind": self.kind, "collaboration.mutual_help": self.mutual_help}
        if self.kind == "MRSW":
            changes["scenario.robots"] = self.n_robots
        elif self.kind == "MRMW":
            changes["scenario.teams"] = self.teams
        return cfg.replace(**changes)


@dataclass(frozen=True)
class SweepSpec:
    base: SimConfig
    scenario: Scenario
    ci_grid: tuple[float, ...]
    sl_grid: tuple[int, ...]
    modes: tuple[str, ...] = ("passive", "proactive")
    replications: int = 20
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not self.ci_grid or not self.sl_grid or not self.modes:
            raise ValueError("sweep grids must be non-empty")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    @property
    def total_runs(self) -> int:
        return len(self.ci_grid) * len(self.sl_grid) * len(self.modes) * self.replications

    def cells(self) -> list[tuple[str, float, int, int]]:
        return [(mode, float(ci), int(sl), rep)
                for mode in self.modes for sl in self.sl_grid for ci in self.ci_grid
                for rep in range(self.replications)]


def derive_seed(master_seed: int, ci: float, sl: int, replication: int) -> int:
    """Seed of one replication of one (CI, SL) cell.

    Mode and scenario are deliberately left out so passive/proactive and
    1-team/k-team runs of the same cell are paired on identical streams.
    """
    key = [int(master_seed), int(round(ci * 1000)), int(sl), int(replication)]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint32)[0])


@dataclass
class SweepRow:
    scenario: str
    mode: str
    ci: float
    sl: int
    teams: int
    replication: int
    seed: int
    metrics: RunMetrics | None = None
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.metrics is None

    def csv_row(self) -> list[str]:
        return metrics_row(self.metrics, scenario=self.scenario, mode=self.mode, ci=self.ci, sl=self.sl,
                           teams=self.teams, replication=self.replication, seed=self.seed)


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, scenario: str | None = None, mode: str | None = None) -> "SweepTable":
        return SweepTable([r for r in self.rows
                           if (scenario is None or r.scenario == scenario) and (mode is None or r.mode == mode)])

    def scenarios(self) -> list[str]:
        return sorted({r.scenario for r in self.rows})

    def modes(self) -> list[str]:
        return sorted({r.mode for r in self.rows})

    def ci_values(self) -> list[float]:
        return sorted({r.ci for r in self.rows})

    def sl_values(self) -> list[int]:
        return sorted({r.sl for r in self.rows})

    def values(self, ci: float, sl: int, metric: str) -> list[float]:
        out = []
        for r in self.rows:
            if r.ci == ci and r.sl == sl and r.metrics is not None:
                out.append(float(getattr(r.metrics, metric)))
        return out

    def mean(self, ci: float, sl: int, metric: str) -> float:
        vals = self.values(ci, sl, metric)
        return statistics.fmean(vals) if vals else math.nan

    def std(self, ci: float, sl: int, metric: str) -> float:
        vals = self.values(ci, sl, metric)
        return statistics.stdev(vals) if len(vals) > 1 else 0.0

    def to_csv(self, path: Path | str) -> None:
        write_csv(path, METRICS_COLUMNS, (r.csv_row() for r in self.rows))

    @classmethod
    def from_csv(cls, path: Path | str) -> "SweepTable":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != METRICS_COLUMNS:
                raise ValueError(f"{path}: columns {reader.fieldnames} do not match the metrics schema")
            for rec in reader:
                metrics = None
                if rec["makespan_s"] != "":
                    gci = rec["gci_mean_s"]
                    metrics = RunMetrics(
                        makespan=float(rec["makespan_s"]), bricks_laid=int(rec["bricks"]),
                        cp=float(rec["cp_per_h"]), robot_utilization=float(rec["util"]),
                        starved_time=float(rec["starved_s"]), blocked_time=float(rec["blocked_s"]),
                        interruption_count=int(rec["interruptions"]), check_count=int(rec["checks"]),
                        redundant_check_count=int(rec["redundant_checks"]),
                        gci_per_robot={"mean": float(gci)} if gci else {},
                    )
                rows.append(SweepRow(rec["scenario"], rec["mode"], float(rec["ci_s"]), int(rec["sl"]),
                                     int(rec["teams"]), int(rec["replication"]), int(rec["seed"]), metrics,
                                     "" if metrics else "failed"))
        return cls(rows)


def _run_one(task: tuple[dict, int]) -> tuple[RunMetrics | None, str]:
    cfg_dict, seed = task
    cfg = from_dict(cfg_dict)
    try:
        timeline = run(cfg, seed=seed)
    except DeadlockError as exc:
        return None, f"deadlock: {exc} (stuck: {', '.join(exc.stuck_agents)})"
    if timeline.truncated:
        return None, f"time cap of {cfg.run.time_cap_s:g} s reached"
    return compute_metrics(timeline), ""


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepTable:
    """Run every cell x replication; failures become flagged rows."""
    base = spec.scenario.apply(spec.base)
    teams = spec.scenario.teams if spec.scenario.kind == "MRMW" else 1
    rows: list[SweepRow] = []
    tasks = []
    for mode, ci, sl, rep in spec.cells():
        seed = derive_seed(spec.master_seed, ci, sl, rep)
        cfg = base.replace(**{"collaboration.mode": mode, "collaboration.ci_s": ci, "collaboration.sl": sl})
        rows.append(SweepRow(spec.scenario.kind, mode, ci, sl, teams, rep, seed))
        tasks.append((cfg.to_dict(), seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (jobs * 8))))
    else:
        results = [_run_one(t) for t in tasks]
    for row, (metrics, error) in zip(rows, results):
        row.metrics, row.error = metrics, error
        if error:
            log.warning("%s %s ci=%g sl=%d rep=%d failed: %s", row.scenario, row.mode, row.ci, row.sl,
                        row.replication, error)
    return SweepTable(rows)


def write_failures(table: SweepTable, path: Path | str) -> int:
    failed = [r for r in table.rows if r.failed]
    write_csv(path, ["scenario", "mode", "ci_s", "sl", "replication", "seed", "error"],
              ([r.scenario, r.mode, repr(r.ci), str(r.sl), str(r.replication), str(r.seed), r.error]
               for r in failed))
    return len(failed)


# ---------------------------------------------------------------- surfaces

@dataclass
class TrendStats:
    sl: int
    slope: float
    r2: float
    spearman: float
    sign_changes: int

    @property
    def flattening(self) -> bool:
        return self.sign_changes > 0


@dataclass
class SurfaceReport:
    scenario: str
    mode: str
    ci_values: list[float]
    sl_values: list[int]
    mean_makespan: np.ndarray  # shape (len(sl), len(ci))
    std_makespan: np.ndarray
    trends: list[TrendStats]

    def trend(self, sl: int) -> TrendStats:
        return next(t for t in self.trends if t.sl == sl)


def trend_stats(ci: Sequence[float], makespan: Sequence[float], sl: int) -> TrendStats:
    x, y = np.asarray(ci, float), np.asarray(makespan, float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    flat = np.ptp(y) <= 1e-9 * max(1.0, float(np.abs(y).max()))
    r2 = 1.0 if flat else 1.0 - float(((y - (slope * x + intercept)) ** 2).sum()) / ss_tot
    rho = 0.0 if flat else float(spearmanr(x, y).statistic)
    d = np.sign(np.diff(y))
    d = d[d != 0]
    changes = int((d[1:] != d[:-1]).sum()) if len(d) > 1 else 0
    return TrendStats(sl, float(slope), r2, rho, changes)


def surface(table: SweepTable, scenario: str, mode: str) -> SurfaceReport:
    sub = table.select(scenario, mode)
    if not sub.rows:
        raise ValueError(f"no rows for {scenario}/{mode}")
    cis, sls = sub.ci_values(), sub.sl_values()
    missing = [(ci, sl) for sl in sls for ci in cis if not sub.values(ci, sl, "makespan")]
    if missing:
        listed = ", ".join(f"(ci={ci:g}, sl={sl})" for ci, sl in missing)
        raise ValueError(f"ragged {scenario}/{mode} grid, missing cells: {listed}")
    mean = np.array([[sub.mean(ci, sl, "makespan") for ci in cis] for sl in sls])
    std = np.array([[sub.std(ci, sl, "makespan") for ci in cis] for sl in sls])
    trends = [trend_stats(cis, mean[i], sl) for i, sl in enumerate(sls)] if len(cis) > 1 else []
    return SurfaceReport(scenario, mode, cis, sls, mean, std, trends)


def report_ci_sl_surface(table: SweepTable, scenario: str, mode: str, out_dir: Path | str) -> SurfaceReport:
    """Mean makespan per cell as CSV plus an SVG heatmap."""
    rep = surface(table, scenario, mode)
    out = Path(out_dir)
    rows = []
    for i, sl in enumerate(rep.sl_values):
        for j, ci in enumerate(rep.ci_values):
            rows.append([repr(ci), str(sl), repr(round(float(rep.mean_makespan[i, j]), 6)),
                         repr(round(float(rep.std_makespan[i, j]), 6))])
    write_csv(out / f"{scenario}_{mode}_surface.csv", ["ci_s", "sl", "makespan_mean_s", "makespan_std_s"], rows)
    write_csv(out / f"{scenario}_{mode}_trends.csv",
              ["sl", "slope", "r2", "spearman", "sign_changes", "flattening"],
              ([str(t.sl), repr(round(t.slope, 6)), repr(round(t.r2, 6)), repr(round(t.spearman, 6)),
                str(t.sign_changes), str(t.flattening).lower()] for t in rep.trends))
    (out / f"{scenario}_{mode}_surface.svg").write_text(heatmap_svg(rep), encoding="utf-8")
    return rep


def _ramp(v: float) -> str:
    # light yellow (short makespan) to dark blue (long)
    lo, hi = (255, 245, 180), (20, 40, 120)
    c = [round(a + (b - a) * v) for a, b in zip(lo, hi)]
    return "#{:02x}{:02x}{:02x}".format(*c)


def heatmap_svg(rep: SurfaceReport, cell: int = 40) -> str:
    nx, ny = len(rep.ci_values), len(rep.sl_values)
    left, top = 60, 40
    w, h = left + nx * cell + 120, top + ny * cell + 50
    vmin, vmax = float(np.nanmin(rep.mean_makespan)), float(np.nanmax(rep.mean_makespan))
    span = vmax - vmin or 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" '
           f'font-size="10">',
           f'<text x="{left}" y="20" font-size="13">{rep.scenario} {rep.mode}: mean makespan (s)</text>']
    for i, sl in enumerate(rep.sl_values):
        y = top + (ny - 1 - i) * cell  # SL grows upwards
        out.append(f'<text x="{left - 8}" y="{y + cell / 2 + 3}" text-anchor="end">{sl}</text>')
        for j, ci in enumerate(rep.ci_values):
            v = float(rep.mean_makespan[i, j])
            x = left + j * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_ramp((v - vmin) / span)}">'
                       f'<title>CI {ci:g} s, SL {sl}: {v:.0f} s</title></rect>')
    for j, ci in enumerate(rep.ci_values):
        out.append(f'<text x="{left + j * cell + cell / 2}" y="{top + ny * cell + 14}" '
                   f'text-anchor="middle">{ci:g}</text>')
    out.append(f'<text x="{left + nx * cell / 2}" y="{top + ny * cell + 32}" text-anchor="middle">CI (s)</text>')
    out.append(f'<text x="14" y="{top + ny * cell / 2}" transform="rotate(-90 14 {top + ny * cell / 2})" '
               f'text-anchor="middle">SL (bricks)</text>')
    lx = left + nx * cell + 20
    for k in range(10):
        out.append(f'<rect x="{lx}" y="{top + k * 12}" width="14" height="12" fill="{_ramp(k / 9)}"/>')
    out.append(f'<text x="{lx + 18}" y="{top + 9}">{vmin:.0f}</text>')
    out.append(f'<text x="{lx + 18}" y="{top + 117}">{vmax:.0f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- mode comparison

@dataclass
class ImprovementReport:
    cells: list[tuple[float, int, float, float, float]]  # ci, sl, cp passive, cp proactive, improvement
    skipped: list[tuple[float, int]]

    @property
    def improvements(self) -> np.ndarray:
        return np.array([c[4] for c in self.cells])

    @property
    def minimum(self) -> float:
        return float(self.improvements.min())

    @property
    def median(self) -> float:
        return float(np.median(self.improvements))

    @property
    def maximum(self) -> float:
        return float(self.improvements.max())

    @property
    def fraction_over_20(self) -> float:
        return float((self.improvements > 0.2).mean())


def mode_improvement(table: SweepTable, scenario: str) -> ImprovementReport:
    passive, proactive = table.select(scenario, "passive"), table.select(scenario, "proactive")
    cells, skipped = [], []
    grid = sorted({(r.ci, r.sl) for r in passive.rows} | {(r.ci, r.sl) for r in proactive.rows},
                  key=lambda k: (k[1], k[0]))
    for ci, sl in grid:
        a, b = passive.values(ci, sl, "cp"), proactive.values(ci, sl, "cp")
        if not a or not b:
            log.warning("%s ci=%g sl=%d lacks a counterpart mode, skipped", scenario, ci, sl)
            skipped.append((ci, sl))
            continue
        cp_a, cp_b = statistics.fmean(a), statistics.fmean(b)
        cells.append((ci, sl, cp_a, cp_b, cp_b / cp_a - 1.0))
    if not cells:
        raise ValueError(f"no {scenario} cells with both modes")
    return ImprovementReport(cells, skipped)


def report_mode_improvement(table: SweepTable, scenario: str, out_dir: Path | str) -> ImprovementReport:
    rep = mode_improvement(table, scenario)
    rows = [[repr(ci), str(sl), repr(round(a, 6)), repr(round(b, 6)), repr(round(imp, 6))]
            for ci, sl, a, b, imp in rep.cells]
    rows.append(["summary", "", "", "",
                 f"min={rep.minimum:.6f};median={rep.median:.6f};max={rep.maximum:.6f};"
                 f"frac_over_20pct={rep.fraction_over_20:.6f}"])
    write_csv(Path(out_dir) / f"{scenario}_mode_improvement.csv",
              ["ci_s", "sl", "cp_passive", "cp_proactive", "improvement"], rows)
    return rep


# ---------------------------------------------------------------- scale effect

@dataclass
class ScaleReport:
    teams: int
    cells: list[tuple[float, int, float]]  # ci, sl, per-team CP ratio

    @property
    def fraction_with_effect(self) -> float:
        return float(np.mean([r > 1.0 for _, _, r in self.cells]))

    def ratios(self, sl: int) -> list[tuple[float, float]]:
        return [(ci, r) for ci, s, r in self.cells if s == sl]


def scale_effect(table_1team: SweepTable, table_kteam: SweepTable, teams: int) -> ScaleReport:
    grid_1 = {(r.ci, r.sl) for r in table_1team.rows}
    grid_k = {(r.ci, r.sl) for r in table_kteam.rows}
    if grid_1 != grid_k:
        raise ValueError(f"mismatched grids: {sorted(grid_1 ^ grid_k)}")
    cells = []
    for ci, sl in sorted(grid_1, key=lambda k: (k[1], k[0])):
        one = table_1team.mean(ci, sl, "cp")
        many = table_kteam.mean(ci, sl, "cp")
        cells.append((ci, sl, (many / teams) / one))
    return ScaleReport(teams, cells)


def report_scale_effect(table_1team: SweepTable, table_kteam: SweepTable, teams: int, out_dir: Path | str,
                        name: str = "scale_effect") -> ScaleReport:
    rep = scale_effect(table_1team, table_kteam, teams)
    rows = [[repr(ci), str(sl), repr(round(r, 6)), str(r > 1.0).lower()] for ci, sl, r in rep.cells]
    rows.append(["summary", "", f"teams={teams}", f"fraction_with_effect={rep.fraction_with_effect:.6f}"])
    write_csv(Path(out_dir) / f"{name}.csv", ["ci_s", "sl", "per_team_cp_ratio", "scale_effect"], rows)
    return rep


def large_ci_band(flags: Sequence[bool]) -> int:
    """Length of the run of set flags that ends at the largest CI."""
    n = 0
    for flag in reversed(list(flags)):
        if not flag:
            break
        n += 1
    return n


# ---------------------------------------------------------------- GCI in full simulation

def simulated_gci(base: SimConfig, n_workers: int, ci: float, replications: int,
                  master_seed: int = 0) -> dict[str, float]:
    """Per-robot GCI averaged over replications of an n-team mutual-help run."""
    cfg = Scenario.mrmw(n_workers, True).apply(base) if n_workers > 1 else Scenario.srsw().apply(base)
    cfg = cfg.replace(**{"collaboration.ci_s": ci, "collaboration.phase_mode": "random",
                         "collaboration.mode": "passive"})
    per_robot: dict[str, list[float]] = {}
    for rep in range(replications):
        m = compute_metrics(run(cfg, seed=derive_seed(master_seed, ci, n_workers, rep)))
        for robot, gci in m.gci_per_robot.items():
            per_robot.setdefault(robot, []).append(gci)
    return {robot: statistics.fmean(v) for robot, v in sorted(per_robot.items())}


def grid_spec(cfg: SimConfig, scenario: Scenario | None = None) -> SweepSpec:
    sw = cfg.sweep
    if sw is None:
        raise ValueError("config has no sweep section")
    return SweepSpec(cfg, scenario or Scenario.from_config(cfg), tuple(sw.ci_grid), tuple(sw.sl_grid),
                     tuple(sw.modes), sw.replications, cfg.run.master_seed)


def merge(tables: Iterable[SweepTable]) -> SweepTable:
    return SweepTable([r for t in tables for r in t.rows])


def write_reports(table: SweepTable, out_dir: Path | str) -> list[str]:
    """Every report the table supports; returns one summary line per report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for scenario in table.scenarios():
        for mode in table.select(scenario).modes():
            rep = report_ci_sl_surface(table, scenario, mode, out)
            for t in rep.trends:
                lines.append(f"{scenario} {mode} sl={t.sl}: slope={t.slope:.3f} r2={t.r2:.4f} "
                             f"spearman={t.spearman:+.3f} sign_changes={t.sign_changes}")
        if set(table.select(scenario).modes()) >= {"passive", "proactive"}:
            imp = report_mode_improvement(table, scenario, out)
            lines.append(f"{scenario} proactive vs passive: min={imp.minimum:+.1%} median={imp.median:+.1%} "
                         f"max={imp.maximum:+.1%} cells>20%={imp.fraction_over_20:.0%}")
    kinds = table.scenarios()
    if "SRSW" in kinds and "MRMW" in kinds:
        many = table.select("MRMW")
        teams = many.rows[0].teams
        for mode in sorted(set(many.modes()) & set(table.select("SRSW").modes())):
            rep = report_scale_effect(table.select("SRSW", mode), many.select(mode=mode), teams, out,
                                      name=f"scale_effect_{mode}")
            lines.append(f"scale effect ({mode}, {teams} teams): "
                         f"cells with ratio>1 = {rep.fraction_with_effect:.0%}")
    return lines
