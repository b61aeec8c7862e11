"""Human-robot interaction rules: check interval, supply limit, modes, mutual help."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .agents import Robot, RobotState, Worker
from .environment import travel_time


class Mode(str, Enum):
    PASSIVE = "passive"
    PROACTIVE = "proactive"


class PhaseMode(str, Enum):
    DETERMINISTIC = "deterministic"
    RANDOM = "random"


@dataclass(frozen=True)
class CollaborationParams:
    ci: float = 600.0
    sl: int = 4
    mode: Mode = Mode.PASSIVE
    mutual_help: bool = False
    reaction_delay: float = 10.0
    phase_mode: PhaseMode = PhaseMode.DETERMINISTIC
    # checks are done remotely (no walking) when False
    check_walk: bool = True
    # proactive mode keeps the periodic checks as a fallback when True
    heartbeat: bool = False

    def __post_init__(self) -> None:
        if self.ci <= 0:
            raise ValueError("ci must be > 0")
        if self.sl < 0:
            raise ValueError("sl must be >= 0")
        if self.reaction_delay < 0:
            raise ValueError("reaction_delay must be >= 0")


class Leg(str, Enum):
    TO_STORAGE = "ToStorage"
    LOADING = "Loading"
    TO_ROBOT = "ToRobot"


@dataclass
class SupplyTask:
    """Fill-to-full delivery of one robot, carried out in one or more trips."""

    worker_id: str
    robot_id: str
    bricks_to_deliver: int
    leg: Leg = Leg.TO_STORAGE
    delivered: int = 0
    trips: list[int] = field(default_factory=list)

    @property
    def remaining(self) -> int:
        return self.bricks_to_deliver - self.delivered


def decide_supply(buffer_level: int, sl: int) -> bool:
    """A check triggers supply when the buffer is at or below the supply limit."""
    return buffer_level <= sl


def phase_offsets(n: int, ci: float, mode: PhaseMode, rng: np.random.Generator | None = None) -> list[float]:
    """Initial check phase for each of ``n`` workers sharing a check schedule."""
    if mode is PhaseMode.DETERMINISTIC:
        return [i * ci / n for i in range(n)]
    if rng is None:
        raise ValueError("random phases need a generator")
    return [float(x) for x in rng.uniform(0.0, ci, size=n)]


def select_robot(
    own: Sequence[str],
    robots: Sequence[Robot],
    mutual_help: bool,
    in_flight: set[str],
) -> str | None:
    """Robot a BS worker should serve next.

    Without mutual help the choice is restricted to the worker's own robots.
    With mutual help every robot is eligible. Among eligible robots with no
    supply task in flight the emptiest wins, ties to the lowest id. If every
    eligible robot already has a task in flight the worker's first own robot
    is returned (a check-only visit). ``None`` means every robot is done.
    """
    live = [r for r in robots if r.state is not RobotState.DONE]
    if not live:
        return None
    pool = live if mutual_help else [r for r in live if r.id in own]
    free = [r for r in pool if r.id not in in_flight]
    if free:
        return min(free, key=lambda r: (r.buffer_level, _id_key(r.id))).id
    own_live = [r.id for r in live if r.id in own]
    return own_live[0] if own_live else None


def _id_key(robot_id: str) -> tuple[int, str]:
    digits = "".join(ch for ch in robot_id if ch.isdigit())
    return (int(digits) if digits else -1, robot_id)


def trip_plan(deficit: int, carry_capacity: int) -> list[int]:
    """Trip loads for a fill-to-full delivery ignoring consumption in transit."""
    if carry_capacity <= 0:
        raise ValueError("carry_capacity must be > 0")
    full, rest = divmod(max(deficit, 0), carry_capacity)
    return [carry_capacity] * full + ([rest] if rest else [])


def trip_duration(worker: Worker, start: float, storage: float, robot: float, load: int) -> float:
    """Walk to storage, load, walk to robot, unload (no fatigue)."""
    walk_out = travel_time(start, storage, worker.walk_speed)
    walk_back = travel_time(storage, robot, worker.walk_speed)
    return walk_out + worker.load_time * load + walk_back + worker.load_time * load
