"""Robot and worker records, human-factor models and per-step decisions.

The functions here are pure: they inspect agent and wall state and return
what the agent should do next. Scheduling the consequences is the job of
:mod:`hrc_sim.simulation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .environment import Wall, brick_position, travel_time


class RobotState(str, Enum):
    LAYING = "Laying"
    MOVING = "Moving"
    STARVED = "Starved"
    BLOCKED = "Blocked"
    DONE = "Done"


class WorkerState(str, Enum):
    WORKING = "Working"
    WALKING = "Walking"
    CHECKING = "Checking"
    FETCHING = "Fetching"
    SUPPLYING = "Supplying"
    IDLE = "Idle"


class Role(str, Enum):
    EMR = "EMR"
    BS = "BS"


@dataclass(frozen=True)
class FatigueState:
    """Fatigue level ``F`` in [0, 1] with its accumulation/recovery rates.

    ``lam`` applies while working and ``mu`` while idle, both in 1/s.
    Performance multiplier is ``max(m_min, 1 - alpha * F)``.
    """

    F: float = 0.0
    lam: float = 1.0 / 7200.0
    mu: float = 1.0 / 900.0
    alpha: float = 0.5
    m_min: float = 0.4

    @property
    def multiplier(self) -> float:
        return max(self.m_min, 1.0 - self.alpha * self.F)


def fatigue_evolve(state: FatigueState, duration: float, working: bool) -> FatigueState:
    """Closed-form solution of ``dF/dt = lam (1 - F)`` (work) or ``-mu F`` (rest)."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if working:
        F = 1.0 - (1.0 - state.F) * math.exp(-state.lam * duration)
    else:
        F = state.F * math.exp(-state.mu * duration)
    return replace(state, F=min(1.0, max(0.0, F)))


def effective_duration(nominal: float, fatigue: FatigueState) -> float:
    return nominal / fatigue.multiplier


@dataclass(frozen=True)
class ForgettingModel:
    p_skip: float = 0.0
    extra_delay_mean: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_skip <= 1.0:
            raise ValueError("p_skip must lie in [0, 1]")

    def draw(self, rng: np.random.Generator) -> float | None:
        """Lateness of a scheduled check in seconds, or ``None`` if it is forgotten."""
        if self.p_skip > 0.0 and rng.random() < self.p_skip:
            return None
        if self.extra_delay_mean > 0.0:
            return float(rng.exponential(self.extra_delay_mean))
        return 0.0


@dataclass
class Robot:
    id: str
    wall: Wall
    position: float
    move_speed: float
    lay_time: float
    buffer_capacity: int
    buffer_level: int
    safety_radius: float
    backlog_limit: int | None
    reach: float = 1.0
    state: RobotState = RobotState.STARVED
    team: int = 0
    holding: int = 0  # brick picked from the buffer, not yet laid

    @property
    def next_brick_position(self) -> float:
        return brick_position(self.wall, self.wall.lay_cursor)


@dataclass
class Worker:
    id: str
    role: Role
    position: float
    walk_speed: float
    clean_time: float = 25.0
    carry_capacity: int = 12
    load_time: float = 2.0
    fatigue: FatigueState = field(default_factory=FatigueState)
    forgetting: ForgettingModel = field(default_factory=ForgettingModel)
    state: WorkerState = WorkerState.IDLE
    team: int = 0


@dataclass(frozen=True)
class Lay:
    duration: float
    move_time: float = 0.0
    target: float = 0.0


@dataclass(frozen=True)
class Starve:
    pass


@dataclass(frozen=True)
class Block:
    reason: str  # "backlog" or "safety"


def robot_try_lay(robot: Robot, wall: Wall, workers: list[Worker]) -> Lay | Starve | Block:
    """Decide the robot's next action at a decision instant.

    Blocking takes precedence over starvation. Repositioning is needed only
    when the next brick lies beyond the robot's reach from its base.
    """
    if robot.backlog_limit is not None and wall.backlog >= robot.backlog_limit:
        return Block("backlog")
    target = brick_position(wall, wall.lay_cursor)
    if robot.safety_radius > 0 and any(abs(w.position - target) < robot.safety_radius for w in workers):
        return Block("safety")
    if robot.buffer_level <= 0:
        return Starve()
    move = 0.0
    if abs(target - robot.position) > robot.reach:
        move = travel_time(robot.position, target, robot.move_speed)
    return Lay(duration=move + robot.lay_time, move_time=move, target=target)


@dataclass(frozen=True)
class Clean:
    brick: int
    duration: float
    nominal: float
    target: float


@dataclass(frozen=True)
class Wait:
    pass


def emr_step(worker: Worker, wall: Wall) -> Clean | Wait:
    """Next mortar-removal action; walking to the brick is folded into the duration."""
    if worker.role is not Role.EMR:
        raise ValueError(f"{worker.id} is not an EMR worker")
    if wall.clean_cursor >= wall.lay_cursor:
        return Wait()
    target = brick_position(wall, wall.clean_cursor)
    nominal = worker.clean_time + travel_time(worker.position, target, worker.walk_speed)
    return Clean(wall.clean_cursor, effective_duration(nominal, worker.fatigue), nominal, target)
