"""Agent processes for one bricklaying run and the run loop that drives them.

Each agent is a generator. It yields either a duration (hold for that long)
or a :class:`Wait` (sleep until woken by a state change or a timeout). The
:class:`Process` wrapper turns those yields into kernel events.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Generator, Iterator

from .agents import (
    Block,
    FatigueState,
    ForgettingModel,
    Lay,
    Robot,
    RobotState,
    Role,
    Starve,
    Wait as EmrWait,
    Worker,
    WorkerState,
    effective_duration,
    emr_step,
    fatigue_evolve,
    robot_try_lay,
)
from .collaboration import (
    CollaborationParams,
    Mode,
    PhaseMode,
    SupplyTask,
    decide_supply,
    phase_offsets,
    select_robot,
)
from .config import SimConfig
from .engine import DeadlockError, EventHandle, EventQueue, random_stream
from .environment import SiteLayout, Storage, Wall, brick_position, travel_time
from .metrics import Recorder, StateTimeline

ROBOT_SLOT, EMR_SLOT, BS_SLOT = 0, 1, 2


@dataclass(frozen=True)
class Wait:
    timeout: float | None = None


class Process:
    """Drives one agent generator on the event queue."""

    def __init__(self, queue: EventQueue, name: str, gen: Iterator):
        self.queue = queue
        self.name = name
        self.gen = gen
        self.waiting = False
        self.finished = False
        self._timer: EventHandle | None = None
        self._wake_pending = False

    def start(self) -> None:
        self.queue.schedule(self.queue.now, self._resume, target_agent=self.name, kind="timer-expired")

    def _resume(self) -> None:
        self.waiting = False
        self._wake_pending = False
        self._timer = None
        try:
            cmd = next(self.gen)
        except StopIteration:
            self.finished = True
            return
        if isinstance(cmd, Wait):
            self.waiting = True
            if cmd.timeout is not None:
                self._timer = self.queue.schedule_in(cmd.timeout, self._resume, target_agent=self.name,
                                                     kind="timer-expired")
        else:
            self._timer = self.queue.schedule_in(float(cmd), self._resume, target_agent=self.name,
                                                 kind="task-complete")

    def wake(self) -> None:
        if self.waiting and not self._wake_pending:
            self.queue.cancel(self._timer)
            self._wake_pending = True
            self._timer = self.queue.schedule_in(0.0, self._resume, target_agent=self.name,
                                                 kind="signal-received")


class Simulation:
    """One run: builds the site from a config, then advances all agents."""

    def __init__(self, cfg: SimConfig, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg.run.master_seed if seed is None else int(seed)
        self.queue = EventQueue()
        self.rec = Recorder()
        c = cfg.collaboration
        self.params = CollaborationParams(
            ci=c.ci_s, sl=c.sl, mode=Mode(c.mode), mutual_help=c.mutual_help,
            reaction_delay=c.reaction_delay_s, phase_mode=PhaseMode(c.phase_mode),
            check_walk=c.check_walk, heartbeat=c.heartbeat,
        )
        self.layout = SiteLayout()
        self.robots: list[Robot] = []
        self.emrs: list[Worker] = []
        self.bs: list[Worker] = []
        self.bs_robots: dict[str, list[str]] = {}
        self.emr_robot: dict[str, Robot] = {}
        self.rngs: dict[str, object] = {}
        self.in_flight: set[str] = set()
        self.requests: dict[str, deque[str]] = {}
        self._fatigue_clock: dict[str, float] = {}
        self._procs: dict[str, Process] = {}
        self._build()

    # ------------------------------------------------------------ layout
    def _build(self) -> None:
        cfg = self.cfg
        kind = cfg.scenario.kind
        n_walls = {"SRSW": 1, "MRSW": cfg.scenario.robots, "MRMW": cfg.scenario.teams}[kind]
        n_bs = cfg.scenario.teams if kind == "MRMW" else 1
        s, r, w = cfg.site, cfg.robot, cfg.workers
        fat = w.fatigue
        fatigue = FatigueState(
            F=0.0, lam=fat.lambda_per_s if fat.enabled else 0.0, mu=fat.mu_per_s if fat.enabled else 0.0,
            alpha=fat.alpha if fat.enabled else 0.0, m_min=fat.m_min,
        )
        fo = w.forgetting
        forgetting = ForgettingModel(fo.p_skip, fo.extra_delay_mean_s) if fo.enabled else ForgettingModel()
        for i in range(n_walls):
            origin = i * s.team_spacing_m
            wall = Wall(f"wall-{i}", origin, s.wall_length_m, s.courses, s.bricks_per_course)
            storage = Storage(f"storage-{i}", origin + s.storage_offset_m, s.storage_capacity, s.storage_stock)
            self.layout.walls[wall.id] = wall
            self.layout.storages[storage.id] = storage
            level = r.buffer_capacity if r.initial_buffer is None else r.initial_buffer
            robot = Robot(
                f"robot-{i}", wall, origin, r.move_speed_mps, r.lay_time_s, r.buffer_capacity, level,
                r.safety_radius_m, r.backlog_limit, r.reach_m, team=i,
            )
            self.robots.append(robot)
            self.layout.robot_wall[robot.id] = wall.id
            emr = Worker(
                f"emr-{i}", Role.EMR, origin - 1.0, w.walk_speed_mps, w.clean_time_s, w.carry_capacity,
                w.load_time_s, fatigue, forgetting, team=i,
            )
            self.emrs.append(emr)
            self.emr_robot[emr.id] = robot
            self.layout.worker_storage[emr.id] = storage.id
            self.rngs[robot.id] = random_stream(self.seed, i, ROBOT_SLOT)
            self.rngs[emr.id] = random_stream(self.seed, i, EMR_SLOT)
        for j in range(n_bs):
            home = self.layout.storages[f"storage-{j}"]
            bs = Worker(
                f"bs-{j}", Role.BS, home.position, w.walk_speed_mps, w.clean_time_s, w.carry_capacity,
                w.load_time_s, fatigue, forgetting, team=j,
            )
            self.bs.append(bs)
            self.layout.worker_storage[bs.id] = home.id
            self.rngs[bs.id] = random_stream(self.seed, j, BS_SLOT)
            self.requests[bs.id] = deque()
            if kind == "MRSW":
                self.bs_robots[bs.id] = [rb.id for rb in self.robots]
            else:
                self.bs_robots[bs.id] = [f"robot-{j}"]
        problems = self.layout.validate()
        if problems:
            raise ValueError("; ".join(problems))
        for robot in self.robots:
            self.rec.register(robot.id, "robot")
        for emr in self.emrs:
            self.rec.register(emr.id, "EMR")
        for bs in self.bs:
            self.rec.register(bs.id, "BS")

    def robot(self, robot_id: str) -> Robot:
        return next(r for r in self.robots if r.id == robot_id)

    @property
    def now(self) -> float:
        return self.queue.now

    # ------------------------------------------------------------ helpers
    def notify(self) -> None:
        for proc in self._procs.values():
            if proc.waiting and not proc.name.startswith("bs-"):
                proc.wake()

    def _set_robot(self, robot: Robot, state: RobotState) -> None:
        robot.state = state
        self.rec.record_transition(robot.id, state.value, self.now)

    def _set_worker(self, worker: Worker, state: WorkerState) -> None:
        last = self._fatigue_clock.get(worker.id, 0.0)
        elapsed = self.now - last
        if elapsed > 0:
            worker.fatigue = fatigue_evolve(worker.fatigue, elapsed, worker.state is not WorkerState.IDLE)
        self._fatigue_clock[worker.id] = self.now
        changed = worker.state is not state
        worker.state = state
        self.rec.record_transition(worker.id, state.value, self.now)
        if changed:
            self.notify()

    def _present_workers(self) -> list[Worker]:
        # idle workers are assumed to stand clear of the robot
        return [w for w in self.emrs + self.bs if w.state is not WorkerState.IDLE]

    def _walk(self, worker: Worker, to: float, state: WorkerState) -> Generator:
        dist = abs(to - worker.position)
        if dist > 0:
            self._set_worker(worker, state)
            yield effective_duration(travel_time(worker.position, to, worker.walk_speed), worker.fatigue)
        worker.position = to
        self.notify()

    # ------------------------------------------------------------ robot
    def _robot_proc(self, robot: Robot) -> Generator:
        wall = robot.wall
        self._maybe_signal(robot)
        while wall.lay_cursor < wall.total_bricks:
            action = robot_try_lay(robot, wall, self._present_workers())
            if isinstance(action, Block):
                self._set_robot(robot, RobotState.BLOCKED)
                yield Wait()
                continue
            if isinstance(action, Starve):
                self._set_robot(robot, RobotState.STARVED)
                yield Wait()
                continue
            robot.buffer_level -= 1
            robot.holding = 1
            self._maybe_signal(robot)
            if action.move_time > 0:
                self._set_robot(robot, RobotState.MOVING)
                yield action.move_time
                robot.position = action.target
            self._set_robot(robot, RobotState.LAYING)
            yield robot.lay_time
            self.rec.mark(self.now, robot.id, "laid", wall.id, str(wall.lay_cursor))
            wall.lay_cursor += 1
            robot.holding = 0
            self.notify()
        self._set_robot(robot, RobotState.DONE)
        self.notify()

    def _outstanding_need(self, robot: Robot) -> int:
        wall = robot.wall
        return wall.total_bricks - wall.lay_cursor - robot.holding - robot.buffer_level

    # ------------------------------------------------------------ EMR
    def _emr_proc(self, emr: Worker) -> Generator:
        robot = self.emr_robot[emr.id]
        wall = robot.wall
        radius = robot.safety_radius
        while wall.clean_cursor < wall.total_bricks:
            action = emr_step(emr, wall)
            if not isinstance(action, EmrWait) and robot.state in (RobotState.LAYING, RobotState.MOVING):
                if radius > 0 and abs(action.target - brick_position(wall, wall.lay_cursor)) < radius:
                    action = EmrWait()
            if isinstance(action, EmrWait):
                self._set_worker(emr, WorkerState.IDLE)
                yield Wait()
                continue
            emr.position = action.target
            self._set_worker(emr, WorkerState.WORKING)
            # recompute with fatigue brought up to date
            yield effective_duration(action.nominal, emr.fatigue)
            self.rec.mark(self.now, emr.id, "cleaned", wall.id, str(wall.clean_cursor))
            wall.clean_cursor += 1
            self.notify()
        self._set_worker(emr, WorkerState.IDLE)

    # ------------------------------------------------------------ BS
    def _check_set(self, worker: Worker) -> list[Robot]:
        if self.params.mutual_help:
            return list(self.robots)
        own = self.bs_robots[worker.id]
        return [r for r in self.robots if r.id in own]

    def _stock_left(self) -> bool:
        return any(not s.empty for s in self.layout.storages.values())

    def _all_done(self) -> bool:
        return all(r.state is RobotState.DONE for r in self.robots)

    def _bs_proc(self, worker: Worker, phase: float) -> Generator:
        p = self.params
        periodic = p.mode is Mode.PASSIVE or p.heartbeat
        home = self.layout.storages[self.layout.worker_storage[worker.id]].position
        rng = self.rngs[worker.id]
        next_epoch = phase if periodic else math.inf
        self._set_worker(worker, WorkerState.IDLE)
        while not self._all_done():
            queue = self.requests[worker.id]
            if queue:
                robot = self.robot(queue.popleft())
                if p.reaction_delay > 0:
                    self._set_worker(worker, WorkerState.IDLE)
                    yield p.reaction_delay
                yield from self._supply(worker, robot)
                if periodic:
                    next_epoch = self.now + p.ci
                continue
            if not self._stock_left():
                break
            if self.now < next_epoch:
                self._set_worker(worker, WorkerState.IDLE)
                yield Wait(None if math.isinf(next_epoch) else next_epoch - self.now)
                continue
            lateness = worker.forgetting.draw(rng)
            if lateness is None:
                self.rec.mark(self.now, worker.id, "forgot")
                next_epoch += p.ci
                continue
            if lateness > 0:
                self._set_worker(worker, WorkerState.IDLE)
                yield lateness
            supplied = yield from self._check_tour(worker)
            if supplied:
                next_epoch = self.now + p.ci
            else:
                next_epoch += p.ci
            if not self.requests[worker.id]:
                yield from self._walk(worker, home, WorkerState.WALKING)
        self._set_worker(worker, WorkerState.IDLE)

    def _check_tour(self, worker: Worker) -> Generator:
        """Visit every robot in the worker's check set, then supply the needy ones."""
        p = self.params
        pending = [r for r in self._check_set(worker) if r.state is not RobotState.DONE]
        claimed: list[Robot] = []
        while pending:
            robot = min(pending, key=lambda r: (abs(r.position - worker.position), r.team))
            pending.remove(robot)
            if p.check_walk:
                yield from self._walk(worker, robot.position, WorkerState.WALKING)
            if robot.state is RobotState.DONE:
                continue
            needy = decide_supply(robot.buffer_level, p.sl) and robot.id not in self.in_flight
            self.rec.mark(self.now, worker.id, "check", robot.id, "supply" if needy else "redundant")
            if needy:
                self.in_flight.add(robot.id)
                claimed.append(robot)
            if self.cfg.workers.check_time_s > 0:
                self._set_worker(worker, WorkerState.CHECKING)
                yield effective_duration(self.cfg.workers.check_time_s, worker.fatigue)
        own = self.bs_robots[worker.id]
        supplied = bool(claimed)
        while claimed:
            chosen = select_robot(own, claimed, True, set())
            robot = next(r for r in claimed if r.id == chosen) if chosen else claimed[0]
            claimed.remove(robot)
            yield from self._supply(worker, robot)
        return supplied

    def _supply(self, worker: Worker, robot: Robot) -> Generator:
        """Fill the robot's buffer to capacity, one carry load per trip."""
        self.in_flight.add(robot.id)
        deficit = max(0, min(robot.buffer_capacity - robot.buffer_level, self._outstanding_need(robot)))
        task = SupplyTask(worker.id, robot.id, deficit)
        home = self.layout.worker_storage[worker.id]
        while task.remaining > 0 and robot.state is not RobotState.DONE:
            storage = self.layout.nearest_storage(robot.position, home)
            if storage.empty:
                self.rec.mark(self.now, worker.id, "storage-exhausted", storage.id)
                break
            yield from self._walk(worker, storage.position, WorkerState.FETCHING)
            q = storage.take(min(worker.carry_capacity, task.remaining))
            if q <= 0:
                self.rec.mark(self.now, worker.id, "storage-exhausted", storage.id)
                break
            self._set_worker(worker, WorkerState.FETCHING)
            yield effective_duration(worker.load_time * q, worker.fatigue)
            yield from self._walk(worker, robot.position, WorkerState.SUPPLYING)
            self._set_worker(worker, WorkerState.SUPPLYING)
            yield effective_duration(worker.load_time * q, worker.fatigue)
            robot.buffer_level += q
            task.delivered += q
            task.trips.append(q)
            self.rec.mark(self.now, worker.id, "delivery", robot.id, str(q))
            self.notify()
        self.in_flight.discard(robot.id)
        self._maybe_signal(robot)
        return task

    def _maybe_signal(self, robot: Robot) -> None:
        """Proactive mode: the robot requests supply when its buffer is at or below SL."""
        p = self.params
        if p.mode is not Mode.PROACTIVE or robot.id in self.in_flight:
            return
        if not decide_supply(robot.buffer_level, p.sl) or self._outstanding_need(robot) <= 0:
            return
        target = self._signal_target(robot)
        self.in_flight.add(robot.id)
        self.requests[target.id].append(robot.id)
        self.rec.mark(self.now, robot.id, "signal", target.id)
        proc = self._procs.get(target.id)
        if proc is not None:
            proc.wake()

    def _signal_target(self, robot: Robot) -> Worker:
        owner = next((w for w in self.bs if robot.id in self.bs_robots[w.id]), self.bs[0])
        if not self.params.mutual_help:
            return owner
        free = [w for w in self.bs if w.state is WorkerState.IDLE and not self.requests[w.id]]
        if not free:
            return owner
        return min(free, key=lambda w: (abs(w.position - robot.position), w.team))

    # ------------------------------------------------------------ run loop
    def _finished(self) -> bool:
        return all(w.finished for w in self.layout.walls.values())

    def run(self) -> StateTimeline:
        p = self.params
        for robot in self.robots:
            self._procs[robot.id] = Process(self.queue, robot.id, self._robot_proc(robot))
        for emr in self.emrs:
            self._procs[emr.id] = Process(self.queue, emr.id, self._emr_proc(emr))
        groups: dict[tuple, list[Worker]] = {}
        for bs in self.bs:
            key = tuple(r.id for r in self._check_set(bs))
            groups.setdefault(key, []).append(bs)
        phases: dict[str, float] = {}
        for members in groups.values():
            if p.phase_mode is PhaseMode.RANDOM:
                offs = [phase_offsets(1, p.ci, p.phase_mode, self.rngs[w.id])[0] for w in members]
            else:
                offs = phase_offsets(len(members), p.ci, p.phase_mode)
            phases.update({w.id: o for w, o in zip(members, offs)})
        for bs in self.bs:
            self._procs[bs.id] = Process(self.queue, bs.id, self._bs_proc(bs, phases[bs.id]))
        for proc in self._procs.values():
            proc.start()

        cap = self.cfg.run.time_cap_s
        truncated = False
        end = 0.0
        while True:
            if self._finished():
                end = self.now
                break
            t = self.queue.peek_time()
            if t is None:
                stuck = [r.id for r in self.robots if r.state is not RobotState.DONE]
                stuck += [e.id for e in self.emrs if not self.emr_robot[e.id].wall.finished]
                states = ", ".join(f"{r.id}={r.state.value}" for r in self.robots if r.state is not RobotState.DONE)
                raise DeadlockError(f"no pending events at t={self.now:.1f} with work remaining ({states})", stuck)
            if t > cap:
                end = cap
                truncated = True
                self.queue.now = cap
                break
            self.queue.step()
        demand = sum(w.total_bricks for w in self.layout.walls.values())
        return self.rec.finish(end, config_hash=self.cfg.digest(), master_seed=self.seed,
                               demand=demand, truncated=truncated)


def run(cfg: SimConfig, seed: int | None = None) -> StateTimeline:
    """Simulate one configuration to completion (or the time cap)."""
    return Simulation(cfg, seed).run()
