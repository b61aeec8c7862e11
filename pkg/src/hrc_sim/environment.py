"""Site model: walls under construction, brick storage and travel times.

Geometry is one-dimensional. Every coordinate is a position in metres along
the line the walls are built on; storages sit on the same axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def travel_time(start: float, end: float, speed: float) -> float:
    """Seconds needed to cover ``|end - start|`` metres at ``speed`` m/s."""
    if speed <= 0:
        raise ValueError(f"speed must be > 0, got {speed!r}")
    return abs(end - start) / speed


@dataclass
class Wall:
    id: str
    origin: float
    length: float
    courses: int
    bricks_per_course: int
    lay_cursor: int = 0
    clean_cursor: int = 0

    @property
    def total_bricks(self) -> int:
        return self.courses * self.bricks_per_course

    @property
    def brick_pitch(self) -> float:
        return self.length / self.bricks_per_course if self.bricks_per_course else 0.0

    @property
    def backlog(self) -> int:
        return self.lay_cursor - self.clean_cursor

    @property
    def laid_out(self) -> bool:
        return self.lay_cursor >= self.total_bricks

    @property
    def finished(self) -> bool:
        return self.clean_cursor >= self.total_bricks

    def brick_position(self, index: int) -> float:
        return brick_position(self, index)


def brick_position(wall: Wall, brick_index: int) -> float:
    """Coordinate of brick ``brick_index`` in serpentine laying order.

    Even courses run from the origin outwards, odd courses run back.
    """
    if not 0 <= brick_index < wall.total_bricks:
        raise IndexError(f"brick {brick_index} outside wall {wall.id} (0..{wall.total_bricks - 1})")
    course, slot = divmod(brick_index, wall.bricks_per_course)
    if course % 2:
        slot = wall.bricks_per_course - 1 - slot
    return wall.origin + slot * wall.brick_pitch


@dataclass
class Storage:
    """Temporary brick stack. ``stock=None`` means unlimited."""

    id: str
    position: float
    capacity: int | None = None
    stock: int | None = None

    def __post_init__(self) -> None:
        if self.stock is not None and self.capacity is not None and not 0 <= self.stock <= self.capacity:
            raise ValueError(f"storage {self.id}: stock {self.stock} outside [0, {self.capacity}]")

    @property
    def empty(self) -> bool:
        return self.stock is not None and self.stock <= 0

    def take(self, wanted: int) -> int:
        if self.stock is None:
            return wanted
        got = min(wanted, self.stock)
        self.stock -= got
        return got


@dataclass
class SiteLayout:
    walls: dict[str, Wall] = field(default_factory=dict)
    storages: dict[str, Storage] = field(default_factory=dict)
    robot_wall: dict[str, str] = field(default_factory=dict)
    worker_storage: dict[str, str] = field(default_factory=dict)

    def validate(self) -> list[str]:
        problems = []
        seen: dict[str, str] = {}
        for robot, wall in self.robot_wall.items():
            if wall not in self.walls:
                problems.append(f"robot {robot} references unknown wall {wall}")
            elif wall in seen:
                problems.append(f"wall {wall} assigned to both {seen[wall]} and {robot}")
            else:
                seen[wall] = robot
        for worker, storage in self.worker_storage.items():
            if storage not in self.storages:
                problems.append(f"worker {worker} references unknown storage {storage}")
        return problems

    def nearest_storage(self, position: float, fallback: str) -> Storage:
        """Closest storage that still has stock; ``fallback`` if all are empty."""
        stocked = [s for s in self.storages.values() if not s.empty]
        if not stocked:
            return self.storages[fallback]
        return min(stocked, key=lambda s: (abs(s.position - position), s.id))
