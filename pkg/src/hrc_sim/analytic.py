"""Closed-form mutual-help model: superposed periodic check processes.

When ``n`` workers each check the same robot every ``ci`` seconds, the robot
sees ``n`` checks per period whatever the phases are, so the mean gap between
checks (the general checking interval) is ``ci / n``. Checks are treated as
instantaneous points; trip durations are ignored on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GciModel:
    n_workers: int
    ci: float
    phase_mode: str = "random"  # or "deterministic"

    def __post_init__(self) -> None:
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.ci <= 0:
            raise ValueError("ci must be > 0")
        if self.phase_mode not in ("random", "deterministic"):
            raise ValueError("phase_mode must be 'random' or 'deterministic'")


def expected_gci(model: GciModel) -> float:
    return model.ci / model.n_workers


@dataclass
class GapDistribution:
    gaps: np.ndarray
    counts: np.ndarray
    edges: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.gaps.mean())


def merged_check_times(phases: np.ndarray, ci: float, periods: int) -> np.ndarray:
    """Sorted check instants of all workers over ``periods`` periods."""
    k = np.arange(periods)[:, None] * ci
    return np.sort((k + np.asarray(phases)[None, :]).ravel())


def gci_gap_distribution(
    model: GciModel,
    samples: int,
    rng: np.random.Generator,
    periods: int = 4,
    bins: int = 50,
) -> GapDistribution:
    """Empirical gaps between successive merged checks.

    Each sample draws one set of phases (uniform on ``[0, ci)`` or evenly
    spaced), lays out ``periods`` periods of checks and keeps every gap
    between consecutive checks, including the wrap into the next period.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n, ci = model.n_workers, model.ci
    if model.phase_mode == "deterministic":
        phases = np.tile(np.arange(n) * ci / n, (samples, 1))
    else:
        phases = rng.uniform(0.0, ci, size=(samples, n))
    k = np.arange(periods)[None, :, None] * ci
    times = np.sort((k + phases[:, None, :]).reshape(samples, -1), axis=1)
    # close the window with the first check of the following period
    times = np.concatenate([times, times[:, :1] + periods * ci], axis=1)
    gaps = np.diff(times, axis=1).ravel()
    counts, edges = np.histogram(gaps, bins=bins, range=(0.0, ci))
    return GapDistribution(gaps=gaps, counts=counts, edges=edges)


def monte_carlo_gci(model: GciModel, samples: int, rng: np.random.Generator, periods: int = 4) -> float:
    return gci_gap_distribution(model, samples, rng, periods).mean
