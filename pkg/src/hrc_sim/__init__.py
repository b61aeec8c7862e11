"""Agent-based discrete-event simulation of human-robot collaborative bricklaying."""

from .config import SimConfig, parse_config
from .metrics import RunMetrics, StateTimeline, compute_metrics
from .simulation import Simulation, run

__all__ = ["SimConfig", "parse_config", "RunMetrics", "StateTimeline", "compute_metrics", "Simulation", "run"]
__version__ = "0.1.0"
