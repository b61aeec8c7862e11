import pytest

from hrc_sim.config import SimConfig

# one course of 10 bricks, 0.5 m apart, no blocking and no fatigue; a pure
# lay-then-clean pipeline that can be traced by hand
TRACE = {
    "site.wall_length_m": 5.0,
    "site.courses": 1,
    "site.bricks_per_course": 10,
    "robot.buffer_capacity": 10,
    "robot.lay_time_s": 60.0,
    "robot.reach_m": 10.0,
    "robot.safety_radius_m": 0.0,
    "robot.backlog_limit": None,
    "workers.clean_time_s": 80.0,
    "workers.walk_speed_mps": 1.0,
    "workers.fatigue.enabled": False,
    "collaboration.sl": 0,
    "collaboration.ci_s": 1e6,
}


def make_cfg(**dotted) -> SimConfig:
    return SimConfig().replace(**dotted)


@pytest.fixture
def trace_cfg() -> SimConfig:
    return make_cfg(**TRACE)


@pytest.fixture
def small_cfg() -> SimConfig:
    return make_cfg(**{"site.courses": 2, "site.bricks_per_course": 20})


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
