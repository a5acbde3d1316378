import numpy as np
import pytest

from trajrss.estimators import SearchGrid
from trajrss.model import NoiseModel, PathLossParams, Scenario, TrajectoryKnowledge
from trajrss.scenario import hexagon_scenario

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(criterion: str, passed: bool, detail: str = "") -> None:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {criterion}" + (f" -- {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def hexagon():
    return hexagon_scenario()


@pytest.fixture
def aoi_grid():
    return SearchGrid.aoi(2000.0, 10.0, 100.0)


@pytest.fixture
def small_scenario():
    """Three BSs, four trajectory points, sigma 2 dB."""
    bs = np.array([[400.0, 0.0, 20.0], [-200.0, 350.0, 30.0], [-200.0, -350.0, 10.0]])
    traj = TrajectoryKnowledge([[10.0, 5.0, 0.0], [10.0, 0.0, 0.0], [0.0, -10.0, 0.0]], [5.0, 5.0, 5.0])
    return Scenario(bs, traj, PathLossParams(3.0, 1.0, -30.0), NoiseModel.homogeneous(2.0, 4, 3),
                    true_u1=[20.0, -30.0, 100.0])


@pytest.fixture
def small_grid():
    return SearchGrid((0.0, 0.0, 100.0), (100.0, 100.0, 0.0), 10.0)


def random_scenario(rng: np.random.Generator, K: int | None = None, N: int | None = None,
                    sigma: float = 3.0) -> Scenario:
    """Random non-degenerate geometry: BSs low, UAV at altitude."""
    K = K if K is not None else int(rng.integers(2, 8))
    N = N if N is not None else int(rng.integers(2, 7))
    bs = np.column_stack([rng.uniform(-1000, 1000, N), rng.uniform(-1000, 1000, N), rng.uniform(5, 40, N)])
    vel = np.column_stack([rng.uniform(-15, 15, K - 1), rng.uniform(-15, 15, K - 1), rng.uniform(-1, 1, K - 1)])
    traj = TrajectoryKnowledge(vel, rng.uniform(1, 6, K - 1))
    u1 = [rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(80, 150)]
    gamma = float(rng.uniform(2, 5))
    return Scenario(bs, traj, PathLossParams(gamma, 1.0, float(rng.uniform(-60, -20))),
                    NoiseModel.homogeneous(sigma, K, N), true_u1=u1)
