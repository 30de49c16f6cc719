import sys
from pathlib import Path

import numpy as np
import pytest

SRC_DIR = Path(__file__).resolve().parent.parent / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from components.module2_maze_env import MazeSpec, Trajectory  # noqa: E402
from components.module3_icm import build_icm  # noqa: E402


@pytest.fixture
def empty_room():
    """20 x 20 room without inner walls, goal far from the start."""
    return MazeSpec(name="room", walls=np.zeros((0, 4)), start=(5.0, 5.0), goal=(15.0, 15.0),
                    goal_threshold=1.0, horizon=30, bounds=(0.0, 0.0, 20.0, 20.0))


@pytest.fixture
def small_icm():
    return build_icm(4, 2, np.random.default_rng(0), feature_dim=3, hidden=(5,),
                     beta=0.3, learning_rate=1e-3)


def make_trajectory(length, state_dim=4, action_dim=2, seed=0, tag=False):
    """Random trajectory with `length` transitions; with tag=True state t is filled with t."""
    rng = np.random.default_rng(seed)
    if tag:
        states = np.repeat(np.arange(length + 1, dtype=np.float64)[:, None], state_dim, axis=1)
    else:
        states = rng.standard_normal((length + 1, state_dim))
    return Trajectory(states=states, actions=rng.uniform(-1, 1, (length, action_dim)),
                      rewards=np.zeros(length), reached_goal=False, horizon=max(length, 1))


@pytest.fixture
def trajectory_factory():
    return make_trajectory
