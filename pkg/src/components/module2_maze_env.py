"""2D point-mass maze navigation with wall collisions and a 32-beam LIDAR.

The observation is (x, y, v_x, v_y, n_0..n_31) in world units. The only reward
is (1 - t/T) on the step the agent comes within the goal threshold.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from components.module1_tensor_core import DimensionError, Network, forward

logger = logging.getLogger(__name__)

MAZE_DIR = Path(__file__).resolve().parent.parent / "mazes"

STATE_DIM = 36
ACTION_DIM = 2
N_BEAMS = 32
BEAM_ANGLES = 2.0 * np.pi * np.arange(N_BEAMS) / N_BEAMS
BEAM_DIRECTIONS = np.stack([np.cos(BEAM_ANGLES), np.sin(BEAM_ANGLES)], axis=1)

_ON_WALL_TOLERANCE = 1e-12


class MazeError(ValueError):
    """Malformed maze definition or a position that breaks the maze invariants."""


class EpisodeTerminatedError(RuntimeError):
    """Step called on an episode that already ended."""


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _closest_points(point: np.ndarray, segments: np.ndarray) -> np.ndarray:
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    length_sq = np.einsum("ij,ij->i", e, e)
    safe = np.where(length_sq > 0, length_sq, 1.0)
    u = np.clip(np.einsum("ij,ij->i", point - a, e) / safe, 0.0, 1.0)
    return a + u[:, None] * e


def point_segment_distance(point: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance from one point to each (x1, y1, x2, y2) segment."""
    return np.linalg.norm(point - _closest_points(point, segments), axis=1)


@dataclass(frozen=True, eq=False)
class MazeSpec:
    name: str
    walls: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    goal_threshold: float
    horizon: int
    bounds: Tuple[float, float, float, float]
    dt: float = 1.0
    a_max: float = 1.0
    v_max: float = 3.0
    lidar_range: float = 100.0
    collision_epsilon: float = 1e-3

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=np.float64).reshape(-1, 4)
        x1, y1, x2, y2 = (float(v) for v in self.bounds)
        if not (x2 > x1 and y2 > y1):
            raise MazeError(f"degenerate bounds {self.bounds}")
        if self.goal_threshold <= 0:
            raise MazeError("goal threshold must be positive")
        if self.horizon < 1:
            raise MazeError("horizon must be >= 1")
        if np.any(np.hypot(walls[:, 2] - walls[:, 0], walls[:, 3] - walls[:, 1]) == 0.0):
            raise MazeError("walls must have non-zero length")
        edges = np.array([
            [x1, y1, x2, y1],
            [x2, y1, x2, y2],
            [x2, y2, x1, y2],
            [x1, y2, x1, y1],
        ])
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "bounds", (x1, y1, x2, y2))
        object.__setattr__(self, "start", np.asarray(self.start, dtype=np.float64))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=np.float64))
        object.__setattr__(self, "segments", np.vstack([walls, edges]))

        for label, point in (("start", self.start), ("goal", self.goal)):
            if not self.contains(point):
                raise MazeError(f"{label} {point.tolist()} lies outside bounds or on a wall")

        half = np.array([(x2 - x1) / 2.0, (y2 - y1) / 2.0])
        offset = np.zeros(STATE_DIM)
        offset[0:2] = [(x1 + x2) / 2.0, (y1 + y2) / 2.0]
        scale = np.concatenate([half, [self.v_max, self.v_max], np.full(N_BEAMS, self.lidar_range)])
        object.__setattr__(self, "obs_offset", offset)
        object.__setattr__(self, "obs_scale", scale)

    def contains(self, point: np.ndarray) -> bool:
        x1, y1, x2, y2 = self.bounds
        px, py = float(point[0]), float(point[1])
        if not (x1 < px < x2 and y1 < py < y2):
            return False
        if len(self.walls) == 0:
            return True
        return bool(point_segment_distance(np.asarray(point, dtype=np.float64), self.walls).min()
                    > _ON_WALL_TOLERANCE)

    def normalize(self, states: np.ndarray) -> np.ndarray:
        """Scale world-unit states into roughly [-1, 1] for the networks."""
        return (np.asarray(states, dtype=np.float64) - self.obs_offset) / self.obs_scale

    @property
    def extent(self) -> Tuple[float, float]:
        x1, y1, x2, y2 = self.bounds
        return x2 - x1, y2 - y1


@dataclass(frozen=True, eq=False)
class EnvState:
    position: np.ndarray
    velocity: np.ndarray
    lidar: np.ndarray
    t: int = 0
    done: bool = False

    def observation(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.lidar])


@dataclass(eq=False)
class Trajectory:
    """States s_0..s_L, applied actions a_0..a_{L-1} and rewards r_0..r_{L-1}."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    reached_goal: bool
    horizon: int
    obs_offset: Optional[np.ndarray] = None
    obs_scale: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    def __len__(self) -> int:
        return self.length

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_position(self) -> np.ndarray:
        return self.states[-1, 0:2]

    def transitions(self, normalized: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(S, A, S') arrays, states scaled for the networks unless normalized=False."""
        states = self.states
        if normalized and self.obs_scale is not None:
            states = (states - self.obs_offset) / self.obs_scale
        return states[:-1], self.actions, states[1:]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "x", "y", "v_x", "v_y", "a_x", "a_y", "reward"])
            for t in range(self.length):
                s = self.states[t]
                a = self.actions[t]
                writer.writerow([t, *(float(v) for v in s[:4]), *(float(v) for v in a),
                                 float(self.rewards[t])])
        return path


def lidar_scan(spec: MazeSpec, position: np.ndarray) -> np.ndarray:
    """Distance along each of the 32 beams to the nearest wall or boundary."""
    p = np.asarray(position, dtype=np.float64)
    if not spec.contains(p):
        raise MazeError(f"position {p.tolist()} is outside the maze or on a wall")

    segs = spec.segments
    ex = (segs[:, 2] - segs[:, 0])[None, :]
    ey = (segs[:, 3] - segs[:, 1])[None, :]
    apx = (segs[:, 0] - p[0])[None, :]
    apy = (segs[:, 1] - p[1])[None, :]
    dx = BEAM_DIRECTIONS[:, 0:1]
    dy = BEAM_DIRECTIONS[:, 1:2]

    denom = _cross(dx, dy, ex, ey)
    parallel = np.abs(denom) < 1e-15
    safe = np.where(parallel, 1.0, denom)
    t = _cross(apx, apy, ex, ey) / safe
    u = _cross(apx, apy, dx, dy) / safe
    hit = (~parallel) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    dist = np.where(hit, t, np.inf).min(axis=1)
    return np.minimum(dist, spec.lidar_range)


def first_crossing(segments: np.ndarray, origin: np.ndarray, motion: np.ndarray) -> Optional[float]:
    """Smallest fraction s in [0, 1] where origin + s*motion touches a segment."""
    ex = segments[:, 2] - segments[:, 0]
    ey = segments[:, 3] - segments[:, 1]
    apx = segments[:, 0] - origin[0]
    apy = segments[:, 1] - origin[1]
    mx, my = float(motion[0]), float(motion[1])

    denom = _cross(mx, my, ex, ey)
    parallel = np.abs(denom) < 1e-15
    safe = np.where(parallel, 1.0, denom)
    s = _cross(apx, apy, ex, ey) / safe
    u = _cross(apx, apy, mx, my) / safe
    hit = (~parallel) & (s >= 0.0) & (s <= 1.0) & (u >= 0.0) & (u <= 1.0)
    candidates = list(s[hit])

    # collinear walls: entry point is the nearest segment endpoint along the motion
    norm_sq = mx * mx + my * my
    collinear = parallel & (np.abs(_cross(apx, apy, mx, my)) < 1e-12)
    if norm_sq > 0 and np.any(collinear):
        for seg in segments[collinear]:
            ends = [((seg[0] - origin[0]) * mx + (seg[1] - origin[1]) * my) / norm_sq,
                    ((seg[2] - origin[0]) * mx + (seg[3] - origin[1]) * my) / norm_sq]
            lo, hi = min(ends), max(ends)
            if hi >= 0.0 and lo <= 1.0:
                candidates.append(max(lo, 0.0))
    return float(min(candidates)) if candidates else None


def _keep_clear(segments: np.ndarray, position: np.ndarray, previous: np.ndarray,
                clearance: float, max_passes: int = 4) -> np.ndarray:
    """Move position off any segment nearer than clearance / 2, back to the side it came from."""
    for _ in range(max_passes):
        closest = _closest_points(position, segments)
        offsets = position - closest
        dist = np.linalg.norm(offsets, axis=1)
        i = int(np.argmin(dist))
        if dist[i] >= 0.5 * clearance:
            break
        if dist[i] > 0.0:
            away = offsets[i] / dist[i]
        else:
            edge = segments[i, 2:4] - segments[i, 0:2]
            away = np.array([-edge[1], edge[0]]) / np.hypot(edge[0], edge[1])
            if np.dot(away, previous - closest[i]) < 0.0:
                away = -away
        position = closest[i] + away * clearance
    return position


def reset(spec: MazeSpec) -> EnvState:
    position = spec.start.copy()
    return EnvState(position=position, velocity=np.zeros(2),
                    lidar=lidar_scan(spec, position), t=0, done=False)


def step(spec: MazeSpec, state: EnvState, action: np.ndarray) -> Tuple[EnvState, float, bool]:
    if state.done or state.t >= spec.horizon:
        raise EpisodeTerminatedError(f"episode already finished at t={state.t}")
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (ACTION_DIM,):
        raise DimensionError(f"action must have shape (2,), got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError(f"non-finite action {action.tolist()}")

    accel = np.clip(action, -spec.a_max, spec.a_max)
    velocity = np.clip(state.velocity + accel * spec.dt, -spec.v_max, spec.v_max)
    motion = velocity * spec.dt
    position = state.position + motion

    distance = float(np.hypot(motion[0], motion[1]))
    if distance > 0.0:
        s = first_crossing(spec.segments, state.position, motion)
        if s is not None:
            travel = max(s * distance - spec.collision_epsilon, 0.0)
            position = state.position + motion * (travel / distance)
            velocity = np.zeros(2)
        # a grazing stop leaves far less than epsilon to the wall itself
        position = _keep_clear(spec.segments, position, state.position, spec.collision_epsilon)

    t_next = state.t + 1
    reached = float(np.linalg.norm(position - spec.goal)) < spec.goal_threshold
    reward = 1.0 - state.t / spec.horizon if reached else 0.0
    done = reached or t_next >= spec.horizon
    next_state = EnvState(position=position, velocity=velocity,
                          lidar=lidar_scan(spec, position), t=t_next, done=done)
    return next_state, reward, done


def rollout(spec: MazeSpec, policy: Network) -> Tuple[Trajectory, float]:
    """Run one deterministic episode from the start position."""
    if policy.input_dim != STATE_DIM or policy.output_dim != ACTION_DIM:
        raise DimensionError(
            f"policy must map {STATE_DIM} -> {ACTION_DIM}, got {policy.input_dim} -> {policy.output_dim}")

    state = reset(spec)
    states: List[np.ndarray] = [state.observation()]
    actions: List[np.ndarray] = []
    rewards: List[float] = []
    done = False
    while not done:
        raw = forward(policy, spec.normalize(states[-1]))
        applied = np.clip(raw, -spec.a_max, spec.a_max)
        state, reward, done = step(spec, state, applied)
        states.append(state.observation())
        actions.append(applied)
        rewards.append(reward)

    trajectory = Trajectory(
        states=np.asarray(states),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards),
        reached_goal=rewards[-1] > 0.0,
        horizon=spec.horizon,
        obs_offset=spec.obs_offset,
        obs_scale=spec.obs_scale,
    )
    return trajectory, float(np.sum(trajectory.rewards))


# Maze files

def parse_maze(text: str, name: str = "maze") -> MazeSpec:
    walls = []
    fields = {"horizon": 500}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *values = line.split()
        try:
            if key == "wall" and len(values) == 4:
                walls.append([float(v) for v in values])
            elif key == "start" and len(values) == 2:
                fields["start"] = [float(v) for v in values]
            elif key == "goal" and len(values) == 3:
                fields["goal"] = [float(v) for v in values[:2]]
                fields["goal_threshold"] = float(values[2])
            elif key == "bounds" and len(values) == 4:
                fields["bounds"] = tuple(float(v) for v in values)
            elif key == "horizon" and len(values) == 1:
                fields["horizon"] = int(values[0])
            elif key == "name" and len(values) == 1:
                name = values[0]
            else:
                raise MazeError(f"line {lineno}: cannot parse '{raw.strip()}'")
        except ValueError as e:
            if isinstance(e, MazeError):
                raise
            raise MazeError(f"line {lineno}: bad number in '{raw.strip()}'") from e

    missing = [k for k in ("bounds", "start", "goal") if k not in fields]
    if missing:
        raise MazeError(f"maze '{name}' is missing {', '.join(missing)}")
    return MazeSpec(name=name, walls=np.asarray(walls).reshape(-1, 4), **fields)


def available_mazes() -> List[str]:
    return sorted(p.stem for p in MAZE_DIR.glob("*.maze"))


def load_maze(name_or_path: Union[str, Path], horizon: Optional[int] = None) -> MazeSpec:
    """Load a shipped maze by name (snake, us, hard) or a maze file by path."""
    path = Path(name_or_path)
    if not path.exists():
        path = MAZE_DIR / f"{str(name_or_path).lower()}.maze"
    if not path.exists():
        raise MazeError(f"unknown maze '{name_or_path}' (shipped: {', '.join(available_mazes())})")
    spec = parse_maze(path.read_text(), name=path.stem)
    if horizon is not None and horizon != spec.horizon:
        spec = MazeSpec(name=spec.name, walls=spec.walls, start=spec.start, goal=spec.goal,
                        goal_threshold=spec.goal_threshold, horizon=horizon, bounds=spec.bounds)
    logger.debug("Loaded maze %s: %d walls, horizon %d", spec.name, len(spec.walls), spec.horizon)
    return spec
