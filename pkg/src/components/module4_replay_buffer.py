"""Bounded FIFO store of (s, a, s') transitions used to train the curiosity module."""

import logging
from collections import deque
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 200_000
DEFAULT_PER_INDIVIDUAL = 50


class TransitionBatch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return int(self.states.shape[0])


class ReplayBuffer:
    def __init__(self, capacity: int = DEFAULT_CAPACITY, m_per_individual: int = DEFAULT_PER_INDIVIDUAL):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if m_per_individual < 1:
            raise ValueError("m_per_individual must be >= 1")
        self.capacity = capacity
        self.m_per_individual = m_per_individual
        self.transitions: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.transitions)

    def add(self, state: np.ndarray, action: np.ndarray, next_state: np.ndarray) -> None:
        self.transitions.append((np.asarray(state, dtype=np.float64),
                                 np.asarray(action, dtype=np.float64),
                                 np.asarray(next_state, dtype=np.float64)))

    def add_from_trajectory(self, trajectory, rng: np.random.Generator) -> int:
        """Append min(m, |trajectory|) transitions drawn uniformly without replacement.

        Selected transitions keep their order along the trajectory. Returns the
        number of transitions added.
        """
        states, actions, next_states = trajectory.transitions()
        length = actions.shape[0]
        if length == 0:
            return 0
        if self.m_per_individual >= length:
            picks = np.arange(length)
        else:
            picks = np.sort(rng.choice(length, size=self.m_per_individual, replace=False))
        for i in picks:
            self.add(states[i], actions[i], next_states[i])
        return int(picks.size)

    def sample_batch(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        size = len(self.transitions)
        if size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        replace = batch_size > size
        idx = rng.choice(size, size=batch_size, replace=replace)
        snapshot = list(self.transitions)
        return self._stack([snapshot[i] for i in idx])

    def as_arrays(self) -> TransitionBatch:
        return self._stack(list(self.transitions))

    @staticmethod
    def _stack(picked) -> TransitionBatch:
        if not picked:
            return TransitionBatch(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)))
        s, a, s2 = zip(*picked)
        return TransitionBatch(np.stack(s), np.stack(a), np.stack(s2))

    def dump(self, path) -> Optional[Path]:
        """Write flat little-endian float64 records (s, a, s'), one per transition."""
        if not self.transitions:
            logger.warning("Replay buffer is empty, nothing dumped to %s", path)
            return None
        batch = self.as_arrays()
        records = np.hstack([batch.states, batch.actions, batch.next_states])
        path = Path(path)
        records.astype("<f8").tofile(path)
        logger.info("Dumped %d transitions (%d floats each) to %s", records.shape[0], records.shape[1], path)
        return path


def load_dump(path, state_dim: int, action_dim: int) -> TransitionBatch:
    width = 2 * state_dim + action_dim
    records = np.fromfile(path, dtype="<f8").reshape(-1, width)
    return TransitionBatch(records[:, :state_dim],
                           records[:, state_dim:state_dim + action_dim],
                           records[:, state_dim + action_dim:])
