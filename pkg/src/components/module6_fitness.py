"""Extrinsic return, discounted curiosity fitness and the z-scored blend of the two."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from components.module3_icm import ICMParams, forward_errors

logger = logging.getLogger(__name__)


@dataclass
class FitnessRecord:
    index: int
    extrinsic: float
    intrinsic: float
    total: float


def extrinsic_fitness(trajectory) -> float:
    return float(np.sum(trajectory.rewards))


def discounted_sum(errors: np.ndarray, gamma: float) -> float:
    """sum_t gamma^(L-1-t) * e_t, with the last term weighted 1 (0**0 == 1)."""
    errors = np.asarray(errors, dtype=np.float64)
    length = errors.size
    weights = np.power(float(gamma), np.arange(length - 1, -1, -1, dtype=np.float64))
    return float(weights @ errors)


def curiosity_fitness(icm: ICMParams, trajectory, gamma: float) -> float:
    """Discounted forward-model error over the whole trajectory (no eta/2 factor)."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if trajectory.length == 0:
        logger.warning("Curiosity fitness of an empty trajectory is 0")
        return 0.0
    states, actions, next_states = trajectory.transitions()
    return discounted_sum(forward_errors(icm, states, actions, next_states), gamma)


def _zscores(values: np.ndarray) -> np.ndarray:
    if np.all(values == values[0]):
        return np.zeros_like(values)
    if not np.all(np.isfinite(values)):
        raise ValueError("fitness channel mixes finite and non-finite values")
    std = values.std()
    if std == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def combine_fitness(extrinsic: Sequence[float], intrinsic: Sequence[float], phi: float,
                    rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    """phi * z(f_e) + (1 - phi) * z(f_i) over the current population.

    A constant channel contributes zeros. When every extrinsic value is 0 they
    are replaced by standard-normal draws before normalization; the second
    return value says whether that happened.
    """
    f_e = np.asarray(extrinsic, dtype=np.float64)
    f_i = np.asarray(intrinsic, dtype=np.float64)
    if f_e.size < 2 or f_e.size != f_i.size:
        raise ValueError("need at least two (extrinsic, intrinsic) pairs of equal length")
    if not 0.0 <= phi <= 1.0:
        raise ValueError(f"phi must lie in [0, 1], got {phi}")

    used_fallback = bool(np.all(f_e == 0.0))
    if used_fallback:
        f_e = rng.standard_normal(f_e.size)
    totals = phi * _zscores(f_e) + (1.0 - phi) * _zscores(f_i)
    return totals, used_fallback


def fitness_records(extrinsic: Sequence[float], intrinsic: Sequence[float],
                    totals: Sequence[float]) -> List[FitnessRecord]:
    return [FitnessRecord(i, float(e), float(n), float(t))
            for i, (e, n, t) in enumerate(zip(extrinsic, intrinsic, totals))]


def rewarding_policies_dominate(extrinsic: Sequence[float], totals: Sequence[float]) -> bool:
    """True when every rewarded individual outranks every unrewarded one (or one group is empty)."""
    f_e = np.asarray(extrinsic)
    totals = np.asarray(totals)
    rewarded = f_e > 0.0
    if rewarded.all() or not rewarded.any():
        return True
    return bool(totals[rewarded].min() > totals[~rewarded].max())


def append_fitness_table(path, generation: int, records: Iterable[FitnessRecord],
                         order: Sequence[int]) -> Path:
    """Append one generation to the fitness CSV (generation, index, f_e, f_i, total, rank)."""
    path = Path(path)
    rank = np.empty(len(order), dtype=int)
    rank[np.asarray(order)] = np.arange(len(order))
    write_header = not path.exists()
    with path.open("a", newline="") as f:
        writer = csv.writer(f)
        if write_header:
            writer.writerow(["generation", "index", "f_e", "f_i", "total", "rank"])
        for record in records:
            writer.writerow([generation, record.index, record.extrinsic, record.intrinsic,
                             record.total, int(rank[record.index])])
    return path
