"""NS-ES (k-nearest-neighbour novelty over a behaviour archive) and grid MAP-Elites.

Both reuse the maze rollouts; NS-ES also reuses the ES generation of
module5_es_core and only swaps in novelty as the intrinsic channel.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from components.module5_es_core import ESState, Evaluation, GenerationOutcome, evolve_generation

logger = logging.getLogger(__name__)

GRID_RESOLUTION = 50
BOOTSTRAP_GENOMES = 500

Evaluator = Callable[[np.ndarray], List[Evaluation]]


def maze_behavior(trajectory) -> np.ndarray:
    """Final position and velocity (x, y, v_x, v_y)."""
    return np.asarray(trajectory.final_state[0:4], dtype=np.float64)


def maze_behavior_bounds(spec) -> Tuple[np.ndarray, np.ndarray]:
    x1, y1, x2, y2 = spec.bounds
    lower = np.array([x1, y1, -spec.v_max, -spec.v_max])
    upper = np.array([x2, y2, spec.v_max, spec.v_max])
    return lower, upper


class NoveltyArchive:
    def __init__(self, k: int, behaviors: Optional[Sequence[np.ndarray]] = None):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.behaviors: List[np.ndarray] = [np.asarray(b, dtype=np.float64) for b in behaviors or []]
        self.generations: List[int] = []

    def __len__(self) -> int:
        return len(self.behaviors)

    def add(self, behavior: np.ndarray, generation: int = 0) -> None:
        self.behaviors.append(np.asarray(behavior, dtype=np.float64))
        self.generations.append(generation)

    def novelty_score(self, behavior: np.ndarray) -> float:
        """Mean distance to the k nearest archived behaviours; +inf for an empty archive."""
        if not self.behaviors:
            return float("inf")
        archive = np.vstack(self.behaviors)
        distances = np.linalg.norm(archive - np.asarray(behavior, dtype=np.float64), axis=1)
        return float(np.sort(distances)[:self.k].mean())

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "y", "v_x", "v_y", "generation"])
            for behavior, generation in zip(self.behaviors, self.generations):
                writer.writerow([*(float(v) for v in behavior), generation])
        return path


def novelty_score(archive: NoveltyArchive, behavior: np.ndarray) -> float:
    return archive.novelty_score(behavior)


def ns_es_generation(state: ESState, archive: NoveltyArchive, phi: float, evaluate: Evaluator,
                     fitness_rng: np.random.Generator,
                     behavior: Callable = maze_behavior) -> GenerationOutcome:
    """One NS-ES generation; every evaluated behaviour joins the archive afterwards."""
    generation = state.generation
    behaviors: List[np.ndarray] = []

    def novelty(evaluations: List[Evaluation]) -> np.ndarray:
        behaviors.extend(behavior(e.trajectory) for e in evaluations)
        return np.array([archive.novelty_score(b) for b in behaviors])

    outcome = evolve_generation(state, evaluate, novelty, phi, fitness_rng)
    for b in behaviors:
        archive.add(b, generation)
    return outcome


@dataclass
class Elite:
    genome: np.ndarray
    fitness: float
    behavior: np.ndarray
    generation: int


@dataclass
class EliteGrid:
    lower: np.ndarray
    upper: np.ndarray
    resolution: int = GRID_RESOLUTION
    cells: Dict[Tuple[int, ...], Elite] = field(default_factory=dict)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ValueError("grid bounds must satisfy lower < upper in every dimension")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def total_cells(self) -> int:
        return self.resolution ** self.lower.size

    @property
    def coverage(self) -> float:
        return len(self.cells) / self.total_cells

    def cell_index(self, behavior: np.ndarray) -> Tuple[int, ...]:
        """Discrete cell of a behaviour; out-of-range values land in the boundary cell."""
        scaled = (np.asarray(behavior, dtype=np.float64) - self.lower) / (self.upper - self.lower)
        idx = np.floor(scaled * self.resolution).astype(int)
        return tuple(int(i) for i in np.clip(idx, 0, self.resolution - 1))

    def try_insert(self, genome: np.ndarray, fitness: float, behavior: np.ndarray,
                   generation: int = 0) -> bool:
        cell = self.cell_index(behavior)
        incumbent = self.cells.get(cell)
        if incumbent is not None and fitness <= incumbent.fitness:
            return False
        self.cells[cell] = Elite(np.array(genome, dtype=np.float64), float(fitness),
                                 np.asarray(behavior, dtype=np.float64), generation)
        return True

    def best(self) -> Optional[Elite]:
        if not self.cells:
            return None
        return max(self.cells.values(), key=lambda e: e.fitness)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            dims = self.lower.size
            writer.writerow([*(f"cell_{d}" for d in range(dims)),
                             *(f"b_{d}" for d in range(dims)), "fitness", "generation"])
            for cell in sorted(self.cells):
                elite = self.cells[cell]
                writer.writerow([*cell, *(float(v) for v in elite.behavior),
                                 elite.fitness, elite.generation])
        return path


def bootstrap_grid(grid: EliteGrid, n_params: int, sigma: float, evaluate: Evaluator,
                   rng: np.random.Generator, count: int = BOOTSTRAP_GENOMES,
                   behavior: Callable = maze_behavior) -> List[Evaluation]:
    """Fill the grid with `count` random genomes drawn from N(0, sigma^2)."""
    genomes = sigma * rng.standard_normal((count, n_params))
    evaluations = evaluate(genomes)
    for genome, evaluation in zip(genomes, evaluations):
        grid.try_insert(genome, evaluation.extrinsic, behavior(evaluation.trajectory), 0)
    return evaluations


def map_elites_generation(grid: EliteGrid, batch: int, mutation_sigma: float, evaluate: Evaluator,
                          rng: np.random.Generator, generation: int = 0,
                          behavior: Callable = maze_behavior) -> Tuple[np.ndarray, List[Evaluation]]:
    """Mutate `batch` uniformly chosen elites, evaluate them and insert where they improve."""
    if not grid.cells:
        raise ValueError("MAP-Elites grid must be bootstrapped before the main loop")
    keys = sorted(grid.cells)
    parents = rng.integers(len(keys), size=batch)
    genomes = np.stack([grid.cells[keys[i]].genome for i in parents])
    children = genomes + mutation_sigma * rng.standard_normal(genomes.shape)
    evaluations = evaluate(children)
    for child, evaluation in zip(children, evaluations):
        grid.try_insert(child, evaluation.extrinsic, behavior(evaluation.trajectory), generation)
    return children, evaluations
