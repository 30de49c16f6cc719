"""Canonical ES: Gaussian sampling around a center, log-rank weights, center update.

    grad = 1 / (sigma * mu) * sum_j w_j * (R_j - theta)
    theta <- theta + alpha * grad
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from components.module1_tensor_core import DimensionError, NonFiniteError
from components.module6_fitness import combine_fitness

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ESState:
    center: np.ndarray
    sigma: float
    lam: int
    mu: int
    alpha: float
    generation: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.lam < 1 or self.mu < 1 or self.mu > self.lam:
            raise ValueError(f"need 1 <= mu <= lambda, got mu={self.mu}, lambda={self.lam}")


def sample_population(state: ESState) -> np.ndarray:
    """lambda individuals center + sigma * eps, one per row."""
    noise = state.rng.standard_normal((state.lam, state.center.size))
    return state.center + state.sigma * noise


def rank_weights(mu: int) -> np.ndarray:
    if mu < 1:
        raise ValueError("mu must be >= 1")
    raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return raw / raw.sum()


def rank_order(fitness: Sequence[float]) -> np.ndarray:
    """Indices sorted by descending fitness; ties keep the lower index first."""
    fitness = np.asarray(fitness, dtype=np.float64)
    if not np.all(np.isfinite(fitness)):
        raise NonFiniteError("cannot rank non-finite fitness values")
    return np.argsort(-fitness, kind="stable")


def estimate_gradient(state: ESState, ranked_elites: np.ndarray, weights: np.ndarray) -> np.ndarray:
    elites = np.asarray(ranked_elites, dtype=np.float64)
    if elites.ndim != 2 or elites.shape[0] != weights.size:
        raise DimensionError(f"{elites.shape[0]} elites for {weights.size} weights")
    if elites.shape[1] != state.center.size:
        raise DimensionError("elite dimension does not match the center")
    displacement = elites - state.center
    return (weights @ displacement) / (state.sigma * weights.size)


def update_center(state: ESState, gradient: np.ndarray) -> ESState:
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != state.center.shape:
        raise DimensionError(f"gradient shape {gradient.shape} != center shape {state.center.shape}")
    if not np.all(np.isfinite(gradient)):
        raise NonFiniteError("ES gradient contains non-finite entries")
    return replace(state, center=state.center + state.alpha * gradient,
                   generation=state.generation + 1)


def es_step(state: ESState, population: np.ndarray, totals: Sequence[float]) -> ESState:
    """Rank, take the mu best, estimate the gradient, move the center."""
    order = rank_order(totals)
    weights = rank_weights(state.mu)
    gradient = estimate_gradient(state, population[order[:state.mu]], weights)
    return update_center(state, gradient)


@dataclass
class Evaluation:
    """What the evaluation map returns for one individual."""

    trajectory: object
    extrinsic: float
    curiosity: Optional[float] = None


@dataclass
class GenerationOutcome:
    state: ESState
    population: np.ndarray
    evaluations: List[Evaluation]
    extrinsic: np.ndarray
    intrinsic: np.ndarray
    totals: np.ndarray
    order: np.ndarray
    used_fallback: bool


IntrinsicProvider = Callable[[List[Evaluation]], np.ndarray]


def evolve_generation(state: ESState, evaluate: Callable[[np.ndarray], List[Evaluation]],
                      intrinsic: Optional[IntrinsicProvider], phi: float,
                      fitness_rng: np.random.Generator) -> GenerationOutcome:
    """One generation shared by plain ES, Curiosity-ES and NS-ES.

    Only the intrinsic provider differs between the three; without one the
    intrinsic channel is all zeros and drops out of the blend.
    """
    population = sample_population(state)
    evaluations = evaluate(population)
    if len(evaluations) != state.lam:
        raise RuntimeError(f"evaluation returned {len(evaluations)} results for {state.lam} individuals")
    extrinsic = np.array([e.extrinsic for e in evaluations], dtype=np.float64)
    if intrinsic is None:
        intrinsic_values = np.zeros(state.lam)
    else:
        intrinsic_values = np.asarray(intrinsic(evaluations), dtype=np.float64)

    totals, used_fallback = combine_fitness(extrinsic, intrinsic_values, phi, fitness_rng)
    new_state = es_step(state, population, totals)
    order = rank_order(totals)
    return GenerationOutcome(new_state, population, evaluations, extrinsic,
                             intrinsic_values, totals, order, used_fallback)


def save_es_state(path, state: ESState, extra: Optional[dict] = None) -> Path:
    payload = {
        "center": state.center.tolist(),
        "sigma": state.sigma,
        "lambda": state.lam,
        "mu": state.mu,
        "alpha": state.alpha,
        "generation": state.generation,
        "rng_state": state.rng.bit_generator.state,
    }
    if extra:
        payload.update(extra)
    path = Path(path)
    path.write_text(json.dumps(payload))
    return path


def load_es_state(path) -> ESState:
    payload = json.loads(Path(path).read_text())
    rng = np.random.default_rng()
    if "rng_state" in payload:
        rng.bit_generator.state = payload["rng_state"]
    return ESState(center=np.asarray(payload["center"]), sigma=float(payload["sigma"]),
                   lam=int(payload["lambda"]), mu=int(payload["mu"]), alpha=float(payload["alpha"]),
                   generation=int(payload["generation"]), rng=rng)
