from dataclasses import replace

import numpy as np
import pytest

from components.module1_tensor_core import DimensionError, NonFiniteError
from components.module5_es_core import (
    ESState,
    Evaluation,
    es_step,
    estimate_gradient,
    evolve_generation,
    load_es_state,
    rank_order,
    rank_weights,
    sample_population,
    save_es_state,
    update_center,
)


def _state(center, sigma=0.5, lam=4, mu=2, alpha=1.0, seed=0):
    return ESState(center=np.asarray(center, dtype=np.float64), sigma=sigma, lam=lam, mu=mu,
                   alpha=alpha, rng=np.random.default_rng(seed))


def _minimize_sphere(state, generations):
    for _ in range(generations):
        population = sample_population(state)
        state = es_step(state, population, -np.sum(population ** 2, axis=1))
    return state


def test_single_elite_gets_all_weight():
    assert np.array_equal(rank_weights(1), [1.0])


def test_two_elite_weights():
    assert np.allclose(rank_weights(2), [0.8042, 0.1958], atol=1e-4)


def test_rank_weights_are_a_decreasing_distribution():
    for mu in range(1, 1001, 37):
        w = rank_weights(mu)
        assert w.sum() == pytest.approx(1.0)
        assert np.all(w > 0)
        assert np.all(np.diff(w) < 0)


def test_sampling_is_seeded():
    a = sample_population(_state(np.zeros(3), seed=5))
    b = sample_population(_state(np.zeros(3), seed=5))
    assert a.shape == (4, 3)
    assert np.array_equal(a, b)


def test_vanishing_sigma_samples_the_center():
    center = np.array([1.0, -2.0, 3.0])
    population = sample_population(_state(center, sigma=1e-300))
    assert np.allclose(population, center)


def test_population_mean_approaches_center():
    center = np.array([0.5, -1.5])
    population = sample_population(_state(center, sigma=1.0, lam=10_000, mu=1))
    assert np.allclose(population.mean(axis=0), center, atol=0.05)


def test_gradient_with_one_elite():
    state = _state(np.zeros(2), sigma=0.5, mu=1)
    grad = estimate_gradient(state, np.array([[1.0, 2.0]]), rank_weights(1))
    assert np.allclose(grad, [2.0, 4.0])


def test_gradient_with_two_elites():
    state = _state(np.zeros(2), sigma=0.5, mu=2)
    grad = estimate_gradient(state, np.array([[1.0, 0.0], [0.0, 2.0]]), rank_weights(2))
    assert np.allclose(grad, [0.8042, 0.3916], atol=1e-4)


def test_elites_at_the_center_give_zero_gradient():
    state = _state(np.ones(3), mu=2)
    assert np.array_equal(estimate_gradient(state, np.ones((2, 3)), rank_weights(2)), np.zeros(3))


def test_gradient_dimension_errors():
    state = _state(np.zeros(2), mu=2)
    with pytest.raises(DimensionError):
        estimate_gradient(state, np.zeros((3, 2)), rank_weights(2))
    with pytest.raises(DimensionError):
        estimate_gradient(state, np.zeros((2, 3)), rank_weights(2))


def test_update_center_moves_and_counts_generation():
    state = _state(np.array([1.0, 1.0]), alpha=0.5)
    new = update_center(state, np.array([2.0, -2.0]))
    assert np.allclose(new.center, [2.0, 0.0])
    assert new.generation == 1 and state.generation == 0


def test_update_center_rejects_bad_gradients():
    state = _state(np.zeros(2))
    with pytest.raises(NonFiniteError):
        update_center(state, np.array([np.nan, 0.0]))
    with pytest.raises(DimensionError):
        update_center(state, np.zeros(3))


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        _state(np.zeros(2), sigma=0.0)
    with pytest.raises(ValueError):
        _state(np.zeros(2), lam=2, mu=3)


def test_ties_keep_lower_index_first():
    assert list(rank_order([1.0, 1.0, 1.0, 1.0])) == [0, 1, 2, 3]
    assert list(rank_order([0.0, 2.0, 2.0, -1.0])) == [1, 2, 0, 3]


def test_non_finite_fitness_cannot_be_ranked():
    with pytest.raises(NonFiniteError):
        rank_order([0.0, np.inf])


def test_update_is_invariant_to_monotone_fitness_transforms():
    rng = np.random.default_rng(4)
    state = _state(np.zeros(5), lam=10, mu=5)
    population = rng.standard_normal((10, 5))
    fitness = rng.standard_normal(10)
    a = es_step(state, population, fitness)
    b = es_step(state, population, 3.0 * fitness + 7.0)
    c = es_step(state, population, np.exp(fitness))
    assert np.array_equal(a.center, b.center)
    assert np.array_equal(a.center, c.center)


def test_evolve_generation_without_intrinsic_matches_es_step():
    def evaluate(genomes):
        return [Evaluation(trajectory=None, extrinsic=-float(np.sum(g ** 2))) for g in genomes]

    state = _state(np.ones(3), lam=8, mu=4, seed=9)
    outcome = evolve_generation(state, evaluate, None, 1.0, np.random.default_rng(0))

    twin = _state(np.ones(3), lam=8, mu=4, seed=9)
    population = sample_population(twin)
    expected = es_step(twin, population, -np.sum(population ** 2, axis=1))
    assert np.array_equal(outcome.population, population)
    assert np.array_equal(outcome.state.center, expected.center)
    assert np.array_equal(outcome.intrinsic, np.zeros(8))
    assert not outcome.used_fallback


def test_evaluator_must_return_one_result_per_individual():
    state = _state(np.zeros(2))
    with pytest.raises(RuntimeError):
        evolve_generation(state, lambda genomes: [], None, 1.0, np.random.default_rng(0))


def test_quadratic_bowl_distance_decreases():
    state = _state(5.0 * np.ones(10), sigma=0.1, lam=56, mu=28, alpha=1.0, seed=1)
    distances = [np.linalg.norm(state.center)]
    for _ in range(5):
        state = _minimize_sphere(state, 10)
        distances.append(np.linalg.norm(state.center))
    assert np.all(np.diff(distances) < 0)


def test_sphere_converges_in_most_seeds():
    reached = 0
    for seed in range(5):
        state = _state(0.2 * np.ones(10), sigma=0.02, lam=56, mu=28, alpha=0.25, seed=seed)
        state = _minimize_sphere(state, 300)
        if np.sum(state.center ** 2) < 1e-3:
            reached += 1
    assert reached >= 4


def test_state_file_restores_center_and_rng(tmp_path):
    state = _state(np.array([0.25, -0.5]), seed=3)
    sample_population(state)
    path = save_es_state(tmp_path / "es_state.json", replace(state, generation=7), extra={"phi": 0.8})
    loaded = load_es_state(path)
    assert np.array_equal(loaded.center, state.center)
    assert loaded.generation == 7 and loaded.lam == 4 and loaded.mu == 2
    assert np.array_equal(sample_population(loaded), sample_population(state))
