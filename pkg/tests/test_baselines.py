from types import SimpleNamespace

import numpy as np
import pytest

from components.module5_es_core import ESState, Evaluation, evolve_generation
from components.module7_baselines import (
    EliteGrid,
    NoveltyArchive,
    bootstrap_grid,
    map_elites_generation,
    maze_behavior_bounds,
    novelty_score,
    ns_es_generation,
)


def _fake_evaluate(genomes):
    """Behaviour is the first four genes; reward only for the first gene above 1."""
    return [Evaluation(trajectory=SimpleNamespace(final_state=np.array(g[:4], dtype=np.float64)),
                       extrinsic=float(max(g[0] - 1.0, 0.0)))
            for g in genomes]


def _grid():
    return EliteGrid(lower=np.zeros(2), upper=np.ones(2), resolution=10)


def test_novelty_of_archived_point_is_zero():
    archive = NoveltyArchive(k=1, behaviors=[np.zeros(2), np.ones(2)])
    assert novelty_score(archive, np.zeros(2)) == 0.0


def test_novelty_averages_k_nearest():
    archive = NoveltyArchive(k=2, behaviors=[np.array([3.0, 4.0]), np.array([0.0, 6.0]),
                                             np.array([100.0, 0.0])])
    assert novelty_score(archive, np.zeros(2)) == 5.5
    archive.k = 1
    assert novelty_score(archive, np.zeros(2)) == 5.0


def test_novelty_with_fewer_than_k_entries_uses_all():
    archive = NoveltyArchive(k=5, behaviors=[np.array([3.0, 4.0]), np.array([0.0, 1.0])])
    assert novelty_score(archive, np.zeros(2)) == 3.0


def test_empty_archive_is_infinitely_novel():
    assert novelty_score(NoveltyArchive(k=3), np.zeros(4)) == float("inf")


def test_novelty_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        size = int(rng.integers(1, 30))
        k = int(rng.integers(1, 25))
        points = rng.standard_normal((size, 4))
        query = rng.standard_normal(4)
        archive = NoveltyArchive(k=k, behaviors=list(points))
        distances = sorted(np.linalg.norm(points - query, axis=1))
        nearest = distances[:min(k, size)]
        assert novelty_score(archive, query) == pytest.approx(float(np.mean(nearest)), rel=1e-12)


def test_archive_rejects_bad_k():
    with pytest.raises(ValueError):
        NoveltyArchive(k=0)


def test_ns_es_archives_every_individual():
    state = ESState(center=np.zeros(6), sigma=0.5, lam=8, mu=4, alpha=1.0, rng=np.random.default_rng(1))
    archive = NoveltyArchive(k=3)
    outcome = ns_es_generation(state, archive, 0.5, _fake_evaluate, np.random.default_rng(2))
    assert len(archive) == 8
    assert set(archive.generations) == {0}
    assert np.all(np.isinf(outcome.intrinsic))
    outcome = ns_es_generation(outcome.state, archive, 0.5, _fake_evaluate, np.random.default_rng(3))
    assert len(archive) == 16
    assert archive.generations[-1] == 1
    assert np.all(np.isfinite(outcome.intrinsic))


def test_ns_es_with_phi_one_is_plain_es():
    def make_state():
        return ESState(center=np.full(6, 0.8), sigma=0.5, lam=8, mu=4, alpha=1.0,
                       rng=np.random.default_rng(4))

    archive = NoveltyArchive(k=2, behaviors=list(np.random.default_rng(5).standard_normal((10, 4))))
    novelty = ns_es_generation(make_state(), archive, 1.0, _fake_evaluate, np.random.default_rng(6))
    plain = evolve_generation(make_state(), _fake_evaluate, None, 1.0, np.random.default_rng(6))
    assert np.array_equal(novelty.state.center, plain.state.center)


def test_grid_keeps_better_elite_only():
    grid = _grid()
    assert grid.try_insert(np.zeros(3), 0.5, np.array([0.25, 0.25]))
    assert not grid.try_insert(np.ones(3), 0.1, np.array([0.21, 0.29]))
    assert not grid.try_insert(np.ones(3), 0.5, np.array([0.22, 0.22]))
    assert np.array_equal(grid.cells[(2, 2)].genome, np.zeros(3))
    assert grid.try_insert(np.full(3, 2.0), 0.9, np.array([0.29, 0.2]))
    assert grid.cells[(2, 2)].fitness == 0.9
    assert len(grid) == 1


def test_out_of_range_behaviour_lands_in_boundary_cell():
    grid = _grid()
    assert grid.cell_index(np.array([-3.0, 7.0])) == (0, 9)
    assert grid.cell_index(np.array([1.0, 0.999])) == (9, 9)


def test_coverage_never_decreases():
    grid = _grid()
    rng = np.random.default_rng(7)
    coverage = [grid.coverage]
    for _ in range(200):
        grid.try_insert(rng.standard_normal(2), float(rng.uniform()), rng.uniform(-0.2, 1.2, 2))
        coverage.append(grid.coverage)
    assert np.all(np.diff(coverage) >= 0)
    assert grid.total_cells == 100


def test_grid_bounds_validated():
    with pytest.raises(ValueError):
        EliteGrid(lower=np.zeros(2), upper=np.array([1.0, 0.0]))


def test_maze_behaviour_bounds(empty_room):
    lower, upper = maze_behavior_bounds(empty_room)
    assert np.array_equal(lower, [0.0, 0.0, -3.0, -3.0])
    assert np.array_equal(upper, [20.0, 20.0, 3.0, 3.0])


def test_map_elites_requires_bootstrap():
    grid = EliteGrid(lower=np.full(4, -5.0), upper=np.full(4, 5.0))
    with pytest.raises(ValueError):
        map_elites_generation(grid, 4, 0.1, _fake_evaluate, np.random.default_rng(0))


def test_bootstrap_then_generation():
    grid = EliteGrid(lower=np.full(4, -5.0), upper=np.full(4, 5.0))
    rng = np.random.default_rng(8)
    calls = []

    def evaluate(genomes):
        calls.append(len(genomes))
        return _fake_evaluate(genomes)

    evaluations = bootstrap_grid(grid, 6, 1.0, evaluate, rng, count=40)
    assert len(evaluations) == 40
    filled = len(grid)
    assert 0 < filled <= 40
    children, evaluations = map_elites_generation(grid, 7, 0.2, evaluate, rng, generation=1)
    assert children.shape == (7, 6)
    assert calls == [40, 7]
    assert len(grid) >= filled
    assert grid.best().fitness == max(e.fitness for e in grid.cells.values())


def test_archive_and_grid_csv(tmp_path):
    archive = NoveltyArchive(k=1)
    archive.add(np.array([1.0, 2.0, 0.5, -0.5]), generation=3)
    lines = archive.to_csv(tmp_path / "archive.csv").read_text().splitlines()
    assert lines == ["x,y,v_x,v_y,generation", "1.0,2.0,0.5,-0.5,3"]

    grid = _grid()
    grid.try_insert(np.zeros(2), 0.25, np.array([0.55, 0.05]), generation=2)
    lines = grid.to_csv(tmp_path / "grid.csv").read_text().splitlines()
    assert lines[0] == "cell_0,cell_1,b_0,b_1,fitness,generation"
    assert lines[1] == "5,0,0.55,0.05,0.25,2"
