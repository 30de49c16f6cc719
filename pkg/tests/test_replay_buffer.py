import numpy as np
import pytest

from components.module4_replay_buffer import ReplayBuffer, load_dump


def _tagged(buffer, count):
    for i in range(count):
        buffer.add(np.full(4, float(i)), np.zeros(2), np.full(4, float(i + 1)))


def test_short_trajectory_is_added_whole(trajectory_factory):
    buffer = ReplayBuffer(capacity=100, m_per_individual=50)
    added = buffer.add_from_trajectory(trajectory_factory(12, tag=True), np.random.default_rng(0))
    assert added == 12 and len(buffer) == 12
    states = buffer.as_arrays().states[:, 0]
    assert np.array_equal(states, np.arange(12.0))


def test_long_trajectory_contributes_m_distinct_transitions(trajectory_factory):
    buffer = ReplayBuffer(capacity=100, m_per_individual=5)
    added = buffer.add_from_trajectory(trajectory_factory(40, tag=True), np.random.default_rng(1))
    assert added == 5
    batch = buffer.as_arrays()
    tags = batch.states[:, 0]
    assert len(set(tags)) == 5
    assert np.all(np.diff(tags) > 0)
    assert np.array_equal(batch.next_states[:, 0], tags + 1)


def test_oldest_transitions_are_evicted():
    buffer = ReplayBuffer(capacity=10)
    _tagged(buffer, 15)
    assert len(buffer) == 10
    assert np.array_equal(buffer.as_arrays().states[:, 0], np.arange(5.0, 15.0))


def test_single_transition_per_individual_is_uniform(trajectory_factory):
    rng = np.random.default_rng(2)
    trajectory = trajectory_factory(10, tag=True)
    counts = np.zeros(10)
    draws = 5000
    for _ in range(draws):
        buffer = ReplayBuffer(capacity=1, m_per_individual=1)
        buffer.add_from_trajectory(trajectory, rng)
        counts[int(buffer.as_arrays().states[0, 0])] += 1
    expected = draws / 10
    sd = np.sqrt(draws * 0.1 * 0.9)
    assert np.all(np.abs(counts - expected) < 3.5 * sd)


def test_full_batch_is_a_permutation():
    buffer = ReplayBuffer(capacity=20)
    _tagged(buffer, 20)
    batch = buffer.sample_batch(20, np.random.default_rng(3))
    assert sorted(batch.states[:, 0]) == list(np.arange(20.0))


def test_single_element_buffer():
    buffer = ReplayBuffer(capacity=5)
    _tagged(buffer, 1)
    batch = buffer.sample_batch(3, np.random.default_rng(0))
    assert len(batch) == 3
    assert np.all(batch.states == 0.0)


def test_oversized_batch_samples_with_replacement():
    buffer = ReplayBuffer(capacity=5)
    _tagged(buffer, 4)
    batch = buffer.sample_batch(12, np.random.default_rng(0))
    assert len(batch) == 12
    assert set(batch.states[:, 0]) <= {0.0, 1.0, 2.0, 3.0}


def test_empty_buffer_cannot_be_sampled():
    with pytest.raises(ValueError):
        ReplayBuffer().sample_batch(4, np.random.default_rng(0))


def test_sampling_is_reproducible():
    buffer = ReplayBuffer(capacity=50)
    _tagged(buffer, 50)
    a = buffer.sample_batch(16, np.random.default_rng(11))
    b = buffer.sample_batch(16, np.random.default_rng(11))
    assert np.array_equal(a.states, b.states)


def test_invalid_sizes_rejected():
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0)
    with pytest.raises(ValueError):
        ReplayBuffer(m_per_individual=0)


def test_dump_round_trip(tmp_path):
    buffer = ReplayBuffer(capacity=8)
    _tagged(buffer, 6)
    path = buffer.dump(tmp_path / "buffer.bin")
    assert path.stat().st_size == 6 * (4 + 2 + 4) * 8
    loaded = load_dump(path, state_dim=4, action_dim=2)
    original = buffer.as_arrays()
    assert np.array_equal(loaded.states, original.states)
    assert np.array_equal(loaded.next_states, original.next_states)


def test_dump_of_empty_buffer_writes_nothing(tmp_path):
    assert ReplayBuffer().dump(tmp_path / "buffer.bin") is None
    assert not (tmp_path / "buffer.bin").exists()
