import numpy as np
import pytest

from components.module1_tensor_core import (
    DimensionError,
    LayerSpec,
    Network,
    NonFiniteError,
    backward,
    flatten,
    forward,
    init_network,
    load_network,
    make_optimizer,
    mlp_layers,
    optimizer_step,
    save_network,
    unflatten,
    weight_count,
    zeros_network,
)


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def test_zero_tanh_layer_outputs_zero():
    net = zeros_network((LayerSpec(3, 4, "tanh"),))
    assert np.array_equal(forward(net, np.array([1.0, -2.0, 3.0])), np.zeros(4))


def test_linear_layer_matches_hand_computation():
    net = Network((LayerSpec(2, 2, "linear"),), np.array([1.0, 2.0, 3.0, 4.0, 0.5, -1.0]))
    assert np.allclose(forward(net, np.array([1.0, 1.0])), [3.5, 6.0])


def test_relu_clips_negative_preactivations():
    net = Network((LayerSpec(1, 2, "relu"),), np.array([1.0, -1.0, 0.0, 0.0]))
    assert np.allclose(forward(net, np.array([2.0])), [2.0, 0.0])


def test_batch_forward_matches_rows():
    rng = np.random.default_rng(1)
    net = init_network(mlp_layers(5, (7, 6), 3), rng)
    batch = rng.standard_normal((4, 5))
    out = forward(net, batch)
    for i in range(4):
        assert np.allclose(out[i], forward(net, batch[i]))


def test_wrong_input_length_raises():
    net = zeros_network(mlp_layers(3, (4,), 2))
    with pytest.raises(DimensionError):
        forward(net, np.ones(4))


def test_wrong_weight_count_raises():
    layers = mlp_layers(3, (4,), 2)
    with pytest.raises(DimensionError):
        Network(layers, np.zeros(weight_count(layers) + 1))


def test_gradients_match_finite_differences():
    h = 1e-6
    for seed in range(100):
        rng = np.random.default_rng(seed)
        depth = rng.integers(1, 4)
        dims = rng.integers(1, 9, size=depth + 1)
        acts = rng.choice(["tanh", "linear"], size=depth)
        layers = tuple(LayerSpec(int(dims[i]), int(dims[i + 1]), str(acts[i])) for i in range(depth))
        net = init_network(layers, rng)
        x = rng.standard_normal(dims[0])
        upstream = rng.standard_normal(dims[-1])

        weight_grad, input_grad = backward(net, x, upstream)

        def objective(weights, inputs):
            return float(upstream @ forward(net.with_weights(weights), inputs))

        numeric_w = np.zeros_like(net.weights)
        for i in range(net.weights.size):
            step = np.zeros_like(net.weights)
            step[i] = h
            numeric_w[i] = (objective(net.weights + step, x) - objective(net.weights - step, x)) / (2 * h)
        numeric_x = np.zeros_like(x)
        for i in range(x.size):
            step = np.zeros_like(x)
            step[i] = h
            numeric_x[i] = (objective(net.weights, x + step) - objective(net.weights, x - step)) / (2 * h)

        assert _rel_err(weight_grad, numeric_w) < 1e-4, seed
        assert _rel_err(input_grad, numeric_x) < 1e-4, seed


def test_batch_weight_gradient_is_sum_of_rows():
    rng = np.random.default_rng(3)
    net = init_network(mlp_layers(3, (4,), 2), rng)
    x = rng.standard_normal((5, 3))
    up = rng.standard_normal((5, 2))
    total, _ = backward(net, x, up)
    rows = sum(backward(net, x[i], up[i])[0] for i in range(5))
    assert np.allclose(total, rows)


def test_sgd_step():
    net = Network((LayerSpec(1, 1, "linear"),), np.array([1.0, 2.0]))
    state = make_optimizer("sgd", 0.1, 2)
    new_net, new_state = optimizer_step(state, net, np.array([1.0, -2.0]))
    assert np.allclose(new_net.weights, [0.9, 2.2])
    assert new_state.step_count == 1


def test_first_adam_step_moves_by_learning_rate():
    net = Network((LayerSpec(1, 1, "linear"),), np.array([1.0, 2.0]))
    state = make_optimizer("adam", 0.01, 2)
    new_net, _ = optimizer_step(state, net, np.array([3.0, -0.5]))
    assert np.allclose(new_net.weights, [0.99, 2.01], atol=1e-7)


def test_zero_learning_rate_leaves_weights():
    rng = np.random.default_rng(0)
    net = init_network(mlp_layers(2, (3,), 1), rng)
    state = make_optimizer("adam", 0.0, net.weights.size)
    new_net, _ = optimizer_step(state, net, rng.standard_normal(net.weights.size))
    assert np.array_equal(new_net.weights, net.weights)


def test_non_finite_gradient_rejected():
    net = zeros_network((LayerSpec(1, 1, "linear"),))
    with pytest.raises(NonFiniteError):
        optimizer_step(make_optimizer("sgd", 0.1, 2), net, np.array([np.nan, 0.0]))


def test_network_file_keeps_weights_and_layers(tmp_path):
    net = init_network(mlp_layers(4, (3,), 2, output_activation="tanh"), np.random.default_rng(7))
    path = save_network(tmp_path / "net.bin", net, seed=7)
    loaded = load_network(path)
    assert loaded.layers == net.layers
    assert np.array_equal(loaded.weights, net.weights)
    header = path.read_bytes().split(b"\n", 1)[0]
    assert b'"seed": 7' in header


def test_init_respects_fan_in_bound():
    layers = mlp_layers(16, (8,), 2)
    net = init_network(layers, np.random.default_rng(0))
    (w1, b1), (w2, b2) = net.unflatten()
    assert np.abs(w1).max() <= 0.25 and np.abs(b1).max() <= 0.25
    assert np.abs(w2).max() <= 1 / np.sqrt(8)


def test_weight_vector_survives_unflatten_and_flatten():
    rng = np.random.default_rng(11)
    for _ in range(200):
        depth = int(rng.integers(1, 5))
        dims = rng.integers(1, 9, size=depth + 1)
        acts = rng.choice(["tanh", "relu", "linear"], size=depth)
        layers = tuple(LayerSpec(int(dims[i]), int(dims[i + 1]), str(acts[i])) for i in range(depth))
        vector = rng.standard_normal(weight_count(layers))
        assert np.array_equal(flatten(unflatten(layers, vector)), vector)
