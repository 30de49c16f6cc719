"""Dense feed-forward networks with exact backpropagation and first-order optimizers.

Policies only run `forward`; the curiosity module also runs `backward` and
`optimizer_step`. Weights live in one flat float64 vector laid out layer by
layer, each layer row-major weights (out x in) followed by its biases.
"""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu", "linear")


class DimensionError(ValueError):
    """Input, gradient or weight vector has the wrong size."""


class NonFiniteError(ValueError):
    """A gradient or update contains NaN or infinite entries."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise DimensionError(f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{self.activation}'")

    @property
    def n_params(self) -> int:
        return self.input_dim * self.output_dim + self.output_dim


def mlp_layers(input_dim: int, hidden: Sequence[int], output_dim: int,
               activation: str = "tanh", output_activation: str = "linear") -> Tuple[LayerSpec, ...]:
    """Chain of LayerSpecs for a plain multi-layer perceptron."""
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i in range(len(dims) - 1):
        act = output_activation if i == len(dims) - 2 else activation
        layers.append(LayerSpec(dims[i], dims[i + 1], act))
    return tuple(layers)


def weight_count(layers: Sequence[LayerSpec]) -> int:
    return sum(layer.n_params for layer in layers)


@dataclass(frozen=True, eq=False)
class Network:
    layers: Tuple[LayerSpec, ...]
    weights: np.ndarray

    def __post_init__(self):
        layers = tuple(self.layers)
        for prev, nxt in zip(layers, layers[1:]):
            if prev.output_dim != nxt.input_dim:
                raise DimensionError(
                    f"layer chain mismatch: {prev.output_dim} -> {nxt.input_dim}")
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if weights.size != weight_count(layers):
            raise DimensionError(
                f"expected {weight_count(layers)} weights, got {weights.size}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", weights)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def with_weights(self, weights: np.ndarray) -> "Network":
        return Network(self.layers, weights)

    def unflatten(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per-layer (W, b) views into the flat weight vector."""
        return unflatten(self.layers, self.weights)


def unflatten(layers: Sequence[LayerSpec], vector: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    params = []
    offset = 0
    for layer in layers:
        n_w = layer.input_dim * layer.output_dim
        W = vector[offset:offset + n_w].reshape(layer.output_dim, layer.input_dim)
        offset += n_w
        b = vector[offset:offset + layer.output_dim]
        offset += layer.output_dim
        params.append((W, b))
    return params


def flatten(params: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for W, b in params:
        parts.append(np.asarray(W, dtype=np.float64).reshape(-1))
        parts.append(np.asarray(b, dtype=np.float64).reshape(-1))
    return np.concatenate(parts) if parts else np.zeros(0)


def init_network(layers: Sequence[LayerSpec], rng: np.random.Generator) -> Network:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    parts = []
    for layer in layers:
        bound = 1.0 / np.sqrt(layer.input_dim)
        parts.append(rng.uniform(-bound, bound, size=layer.n_params))
    return Network(tuple(layers), np.concatenate(parts))


def zeros_network(layers: Sequence[LayerSpec]) -> Network:
    return Network(tuple(layers), np.zeros(weight_count(layers)))


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return 1.0 - a * a
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def _as_batch(x: np.ndarray, dim: int, what: str) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise DimensionError(f"{what} has shape {x.shape}, expected last dim {dim}")
    return batch, single


def _forward_cached(net: Network, batch: np.ndarray):
    activations = [batch]
    pre_activations = []
    a = batch
    for layer, (W, b) in zip(net.layers, net.unflatten()):
        z = a @ W.T + b
        a = _activate(z, layer.activation)
        pre_activations.append(z)
        activations.append(a)
    return pre_activations, activations


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on one input vector or a (batch, input_dim) matrix."""
    batch, single = _as_batch(x, net.input_dim, "input")
    _, activations = _forward_cached(net, batch)
    out = activations[-1]
    return out[0] if single else out


def backward(net: Network, x: np.ndarray, upstream_grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(upstream_grad * forward(net, x)).

    Returns the weight gradient (flat, summed over the batch) and the input
    gradient (same shape as `x`).
    """
    batch, single = _as_batch(x, net.input_dim, "input")
    upstream, _ = _as_batch(upstream_grad, net.output_dim, "upstream gradient")
    if upstream.shape[0] != batch.shape[0]:
        raise DimensionError(
            f"batch mismatch: {batch.shape[0]} inputs, {upstream.shape[0]} upstream rows")

    pre_activations, activations = _forward_cached(net, batch)
    params = net.unflatten()
    grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(params)  # type: ignore[list-item]

    delta = upstream
    for i in range(len(params) - 1, -1, -1):
        layer = net.layers[i]
        W, _ = params[i]
        dz = delta * _activation_grad(pre_activations[i], activations[i + 1], layer.activation)
        grads[i] = (dz.T @ activations[i], dz.sum(axis=0))
        delta = dz @ W

    weight_grad = flatten(grads)
    input_grad = delta[0] if single else delta
    return weight_grad, input_grad


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    step_count: int = 0
    first_moment: Optional[np.ndarray] = None
    second_moment: Optional[np.ndarray] = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer '{self.kind}'")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")


def make_optimizer(kind: str, learning_rate: float, n_weights: int, **kwargs) -> OptimizerState:
    state = OptimizerState(kind=kind, learning_rate=learning_rate, **kwargs)
    if kind == "adam":
        state.first_moment = np.zeros(n_weights)
        state.second_moment = np.zeros(n_weights)
    return state


def apply_update(state: OptimizerState, weights: np.ndarray,
                 grad: np.ndarray) -> Tuple[np.ndarray, OptimizerState]:
    """One descent step on a raw weight vector; returns new weights and state."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != weights.shape:
        raise DimensionError(f"gradient length {grad.size} != weight length {weights.size}")
    if not np.all(np.isfinite(grad)):
        logger.error("Rejected optimizer step %d: non-finite gradient", state.step_count)
        raise NonFiniteError("gradient contains non-finite entries")

    step = state.step_count + 1
    if state.kind == "sgd":
        return weights - state.learning_rate * grad, replace(state, step_count=step)

    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_weights = weights - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_weights, replace(state, step_count=step, first_moment=m, second_moment=v)


def optimizer_step(state: OptimizerState, net: Network, grad: np.ndarray) -> Tuple[Network, OptimizerState]:
    new_weights, new_state = apply_update(state, net.weights, grad)
    return net.with_weights(new_weights), new_state


# Checkpoint format: one JSON header line, then little-endian float64 weights.

def save_network(path, net: Network, seed: Optional[int] = None) -> Path:
    path = Path(path)
    header = {
        "layers": [[l.input_dim, l.output_dim, l.activation] for l in net.layers],
        "seed": seed,
        "count": int(net.weights.size),
    }
    with path.open("wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        f.write(net.weights.astype("<f8").tobytes())
    return path


def load_network(path) -> Network:
    with Path(path).open("rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        weights = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    layers = tuple(LayerSpec(int(i), int(o), str(a)) for i, o, a in header["layers"])
    if weights.size != header["count"]:
        raise DimensionError(f"{path}: header says {header['count']} weights, file has {weights.size}")
    return Network(layers, weights)


def optimizer_to_dict(state: OptimizerState) -> dict:
    return {
        "kind": state.kind,
        "learning_rate": state.learning_rate,
        "step_count": state.step_count,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
    }


def save_optimizer_moments(path, state: OptimizerState) -> None:
    if state.kind != "adam":
        return
    moments = np.concatenate([state.first_moment, state.second_moment])
    Path(path).write_bytes(moments.astype("<f8").tobytes())


def load_optimizer(meta: dict, moments_path=None, n_weights: int = 0) -> OptimizerState:
    state = OptimizerState(
        kind=meta["kind"],
        learning_rate=float(meta["learning_rate"]),
        step_count=int(meta["step_count"]),
        beta1=float(meta.get("beta1", 0.9)),
        beta2=float(meta.get("beta2", 0.999)),
        epsilon=float(meta.get("epsilon", 1e-8)),
    )
    if state.kind == "adam":
        if moments_path is not None and Path(moments_path).exists():
            moments = np.frombuffer(Path(moments_path).read_bytes(), dtype="<f8").astype(np.float64)
            half = moments.size // 2
            state.first_moment, state.second_moment = moments[:half], moments[half:]
        else:
            state.first_moment = np.zeros(n_weights)
            state.second_moment = np.zeros(n_weights)
    return state
