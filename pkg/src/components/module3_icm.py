"""Intrinsic Curiosity Module: encoder, forward model, inverse model.

All three networks are trained jointly on
    L = mean[(1 - beta) * ||I(phi(s), phi(s')) - a||_2 + beta * ||F(phi(s), a) - phi(s')||_2]
and the per-transition curiosity bonus is (eta / 2) * ||F(phi(s), a) - phi(s')||_2.
Norms are plain l2 norms; their gradient at an exact prediction is taken as zero.
"""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from components.module1_tensor_core import (
    DimensionError,
    Network,
    OptimizerState,
    apply_update,
    backward,
    forward,
    init_network,
    load_network,
    load_optimizer,
    make_optimizer,
    mlp_layers,
    optimizer_to_dict,
    save_network,
    save_optimizer_moments,
)

logger = logging.getLogger(__name__)

FEATURE_DIM = 32
HIDDEN = (64, 64)

Transition = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(eq=False)
class ICMParams:
    encoder: Network
    forward_model: Network
    inverse_model: Network
    beta: float = 0.2
    eta: float = 1.0
    optimizer: Optional[OptimizerState] = None

    def __post_init__(self):
        k = self.encoder.output_dim
        a = self.inverse_model.output_dim
        if self.forward_model.output_dim != k:
            raise DimensionError("forward model must output the encoder feature dim")
        if self.forward_model.input_dim != k + a:
            raise DimensionError("forward model input must be feature dim + action dim")
        if self.inverse_model.input_dim != 2 * k:
            raise DimensionError("inverse model input must be twice the feature dim")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def feature_dim(self) -> int:
        return self.encoder.output_dim

    @property
    def state_dim(self) -> int:
        return self.encoder.input_dim

    @property
    def action_dim(self) -> int:
        return self.inverse_model.output_dim

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return (self.encoder.weights.size, self.forward_model.weights.size,
                self.inverse_model.weights.size)

    def flat_weights(self) -> np.ndarray:
        return np.concatenate([self.encoder.weights, self.forward_model.weights,
                               self.inverse_model.weights])

    def with_flat_weights(self, weights: np.ndarray) -> "ICMParams":
        n_e, n_f, _ = self.sizes
        return replace(
            self,
            encoder=self.encoder.with_weights(weights[:n_e]),
            forward_model=self.forward_model.with_weights(weights[n_e:n_e + n_f]),
            inverse_model=self.inverse_model.with_weights(weights[n_e + n_f:]),
        )


def build_icm(state_dim: int, action_dim: int, rng: np.random.Generator,
              feature_dim: int = FEATURE_DIM, hidden: Sequence[int] = HIDDEN,
              beta: float = 0.2, eta: float = 1.0, learning_rate: float = 1e-4,
              optimizer: str = "adam") -> ICMParams:
    encoder = init_network(mlp_layers(state_dim, hidden, feature_dim), rng)
    forward_model = init_network(mlp_layers(feature_dim + action_dim, hidden, feature_dim), rng)
    inverse_model = init_network(mlp_layers(2 * feature_dim, hidden, action_dim), rng)
    n = encoder.weights.size + forward_model.weights.size + inverse_model.weights.size
    return ICMParams(encoder, forward_model, inverse_model, beta=beta, eta=eta,
                     optimizer=make_optimizer(optimizer, learning_rate, n))


def _stack(transitions) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if (isinstance(transitions, tuple) and len(transitions) == 3
            and isinstance(transitions[0], np.ndarray) and transitions[0].ndim == 2):
        s, a, s2 = transitions
    else:
        s, a, s2 = zip(*transitions)
    return (np.asarray(s, dtype=np.float64), np.asarray(a, dtype=np.float64),
            np.asarray(s2, dtype=np.float64))


def encode(icm: ICMParams, state: np.ndarray) -> np.ndarray:
    return forward(icm.encoder, state)


def _predictions(icm: ICMParams, s, a, s2):
    z = forward(icm.encoder, s)
    z2 = forward(icm.encoder, s2)
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != icm.action_dim:
        raise DimensionError(f"action dim {a.shape[-1]} != {icm.action_dim}")
    pred_next = forward(icm.forward_model, np.concatenate([z, a], axis=-1))
    pred_action = forward(icm.inverse_model, np.concatenate([z, z2], axis=-1))
    return z, z2, pred_next, pred_action


def forward_errors(icm: ICMParams, states: np.ndarray, actions: np.ndarray,
                   next_states: np.ndarray) -> np.ndarray:
    """Per-transition ||F(phi(s), a) - phi(s')||_2 for stacked transitions."""
    z = forward(icm.encoder, states)
    z2 = forward(icm.encoder, next_states)
    pred_next = forward(icm.forward_model, np.concatenate([z, actions], axis=-1))
    return np.linalg.norm(pred_next - z2, axis=-1)


def forward_loss(icm: ICMParams, transition: Transition) -> float:
    s, a, s2 = transition
    _, z2, pred_next, _ = _predictions(icm, s, a, s2)
    return float(np.linalg.norm(pred_next - z2))


def inverse_loss(icm: ICMParams, transition: Transition) -> float:
    s, a, s2 = transition
    _, _, _, pred_action = _predictions(icm, s, a, s2)
    return float(np.linalg.norm(pred_action - np.asarray(a, dtype=np.float64)))


def icm_loss(icm: ICMParams, batch) -> float:
    s, a, s2 = _stack(batch)
    if s.shape[0] == 0:
        raise ValueError("icm_loss needs a non-empty batch")
    _, z2, pred_next, pred_action = _predictions(icm, s, a, s2)
    l_f = np.linalg.norm(pred_next - z2, axis=-1)
    l_i = np.linalg.norm(pred_action - a, axis=-1)
    return float(np.mean((1.0 - icm.beta) * l_i + icm.beta * l_f))


def curiosity_bonus(icm: ICMParams, transition: Transition) -> float:
    return 0.5 * icm.eta * forward_loss(icm, transition)


def _unit_rows(diff: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(diff, axis=-1)
    safe = np.where(norms > 0.0, norms, 1.0)
    units = np.where(norms[:, None] > 0.0, diff / safe[:, None], 0.0)
    return norms, units


def loss_and_gradient(icm: ICMParams, states: np.ndarray, actions: np.ndarray,
                      next_states: np.ndarray) -> Tuple[float, np.ndarray]:
    """Combined loss and its gradient w.r.t. the concatenated (w_e, w_f, w_i)."""
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    k = icm.feature_dim
    beta = icm.beta

    z = forward(icm.encoder, states)
    z2 = forward(icm.encoder, next_states)
    forward_in = np.concatenate([z, actions], axis=1)
    inverse_in = np.concatenate([z, z2], axis=1)
    l_f, unit_f = _unit_rows(forward(icm.forward_model, forward_in) - z2)
    l_i, unit_i = _unit_rows(forward(icm.inverse_model, inverse_in) - actions)
    loss = float(np.mean((1.0 - beta) * l_i + beta * l_f))

    up_f = (beta / n) * unit_f
    up_i = ((1.0 - beta) / n) * unit_i
    grad_f, d_forward_in = backward(icm.forward_model, forward_in, up_f)
    grad_i, d_inverse_in = backward(icm.inverse_model, inverse_in, up_i)

    d_z = d_forward_in[:, :k] + d_inverse_in[:, :k]
    d_z2 = d_inverse_in[:, k:] - up_f
    grad_e, _ = backward(icm.encoder, np.vstack([states, next_states]), np.vstack([d_z, d_z2]))
    return loss, np.concatenate([grad_e, grad_f, grad_i])


def train_icm(icm: ICMParams, buffer, epochs: int, batch_size: int, rng: np.random.Generator,
              max_batches: Optional[int] = None) -> Tuple[ICMParams, List[float]]:
    """Run `epochs` shuffled passes over the buffer; returns new params and per-epoch mean loss.

    `max_batches` caps the minibatches taken from each shuffled pass (None: the whole buffer).
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if len(buffer) == 0:
        logger.warning("ICM training skipped: replay buffer is empty")
        return icm, []
    if icm.optimizer is None:
        raise ValueError("ICM has no optimizer state")

    states, actions, next_states = buffer.as_arrays()
    size = states.shape[0]
    weights = icm.flat_weights()
    optimizer = icm.optimizer
    current = icm
    history: List[float] = []
    starts = list(range(0, size, batch_size))
    if max_batches is not None:
        starts = starts[:max(1, max_batches)]
    for _ in range(epochs):
        order = rng.permutation(size)
        total = 0.0
        seen = 0
        for start in starts:
            idx = order[start:start + batch_size]
            loss, grad = loss_and_gradient(current, states[idx], actions[idx], next_states[idx])
            weights, optimizer = apply_update(optimizer, weights, grad)
            current = current.with_flat_weights(weights)
            total += loss * idx.size
            seen += idx.size
        history.append(total / seen)
    return replace(current, optimizer=optimizer), history


# Checkpoints: three weight files, optional Adam moments, and a JSON manifest.

def save_icm(directory, icm: ICMParams, seed: Optional[int] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_network(directory / "encoder.bin", icm.encoder, seed)
    save_network(directory / "forward_model.bin", icm.forward_model, seed)
    save_network(directory / "inverse_model.bin", icm.inverse_model, seed)
    manifest = {"beta": icm.beta, "eta": icm.eta, "seed": seed}
    if icm.optimizer is not None:
        manifest["optimizer"] = optimizer_to_dict(icm.optimizer)
        save_optimizer_moments(directory / "optimizer_moments.bin", icm.optimizer)
    path = directory / "icm.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_icm(directory) -> ICMParams:
    directory = Path(directory)
    manifest = json.loads((directory / "icm.json").read_text())
    encoder = load_network(directory / "encoder.bin")
    forward_model = load_network(directory / "forward_model.bin")
    inverse_model = load_network(directory / "inverse_model.bin")
    optimizer = None
    if "optimizer" in manifest:
        n = encoder.weights.size + forward_model.weights.size + inverse_model.weights.size
        optimizer = load_optimizer(manifest["optimizer"], directory / "optimizer_moments.bin", n)
    return ICMParams(encoder, forward_model, inverse_model, beta=float(manifest["beta"]),
                     eta=float(manifest["eta"]), optimizer=optimizer)
