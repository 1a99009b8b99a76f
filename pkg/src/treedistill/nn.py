"""Dense feed-forward networks with manual backpropagation.

Deliberately minimal: affine layers with ReLU/identity activations,
MSE or logistic loss, SGD or Adam, full determinism for a fixed seed.
This is all the structure-distillation nets and trainable heads need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DataError, NumericalError
from .mathutil import sigmoid, softplus
from .serialize import decode_array, encode_array


class Activation(Enum):
    RELU = "relu"
    IDENTITY = "identity"


class Loss(Enum):
    MSE = "mse"
    BCE_WITH_LOGITS = "bce_with_logits"


class Optimizer(Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: Activation


@dataclass
class Mlp:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    @property
    def n_parameters(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch training settings; epochs == 0 is reserved for no-op
    fine-tuning calls, the trainer itself requires at least one epoch."""

    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-2
    optimizer: Optimizer = Optimizer.ADAM
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: Loss = Loss.MSE

    def __post_init__(self):
        if self.epochs < 0:
            raise DataError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be > 0, got {self.learning_rate}")


def init_mlp(dims: list[int], activations: list[Activation], rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights, zero biases; dims = [in, hidden..., out]."""
    if len(activations) != len(dims) - 1:
        raise DataError(
            f"{len(dims) - 1} layers need {len(dims) - 1} activations, got {len(activations)}"
        )
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(Layer(weights, np.zeros(fan_out), act))
    return Mlp(layers)


def clone_mlp(m: Mlp) -> Mlp:
    return Mlp([Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in m.layers])


def _apply(act: Activation, z: np.ndarray) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def forward(m: Mlp, x: np.ndarray) -> np.ndarray:
    """Run a single sample through the network."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.input_dim:
        raise DataError(f"input of length {x.shape} does not match input_dim {m.input_dim}")
    return forward_many(m, x.reshape(1, -1))[0]


def forward_many(m: Mlp, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.input_dim:
        raise DataError(f"input shape {X.shape} does not match input_dim {m.input_dim}")
    a = X
    for layer in m.layers:
        a = _apply(layer.activation, a @ layer.weights + layer.bias)
    return a


def _forward_cached(m: Mlp, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Forward pass keeping pre- and post-activation values per layer."""
    pre, post = [], [X]
    a = X
    for layer in m.layers:
        z = a @ layer.weights + layer.bias
        a = _apply(layer.activation, z)
        pre.append(z)
        post.append(a)
    return pre, post


def loss_value(loss: Loss, outputs: np.ndarray, targets: np.ndarray) -> float:
    """Mean loss over every output element of the batch."""
    if loss is Loss.MSE:
        return float(np.mean((outputs - targets) ** 2))
    return float(np.mean(softplus(outputs) - targets * outputs))


def _loss_grad(loss: Loss, outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    n_elements = outputs.size
    if loss is Loss.MSE:
        return 2.0 * (outputs - targets) / n_elements
    return (sigmoid(outputs) - targets) / n_elements


def loss_and_gradients(
    m: Mlp, X: np.ndarray, targets: np.ndarray, loss: Loss
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Batch loss plus (dW, db) for every layer, by backpropagation."""
    pre, post = _forward_cached(m, X)
    value = loss_value(loss, post[-1], targets)
    grad_out = _loss_grad(loss, post[-1], targets)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(m.layers)
    for i in range(len(m.layers) - 1, -1, -1):
        layer = m.layers[i]
        if layer.activation is Activation.RELU:
            grad_z = grad_out * (pre[i] > 0.0)
        else:
            grad_z = grad_out
        grads[i] = (post[i].T @ grad_z, grad_z.sum(axis=0))
        if i > 0:
            grad_out = grad_z @ layer.weights.T
    return value, grads


class AdamState:
    """First/second moment buffers for one parameter list."""

    def __init__(self, params: list[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, cfg: TrainConfig) -> None:
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_eps)


def sgd_step(params, grads, cfg: TrainConfig) -> None:
    for p, g in zip(params, grads):
        p -= cfg.learning_rate * g


def train(m: Mlp, inputs: np.ndarray, targets: np.ndarray, c: TrainConfig) -> list[float]:
    """Mini-batch training in place; returns per-epoch mean training loss.

    Deterministic for a fixed seed: the shuffle order, batching, and all
    arithmetic are identical across reruns.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    if inputs.shape[0] != targets.shape[0]:
        raise DataError(
            f"inputs have {inputs.shape[0]} rows but targets have {targets.shape[0]}"
        )
    if targets.shape[1] != m.output_dim:
        raise DataError(
            f"target width {targets.shape[1]} does not match output_dim {m.output_dim}"
        )
    if c.epochs < 1:
        raise DataError("training requires at least one epoch")

    rng = np.random.default_rng(c.seed)
    params = [a for layer in m.layers for a in (layer.weights, layer.bias)]
    adam = AdamState(params) if c.optimizer is Optimizer.ADAM else None
    n = inputs.shape[0]
    history = []
    for epoch in range(c.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, c.batch_size):
            batch = order[start : start + c.batch_size]
            value, grads = loss_and_gradients(m, inputs[batch], targets[batch], c.loss)
            if not np.isfinite(value):
                raise NumericalError(f"training loss became non-finite at epoch {epoch + 1}")
            flat = [g for pair in grads for g in pair]
            if adam is not None:
                adam.step(params, flat, c)
            else:
                sgd_step(params, flat, c)
            total += value * batch.shape[0]
        history.append(total / n)
    return history


def gradient_check(m: Mlp, x: np.ndarray, target: np.ndarray, loss: Loss) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if m.n_parameters > 10_000:
        raise DataError("gradient_check is meant for small nets (<= 1e4 parameters)")
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    T = np.asarray(target, dtype=np.float64)
    if T.ndim == 1:
        T = T.reshape(1, -1)
    _, grads = loss_and_gradients(m, X, T, loss)
    step = 1e-5
    worst = 0.0
    for layer, (gw, gb) in zip(m.layers, grads):
        for param, grad in ((layer.weights, gw), (layer.bias, gb)):
            flat = param.reshape(-1)
            analytic = grad.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                up = loss_value(loss, forward_many(m, X), T)
                flat[i] = keep - step
                down = loss_value(loss, forward_many(m, X), T)
                flat[i] = keep
                numeric = (up - down) / (2.0 * step)
                denom = max(abs(analytic[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


def mlp_to_payload(m: Mlp) -> dict:
    return {
        "layers": [
            {
                "weights": encode_array(l.weights),
                "bias": encode_array(l.bias),
                "activation": l.activation.value,
            }
            for l in m.layers
        ]
    }


def mlp_from_payload(payload: dict) -> Mlp:
    return Mlp(
        [
            Layer(
                decode_array(l["weights"]),
                decode_array(l["bias"]),
                Activation(l["activation"]),
            )
            for l in payload["layers"]
        ]
    )
