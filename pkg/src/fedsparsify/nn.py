"""Dense MLP training kernel: forward pass, exact backprop, local optimizers.

All trainable parameters live in one flat float64 vector: for each layer,
the weight matrix in row-major order followed by the bias vector. Hidden
layers use ReLU; the head is softmax with mean cross-entropy loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .masks import magnitude_purge

__all__ = [
    "MlpModel",
    "OptimizerState",
    "PurgeDirective",
    "param_count",
    "init_params",
    "forward",
    "gradient",
    "optimizer_step",
    "client_opt",
]


def param_count(layer_dims: list[int]) -> int:
    return sum(d_in * d_out + d_out for d_in, d_out in zip(layer_dims, layer_dims[1:]))


@dataclass
class MlpModel:
    """Architecture descriptor (layer widths) plus the flat parameter vector."""

    layer_dims: list[int]
    params: np.ndarray

    def __post_init__(self):
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ConfigurationError(f"invalid layer dims {self.layer_dims}")
        expected = param_count(self.layer_dims)
        if self.params.size != expected:
            raise ConfigurationError(
                f"parameter vector has {self.params.size} entries, "
                f"architecture {self.layer_dims} needs {expected}"
            )

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]


def _layer_views(layer_dims: list[int], flat: np.ndarray):
    """Per-layer (weights, bias) views into the flat vector, no copies."""
    views = []
    offset = 0
    for d_in, d_out in zip(layer_dims, layer_dims[1:]):
        w = flat[offset : offset + d_in * d_out].reshape(d_in, d_out)
        offset += d_in * d_out
        b = flat[offset : offset + d_out]
        offset += d_out
        views.append((w, b))
    return views


def init_params(layer_dims: list[int], rng: np.random.Generator) -> np.ndarray:
    """Seeded uniform fan-in initialization, layer by layer."""
    flat = np.empty(param_count(layer_dims), dtype=np.float64)
    for w, b in _layer_views(layer_dims, flat):
        fan_in = w.shape[0]
        bound = math.sqrt(6.0 / fan_in)
        w[:] = rng.uniform(-bound, bound, size=w.shape)
        b[:] = rng.uniform(-1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in), size=b.shape)
    return flat


def _check_batch(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> None:
    if features.ndim != 2 or features.shape[0] == 0:
        raise ConfigurationError("batch must be a nonempty 2-d array")
    if features.shape[1] != model.layer_dims[0]:
        raise ConfigurationError(
            f"feature dimension {features.shape[1]} does not match "
            f"input width {model.layer_dims[0]}"
        )
    if labels.shape[0] != features.shape[0]:
        raise ConfigurationError("feature and label counts differ")


def _forward_cached(model: MlpModel, features: np.ndarray):
    """Logits plus the per-layer input activations needed for backprop."""
    views = _layer_views(model.layer_dims, model.params)
    acts = [features]
    z = features
    for i, (w, b) in enumerate(views):
        z = acts[-1] @ w + b
        if i < len(views) - 1:
            acts.append(np.maximum(z, 0.0))
    return z, acts, views


def _softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    m = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - m)
    total = ex.sum(axis=1, keepdims=True)
    probs = ex / total
    # loss through log-sum-exp, stable for large logits
    log_norm = m[:, 0] + np.log(total[:, 0])
    picked = logits[np.arange(labels.shape[0]), labels]
    loss = float(np.mean(log_norm - picked))
    return probs, loss


def forward(
    model: MlpModel, features: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, float]:
    """Per-class scores and mean cross-entropy loss over the batch."""
    _check_batch(model, features, labels)
    logits, _, _ = _forward_cached(model, features)
    _, loss = _softmax_xent(logits, labels)
    return logits, loss


def gradient(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to every parameter."""
    _check_batch(model, features, labels)
    logits, acts, views = _forward_cached(model, features)
    probs, _ = _softmax_xent(logits, labels)
    batch = features.shape[0]

    delta = probs
    delta[np.arange(batch), labels] -= 1.0
    delta /= batch

    grad = np.empty_like(model.params)
    grad_views = _layer_views(model.layer_dims, grad)
    for i in range(len(views) - 1, -1, -1):
        w, _ = views[i]
        gw, gb = grad_views[i]
        np.matmul(acts[i].T, delta, out=gw)
        gb[:] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ w.T
            delta *= acts[i] > 0.0  # ReLU dead region contributes nothing
    return grad


@dataclass
class OptimizerState:
    """Local optimizer: plain SGD, momentum SGD, or proximally regularized SGD.

    `reference` is the round-start global model (proximal variant only);
    `velocity` is the momentum buffer, created lazily and reset whenever a
    fresh state is built for a round.
    """

    kind: str  # "sgd" | "momentum" | "fedprox"
    eta: float
    momentum: float = 0.0
    mu: float = 0.0
    reference: np.ndarray | None = None
    velocity: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "momentum", "fedprox"):
            raise ConfigurationError(f"unknown optimizer kind {self.kind!r}")
        if self.kind == "momentum" and not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.kind == "fedprox" and self.mu < 0.0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")


def optimizer_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One update; returns the new parameter vector, updating any velocity."""
    if params.shape != grad.shape:
        raise ConfigurationError("parameter and gradient lengths differ")
    if state.kind == "sgd":
        return params - state.eta * grad
    if state.kind == "momentum":
        if state.velocity is None:
            state.velocity = np.zeros_like(params)
        elif state.velocity.shape != params.shape:
            raise ConfigurationError("velocity length does not match parameters")
        state.velocity = state.momentum * state.velocity + grad
        return params - state.eta * state.velocity
    # fedprox
    if state.reference is None or state.reference.shape != params.shape:
        raise ConfigurationError("proximal step needs a reference of matching length")
    return params - state.eta * (grad + state.mu * (params - state.reference))


@dataclass(frozen=True)
class PurgeDirective:
    """Client-side magnitude purge, applied after local training when the
    round index is a multiple of `every`."""

    s_p: float
    round_index: int
    every: int

    def fires(self) -> bool:
        return self.round_index >= 1 and self.round_index % self.every == 0


def client_opt(
    model: MlpModel,
    global_mask: np.ndarray,
    shard,
    *,
    epochs: int,
    batch_size: int,
    opt: OptimizerState,
    rng: np.random.Generator,
    purge: PurgeDirective | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Local training under a fixed mask; optionally purge afterwards.

    Pruned coordinates are forced to exactly 0.0 before the first step and
    after every optimizer step, so they stay dead throughout. Batches are a
    seeded shuffle per epoch with a final partial batch (no example dropped).
    Returns (trained params, mask); the mask only changes when the purge
    directive fires.
    """
    if epochs < 1 or batch_size < 1:
        raise ConfigurationError("epochs and batch size must be >= 1")
    if global_mask.size != model.params.size:
        raise ConfigurationError("mask length does not match parameter count")
    n = shard.num_examples
    if n == 0:
        raise ConfigurationError(f"client {shard.client_id} has an empty shard")

    w = np.where(global_mask, model.params, 0.0)
    inactive = np.flatnonzero(~global_mask)
    local = MlpModel(model.layer_dims, w)
    num_batches = -(-n // batch_size)

    for _ in range(epochs):
        order = rng.permutation(n)
        for b in range(num_batches):
            idx = order[b * batch_size : (b + 1) * batch_size]
            g = gradient(local, shard.features[idx], shard.labels[idx])
            w = optimizer_step(opt, w, g)
            if inactive.size:
                w[inactive] = 0.0
            local.params = w

    mask = global_mask.copy()
    if purge is not None and purge.fires():
        w, mask = magnitude_purge(w, mask, purge.s_p)
    return w, mask
