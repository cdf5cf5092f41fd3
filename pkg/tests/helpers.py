"""Shared builders for the test suite."""

import numpy as np

from fedsparsify.config import resolve_config
from fedsparsify.data import ClientShard
from fedsparsify.nn import MlpModel, init_params


def tiny_model(dims, seed=0):
    return MlpModel(dims, init_params(dims, np.random.default_rng(seed)))


def train_config(**overrides):
    from fedsparsify.federation import TrainingConfig

    base = dict(layer_dims=[10, 8, 3], eta=0.05, epochs=1, batch_size=32)
    base.update(overrides)
    return TrainingConfig(**base)


def blobs_raw(**overrides):
    """Raw config dict for a small synthetic experiment; override freely."""
    raw = {
        "seed": 1990,
        "rounds": 4,
        "eta": 0.05,
        "epochs": 2,
        "batch_size": 16,
        "num_clients": 4,
        "participation_ratio": 1.0,
        "model": {"layer_dims": [10, 8, 3]},
        "dataset": {
            "kind": "synthetic",
            "num_examples": 360,
            "num_features": 10,
            "num_classes": 3,
        },
        "partition": {"scheme": "iid"},
        "strategy": {"kind": "fedavg_dense"},
    }
    for key, value in overrides.items():
        if key in ("model", "dataset", "partition", "strategy"):
            raw[key] = {**raw[key], **value}
        else:
            raw[key] = value
    return raw


def blobs_config(**overrides):
    return resolve_config(blobs_raw(**overrides))


def random_shard(n, dim, classes, seed, client_id=0):
    rng = np.random.default_rng(seed)
    return ClientShard(
        features=rng.normal(size=(n, dim)),
        labels=rng.integers(0, classes, size=n),
        client_id=client_id,
    )


def finite_difference_gradient(model, features, labels, step=1e-5):
    """Central-difference loss gradient, one coordinate at a time."""
    from fedsparsify.nn import forward

    base = model.params
    grad = np.empty_like(base)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + step
        _, up = forward(MlpModel(model.layer_dims, bumped), features, labels)
        bumped[i] = base[i] - step
        _, down = forward(MlpModel(model.layer_dims, bumped), features, labels)
        grad[i] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))
