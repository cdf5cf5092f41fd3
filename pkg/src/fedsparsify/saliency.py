"""One-shot mask construction from a single data batch.

Two scoring rules are provided: connection sensitivity (keep the weights
whose removal would change the loss most) and gradient flow (prune the
weights whose removal least decreases the gradient norm).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError
from .masks import bottom_k_mask, top_k_mask
from .nn import MlpModel, gradient


def _check_keep_ratio(keep_ratio: float) -> None:
    if not 0.0 < keep_ratio <= 1.0:
        raise ConfigurationError(f"keep_ratio must be in (0, 1], got {keep_ratio}")


def snip_mask(
    model: MlpModel, features: np.ndarray, labels: np.ndarray, keep_ratio: float
) -> np.ndarray:
    """Keep the ceil(keep_ratio * P) parameters with the largest |g * w|.

    Saliency comes from a single gradient pass over the batch. Ties, and in
    particular an all-zero saliency vector, keep the lowest indices.
    """
    _check_keep_ratio(keep_ratio)
    g = gradient(model, features, labels)
    saliency = np.abs(g * model.params)
    keep = math.ceil(keep_ratio * saliency.size)
    return top_k_mask(saliency, keep)


def fd_hessian_grad(
    grad_fn, w: np.ndarray, eps_scale: float = 1e-4
) -> tuple[np.ndarray, np.ndarray]:
    """Hessian-gradient product by one-sided finite differences.

    Hg ~= (grad(w + eps * g) - grad(w)) / eps with eps = eps_scale * |w| / |g|.
    Returns (Hg, g). grad_fn maps a parameter vector to its gradient.
    """
    g = grad_fn(w)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        raise ConfigurationError("gradient is identically zero, no curvature direction")
    w_norm = float(np.linalg.norm(w))
    eps = eps_scale * (w_norm if w_norm > 0.0 else 1.0) / g_norm
    g_shifted = grad_fn(w + eps * g)
    return (g_shifted - g) / eps, g


def grasp_mask(
    model: MlpModel, features: np.ndarray, labels: np.ndarray, keep_ratio: float
) -> np.ndarray:
    """Prune the parameters with the largest w * (Hg), keeping the rest.

    Removing a high-score weight least decreases the gradient norm, so those
    go first. A zero gradient on the batch leaves no curvature direction; the
    ranking then falls back to weight magnitude.
    """
    _check_keep_ratio(keep_ratio)
    keep = math.ceil(keep_ratio * model.params.size)
    g = gradient(model, features, labels)
    if not np.any(g):
        return top_k_mask(np.abs(model.params), keep)

    def grad_at(w: np.ndarray) -> np.ndarray:
        return gradient(MlpModel(model.layer_dims, w), features, labels)

    hg, _ = fd_hessian_grad(grad_at, model.params)
    scores = model.params * hg
    return bottom_k_mask(scores, keep)
