"""Componentwise losses shared by functional GD, backprop, and training.

Both losses expose the gradient in the prediction z:
squared loss          L(z, y) = 0.5 |z - y|^2,        dL/dz = z - y
softmax cross-entropy L(z, y) = -log softmax(z)_y,    dL/dz = softmax(z) - onehot(y)
"""

from __future__ import annotations

import numpy as np

SQUARED = "squared"
SOFTMAX_CE = "softmax_ce"

__all__ = ["SQUARED", "SOFTMAX_CE", "loss_value", "loss_grad_z", "softmax", "onehot"]


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def onehot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _as_batch(z):
    z = np.asarray(z, dtype=np.float64)
    return z.reshape(1, -1) if z.ndim == 1 else z


def loss_value(z, y, kind: str) -> float:
    """Mean per-sample loss over the batch."""
    z = _as_batch(z)
    if kind == SQUARED:
        y = _as_batch(y)
        return float(0.5 * np.mean(np.sum((z - y) ** 2, axis=1)))
    if kind == SOFTMAX_CE:
        p = softmax(z)
        labels = np.asarray(y, dtype=np.int64).reshape(-1)
        picked = p[np.arange(z.shape[0]), labels]
        return float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_grad_z(z, y, kind: str) -> np.ndarray:
    """Per-sample gradient dL/dz, shape (B, m)."""
    z = _as_batch(z)
    if kind == SQUARED:
        return z - _as_batch(y)
    if kind == SOFTMAX_CE:
        return softmax(z) - onehot(y, z.shape[1])
    raise ValueError(f"unknown loss kind {kind!r}")
