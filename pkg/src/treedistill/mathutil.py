"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(z):
    """log(1 + exp(z)) without overflow, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def log_loss(labels: np.ndarray, raw_scores: np.ndarray) -> float:
    """Mean binary cross entropy of raw (pre-sigmoid) scores."""
    return float(np.mean(softplus(raw_scores) - labels * raw_scores))
