"""Softmax / cross-entropy / parameter geometry primitives.

All reductions accumulate in float64 regardless of the storage precision.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, ShapeError
from .tensor import ParamVector, Tensor


def _as_array(x):
    return x.array if isinstance(x, Tensor) else np.asarray(x)


def softmax(logits):
    """Row-wise softmax over the last axis, stabilized by max subtraction.

    Accepts a Tensor or ndarray; returns an ndarray of the same shape whose
    rows are normalized to sum to 1.
    """
    z = _as_array(logits)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("non-finite logits")
    if z.shape[-1] < 1:
        raise ShapeError("softmax needs at least one class")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = _as_array(logits)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def cross_entropy(logits, soft_targets, *, tol: float = 1e-5) -> float:
    """Mean over the batch of -sum_j target_j * log softmax(logits)_j.

    Targets must be per-row distributions (rows sum to 1 within `tol`).
    """
    z = _as_array(logits)
    t = _as_array(soft_targets)
    if z.shape != t.shape:
        raise ShapeError(f"logits {z.shape} vs targets {t.shape}")
    sums = t.sum(axis=-1, dtype=np.float64)
    if np.any(np.abs(sums - 1.0) > tol) or np.any(t < -tol):
        raise ShapeError("soft targets are not distributions within tolerance")
    ls = log_softmax(z).astype(np.float64)
    per_row = -(t.astype(np.float64) * ls).sum(axis=-1)
    return float(per_row.mean())


def one_hot(labels, num_classes: int, dtype=np.float64):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    out = np.zeros((labels.size, num_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1.0
    return out


# Margin used by one-hot label mode: softmax of the encoded row is an exact
# one-hot to double precision (exp(-50) ~ 2e-22).
ONE_HOT_MARGIN = 50.0


def one_hot_logits(labels, num_classes: int, dtype=None):
    """Fixed large-margin logit rows whose softmax is numerically one-hot."""
    return one_hot(labels, num_classes, dtype=dtype or np.float64) * ONE_HOT_MARGIN


def param_distance_sq(a: ParamVector, b: ParamVector) -> float:
    """Squared L2 distance between parameter vectors, accumulated in f64."""
    a.require_same_layout(b)
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.dot(diff, diff))
