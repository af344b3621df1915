"""Training losses with analytic gradients."""

from __future__ import annotations

import numpy as np


def mse_loss(output: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of squared differences over all elements; gradient w.r.t. output."""
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch: output {output.shape} vs target {target.shape}")
    diff = output - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy between softmax(logits) and a one-hot target.

    Accepts a single (C,) pair or a batch (N, C); batch losses are averaged
    and the gradient is scaled accordingly.  Targets must be exactly one-hot.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape} vs target {target.shape}")
    squeeze = logits.ndim == 1
    z = np.atleast_2d(logits)
    t = np.atleast_2d(target)
    if not (np.all((t == 0.0) | (t == 1.0)) and np.all(t.sum(axis=-1) == 1.0)):
        raise ValueError("target must be one-hot")
    n = z.shape[0]
    shifted = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1))
    loss = float(np.mean(log_norm - shifted[t == 1.0]))
    grad = (softmax(z) - t) / n
    return loss, grad[0] if squeeze else grad
