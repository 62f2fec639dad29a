"""Classification losses on top of `tensor` operations."""

from __future__ import annotations

import numpy as np

from .config import LossName
from .exceptions import ShapeMismatch
from .tensor import Tensor, exp, log, log_softmax, relu, take


def cross_entropy_loss(
    logits: Tensor, labels: np.ndarray, class_weights: np.ndarray | None = None
) -> Tensor:
    """
    Mean of -log softmax(logits)[y] via log-sum-exp.

    :param logits: [B, K]
    :param labels: [B] integer classes
    :param class_weights: optional [K]; the mean is then weighted by the weights of the labels
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeMismatch("cross_entropy_loss", logits.shape, labels.shape)
    b, k = logits.shape
    picked = take(log_softmax(logits, axis=-1).reshape(b * k), np.arange(b) * k + labels)
    if class_weights is None:
        return -picked.mean()
    weights = np.asarray(class_weights, dtype=logits.dtype)[labels]
    return -(picked * weights).sum() * (1.0 / max(float(weights.sum()), 1e-12))


def bce_logits_loss(
    logits: Tensor, labels: np.ndarray, class_weights: np.ndarray | None = None
) -> Tensor:
    """
    Mean of max(z, 0) - z y + log(1 + exp(-|z|)).

    :param logits: [B, 1] or [B]
    :param labels: [B] in {0, 1}
    """
    z = logits.reshape(-1)
    labels = np.asarray(labels)
    if z.shape[0] != labels.shape[0]:
        raise ShapeMismatch("bce_logits_loss", logits.shape, labels.shape)
    y = labels.astype(logits.dtype)
    magnitude = relu(z) + relu(-z)
    per_sample = relu(z) - z * y + log(exp(-magnitude) + 1.0)
    if class_weights is None:
        return per_sample.mean()
    weights = np.asarray(class_weights, dtype=logits.dtype)[labels.astype(np.int64)]
    return (per_sample * weights).sum() * (1.0 / max(float(weights.sum()), 1e-12))


def inverse_frequency_weights(labels: np.ndarray, num_classes: int = 2) -> np.ndarray:
    """n / (num_classes * count_c) per class; absent classes get weight 1."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    weights = np.ones(num_classes)
    present = counts > 0
    weights[present] = len(labels) / (num_classes * counts[present])
    return weights


def compute_loss(
    name: LossName, logits: Tensor, labels: np.ndarray, class_weights: np.ndarray | None = None
) -> Tensor:
    if name == LossName.BCE_LOGITS:
        return bce_logits_loss(logits, labels, class_weights)
    return cross_entropy_loss(logits, labels, class_weights)
