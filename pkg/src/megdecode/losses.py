"""Training losses with analytic gradients, computed in stable log-sum-exp
form outside the tape and injected back via ``scalar_with_grad``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, scalar_with_grad
from .errors import ContractError

BCE_SINGLE_LOGIT = "bce_single_logit"
WEIGHTED_CROSS_ENTROPY = "weighted_cross_entropy"


@dataclass(frozen=True)
class LossConfig:
    kind: str
    label_smoothing: float = 0.0
    class_weights: np.ndarray | None = None
    positive_weight: float | None = None

    def __post_init__(self):
        if self.kind not in (BCE_SINGLE_LOGIT, WEIGHTED_CROSS_ENTROPY):
            raise ContractError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ContractError("label_smoothing must be in [0, 0.5)")
        if self.class_weights is not None and self.kind != WEIGHTED_CROSS_ENTROPY:
            raise ContractError("class_weights only valid with weighted_cross_entropy")
        if self.positive_weight is not None:
            if self.kind != BCE_SINGLE_LOGIT:
                raise ContractError("positive_weight only valid with bce_single_logit")
            if self.positive_weight <= 0:
                raise ContractError("positive_weight must be positive")


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bce_smoothed(logit, target, smoothing: float = 0.0, positive_weight: float = 1.0):
    """Binary cross-entropy on logits with loss-level label smoothing.

    The smoothed target is y' = y (1 - s) + s/2; the weight applies to the
    positive term only. Returns elementwise (loss, dloss/dlogit).
    """
    if not 0.0 <= smoothing < 0.5:
        raise ContractError("smoothing must be in [0, 0.5)")
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    ys = y * (1.0 - smoothing) + smoothing / 2.0
    # -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    loss = positive_weight * ys * _softplus(-z) + (1.0 - ys) * _softplus(z)
    s = _sigmoid(z)
    grad = -positive_weight * ys * (1.0 - s) + (1.0 - ys) * s
    return loss, grad


def weighted_cross_entropy(logits, target, weights=None):
    """Class-weighted cross-entropy over the last axis.

    ``logits`` is [..., C]; ``target`` holds class ids of the leading shape.
    Returns (loss, dloss/dlogits) with the sample's class weight multiplying
    both.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.int64)
    n_classes = logits.shape[-1]
    if target.shape != logits.shape[:-1]:
        raise ContractError("target shape must match logits without the class axis")
    if np.any(target < 0) or np.any(target >= n_classes):
        raise ContractError("target class id out of range")
    if weights is None:
        weights = np.ones(n_classes)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n_classes,):
        raise ContractError("weights must have one entry per class")

    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - logz
    w = weights[target]
    loss = -w * np.take_along_axis(log_probs, target[..., None], axis=-1)[..., 0]
    grad = np.exp(log_probs)
    onehot = np.zeros_like(grad)
    np.put_along_axis(onehot, target[..., None], 1.0, axis=-1)
    grad = w[..., None] * (grad - onehot)
    return loss, grad


def batch_loss(cfg: LossConfig, logits: np.ndarray, targets: np.ndarray):
    """Mean loss over a batch and its gradient w.r.t. the logits array."""
    if cfg.kind == BCE_SINGLE_LOGIT:
        z = logits[..., 0] if logits.ndim == 2 else logits
        loss, grad = bce_smoothed(
            z, targets, cfg.label_smoothing, cfg.positive_weight or 1.0
        )
        grad = grad.reshape(logits.shape)
    else:
        loss, grad = weighted_cross_entropy(logits, targets, cfg.class_weights)
        if cfg.label_smoothing:
            raise ContractError("label smoothing is only wired for the binary loss")
    n = loss.size
    return float(loss.mean()), grad / n


def attach_loss(logits: Tensor, value: float, grad: np.ndarray) -> Tensor:
    """Place the externally computed batch loss on the tape below ``logits``."""
    return scalar_with_grad(logits, value, grad)


def min_achievable_bce(smoothing: float) -> float:
    """Binary entropy of s/2 — the floor of the smoothed BCE at either target."""
    q = smoothing / 2.0
    if q == 0.0:
        return 0.0
    return float(-(q * np.log(q) + (1.0 - q) * np.log(1.0 - q)))
