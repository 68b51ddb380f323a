"""Class-balanced cross-entropy with an ignore band for weak edges.

Ground truth is an H x W map of integers in 0..255 (annotator consensus
times 255).  Pixels at exactly 0 are negatives, pixels at or above the
threshold (default 64) are positives, and anything in between is ignored:
it contributes zero loss and zero gradient.

Per pixel the loss is -alpha*log(1-P) on negatives and -beta*log(P) on
positives, where alpha = gamma*Y+/Y and beta = Y-/Y over the non-ignored
pixel counts.  The map loss is the plain sum over pixels; the total loss
adds every side map's loss to the fused map's loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _make_node, add


class DegenerateLabelError(ValueError):
    """Raised when a ground truth has no positive or no negative pixels."""


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 1.1
    threshold: int = 64

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.threshold <= 255:
            raise ValueError("threshold must be in (0, 255]")


@dataclass
class GroundTruth:
    """Per-pixel consensus map, values in 0..255."""
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"ground truth must be 2-D, got shape {v.shape}")
        if v.min() < 0 or v.max() > 255:
            raise ValueError("ground truth values must lie in 0..255")
        self.values = v.astype(np.int64)

    def masks(self, threshold: int = 64):
        """(positive, negative, ignored) boolean masks."""
        pos = self.values >= threshold
        neg = self.values == 0
        return pos, neg, ~(pos | neg)


def class_weights(gt: GroundTruth, gamma: float = 1.1, threshold: int = 64):
    """(alpha, beta) = (gamma*Y+/Y, Y-/Y), ignored pixels excluded from Y."""
    pos, neg, _ = gt.masks(threshold)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelError(
            f"ground truth needs both classes, got {n_pos} positive / {n_neg} negative")
    total = n_pos + n_neg
    return gamma * n_pos / total, n_neg / total


def _softplus(z):
    # log(1 + exp(z)) without overflow
    return np.logaddexp(0.0, z)


def _as_map(data, name):
    a = np.asarray(data)
    if a.ndim == 4 and a.shape[0] == 1 and a.shape[1] == 1:
        return a[0, 0]
    if a.ndim == 2:
        return a
    raise ValueError(f"{name} must be H x W or (1, 1, H, W), got shape {a.shape}")


def map_loss(pred: Tensor, gt: GroundTruth, cfg: LossConfig | None = None,
             weights: tuple[float, float] | None = None) -> Tensor:
    """Summed per-pixel loss of one edge map against the ground truth.

    ``weights`` overrides the (alpha, beta) computed from the ground
    truth; training leaves it None.  When ``pred`` is a sigmoid output the
    loss is evaluated from the pre-sigmoid values in log-sum-exp form, so
    saturated probabilities cannot produce infinities.
    """
    cfg = cfg or LossConfig()
    pred_map = _as_map(pred.data, "prediction")
    if pred_map.shape != gt.values.shape:
        raise ValueError(
            f"prediction shape {pred_map.shape} does not match ground truth {gt.values.shape}")
    alpha, beta = weights if weights is not None else class_weights(gt, cfg.gamma, cfg.threshold)
    pos, neg, _ = gt.masks(cfg.threshold)
    w_pos = np.where(pos, beta, 0.0)
    w_neg = np.where(neg, alpha, 0.0)

    if pred._op == "sigmoid" and pred._parents:
        logits = pred._parents[0]
        z = _as_map(logits.data, "logits")
        p = pred_map
        out = np.asarray((w_pos * _softplus(-z) + w_neg * _softplus(z)).sum())

        def bwd(go):
            if logits.requires_grad:
                gz = go * (w_pos * (p - 1.0) + w_neg * p)
                logits.accumulate_grad(gz.reshape(logits.data.shape))

        return _make_node(out, "balanced_bce", (logits,), bwd)

    p = np.clip(pred_map, 1e-300, None)
    q = np.clip(1.0 - pred_map, 1e-300, None)
    out = np.asarray((-w_pos * np.log(p) - w_neg * np.log(q)).sum())

    def bwd(go):
        if pred.requires_grad:
            gp = go * (-w_pos / p + w_neg / q)
            pred.accumulate_grad(gp.reshape(pred.data.shape))

    return _make_node(out, "balanced_bce", (pred,), bwd)


def total_loss(side, fused: Tensor, gt: GroundTruth, cfg: LossConfig | None = None) -> Tensor:
    """Sum of every side map's loss plus the fused map's loss."""
    cfg = cfg or LossConfig()
    w = class_weights(gt, cfg.gamma, cfg.threshold)
    total = map_loss(fused, gt, cfg, weights=w)
    for m in side:
        total = add(total, map_loss(m, gt, cfg, weights=w))
    return total
