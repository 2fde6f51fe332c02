"""Training objectives: cross-entropy classification plus bidirectional
prototype-level supervised contrastive losses.

Both contrastive directions compare L2-normalized vectors with cosine
similarity scaled by a temperature (tau=1 recovers the plain cosine
form). Losses are batch sums; callers log per-sample means separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor

LOG_FLOOR = 1e-12


class LabelError(ValueError):
    pass


@dataclass
class ContrastiveConfig:
    temperature: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class LossConfig:
    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise LabelError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"label out of range [0, {n_classes}): {labels.tolist()}")
    return labels


def _one_hot(labels: np.ndarray, n_classes: int, dtype) -> np.ndarray:
    out = np.zeros((labels.size, n_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1.0
    return out


def pooled_representation(z_final: Tensor, z_mask) -> Tensor:
    """Mean over the fused token rows, masked positions excluded."""
    mask = np.asarray(z_mask, dtype=z_final.dtype)
    count = mask.sum()
    if count == 0:
        raise ValueError("pooled_representation: all positions masked")
    weights = nm.tensor((mask / count)[None, :], dtype=z_final.dtype)
    return nm.reshape(nm.matmul(weights, z_final), (z_final.shape[1],))


def classification_loss(p_hat: Tensor, labels) -> Tensor:
    """Cross-entropy against one-hot labels, summed over the batch.

    ``p_hat`` rows are probability distributions; the log is clamped at
    1e-12 so certain-but-wrong predictions stay finite.
    """
    n, c = p_hat.shape
    labels = _check_labels(labels, c)
    if labels.size != n:
        raise LabelError(f"got {labels.size} labels for {n} predictions")
    onehot = nm.tensor(_one_hot(labels, c, p_hat.dtype), dtype=p_hat.dtype)
    picked = nm.mul(nm.log(nm.clamp_min(p_hat, LOG_FLOOR)), onehot)
    return nm.scale(nm.sum_all(picked), -1.0)


def _cosine_logits(anchors: Tensor, candidates: Tensor, temperature: float) -> Tensor:
    """Pairwise cosine similarities over L2-normalized rows, / tau."""
    a = nm.l2_normalize(anchors, axis=1)
    b = nm.l2_normalize(candidates, axis=1)
    return nm.scale(nm.matmul(a, nm.transpose(b)), 1.0 / temperature)


def supcon_z_to_s(pooled_z: Tensor, prototypes: Tensor, labels,
                  cfg: ContrastiveConfig) -> Tensor:
    """Anchor each pooled sample against its class prototype; the
    denominator runs over all prototypes."""
    n, _ = pooled_z.shape
    c = prototypes.shape[0]
    labels = _check_labels(labels, c)
    if labels.size != n:
        raise LabelError(f"got {labels.size} labels for {n} pooled rows")
    log_p = nm.log_softmax(_cosine_logits(pooled_z, prototypes, cfg.temperature), axis=1)
    picked = nm.mul(log_p, nm.tensor(_one_hot(labels, c, log_p.dtype), dtype=log_p.dtype))
    return nm.scale(nm.sum_all(picked), -1.0)


def supcon_s_to_z(prototypes: Tensor, pooled_z: Tensor, labels,
                  cfg: ContrastiveConfig) -> Tensor:
    """Anchor each prototype against its in-batch samples, averaged over
    the positives; the denominator runs over the whole batch. Classes
    absent from the batch contribute nothing."""
    c = prototypes.shape[0]
    n = pooled_z.shape[0]
    labels = _check_labels(labels, c)
    if labels.size != n:
        raise LabelError(f"got {labels.size} labels for {n} pooled rows")
    log_p = nm.log_softmax(_cosine_logits(prototypes, pooled_z, cfg.temperature), axis=1)
    weights = np.zeros((c, n), dtype=log_p.dtype)
    for j in range(c):
        members = labels == j
        if members.any():
            weights[j, members] = 1.0 / members.sum()
    picked = nm.mul(log_p, nm.tensor(weights, dtype=log_p.dtype))
    return nm.scale(nm.sum_all(picked), -1.0)


def total_loss(cls_loss: Tensor, z2s: Tensor, s2z: Tensor, cfg: LossConfig) -> Tensor:
    """Classification plus lambda/2 times the two contrastive terms.
    lambda=0 leaves the classification loss bit-identical."""
    return nm.add(cls_loss, nm.scale(nm.add(z2s, s2z), cfg.lam / 2.0))
