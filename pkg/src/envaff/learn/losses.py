"""Affordance (L1) and triplet losses with their gradients."""

from __future__ import annotations

import numpy as np


def affordance_loss(pred, label) -> float:
    return float(np.abs(np.asarray(pred, float) - np.asarray(label, float)).mean())


def affordance_loss_grad(pred, label) -> np.ndarray:
    """Subgradient of the mean L1 loss (0 at an exact match)."""
    pred = np.asarray(pred, float)
    return np.sign(pred - np.asarray(label, float)) / pred.size


def triplet_loss(f_anchor, f_pos, f_neg, alpha: float = 2.0):
    """Hinged squared-distance triplet loss; mean over leading rows when batched."""
    f_anchor, f_pos, f_neg = (np.asarray(x, float) for x in (f_anchor, f_pos, f_neg))
    if not f_anchor.shape == f_pos.shape == f_neg.shape:
        raise ValueError("embeddings must share a shape")
    d_pos = np.sum((f_anchor - f_pos) ** 2, axis=-1)
    d_neg = np.sum((f_anchor - f_neg) ** 2, axis=-1)
    return float(np.mean(np.maximum(0.0, d_pos - d_neg + alpha)))


def triplet_loss_grad(f_anchor, f_pos, f_neg, alpha: float = 2.0):
    """Gradients of ``triplet_loss`` w.r.t. anchor, positive and negative (batched rows)."""
    f_anchor, f_pos, f_neg = (np.atleast_2d(np.asarray(x, float)) for x in (f_anchor, f_pos, f_neg))
    d_pos = np.sum((f_anchor - f_pos) ** 2, axis=-1)
    d_neg = np.sum((f_anchor - f_neg) ** 2, axis=-1)
    active = (d_pos - d_neg + alpha > 0).astype(float)[:, None] / len(f_anchor)
    ga = 2.0 * active * (f_neg - f_pos)
    gp = -2.0 * active * (f_anchor - f_pos)
    gn = 2.0 * active * (f_anchor - f_neg)
    return ga, gp, gn


def total_loss(preds, labels, f_anchor, f_pos, f_neg, alpha: float = 2.0, lambda_cl: float = 1.0) -> float:
    """Mean L1 over every record plus ``lambda_cl`` times the mean triplet term."""
    aff = affordance_loss(preds, labels)
    if lambda_cl == 0:
        return aff
    return aff + lambda_cl * triplet_loss(f_anchor, f_pos, f_neg, alpha)
