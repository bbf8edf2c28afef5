"""Thresholded F-score and rank-based average precision."""

from __future__ import annotations

import numpy as np

from ..errors import NoPositives
from ..validation import check_binary_vectors


def confusion(preds, labels, threshold: float = 0.5) -> dict:
    s, y = check_binary_vectors(preds, labels)
    hit = s >= threshold
    return {
        "tp": int(np.sum(hit & (y == 1))),
        "fp": int(np.sum(hit & (y == 0))),
        "fn": int(np.sum(~hit & (y == 1))),
        "tn": int(np.sum(~hit & (y == 0))),
    }


def precision_recall(preds, labels, threshold: float = 0.5):
    c = confusion(preds, labels, threshold)
    p = c["tp"] / (c["tp"] + c["fp"]) if c["tp"] + c["fp"] else 0.0
    r = c["tp"] / (c["tp"] + c["fn"]) if c["tp"] + c["fn"] else 0.0
    return p, r


def f_score(preds, labels, threshold: float = 0.5) -> float:
    """Harmonic mean of precision and recall at ``threshold`` (0 when both are 0)."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    p, r = precision_recall(preds, labels, threshold)
    return 2 * p * r / (p + r) if p + r else 0.0


def average_precision(scores, labels) -> float:
    """Mean of the precision at the rank of each positive.

    Ranking is by descending score with ties broken by ascending index, so the
    value is a deterministic function of its inputs.
    """
    s, y = check_binary_vectors(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("average precision is undefined without positive labels")
    order = np.lexsort((np.arange(len(s)), -s))
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, n_pos + 1) / ranks))
