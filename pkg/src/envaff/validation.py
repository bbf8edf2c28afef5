"""Input checks shared by the estimator and the evaluation harness."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import LengthMismatch, ShapeMismatch
from .learn.features import Query


def check_query(q) -> Query:
    if not isinstance(q, Query):
        raise TypeError(f"expected Query, got {type(q).__name__}")
    if not 0 <= q.point_index < len(q.cloud):
        raise ShapeMismatch(f"point index {q.point_index} outside cloud of {len(q.cloud)} points")
    if np.shape(q.robot) != (3,):
        raise ShapeMismatch("robot position must be a 3-vector")
    return q


def check_queries(X) -> list:
    X = list(X)
    if not X:
        raise ValueError("need at least one query")
    return [check_query(q) for q in X]


def check_triplets(X, y):
    """Validate ``X`` as (anchor, positive, negative) query triples and ``y`` as (n, 3) labels."""
    X = [tuple(t) for t in X]
    if not X:
        raise ValueError("need at least one triplet")
    for t in X:
        if len(t) != 3:
            raise ShapeMismatch("each triplet must hold exactly three queries")
        for q in t:
            check_query(q)
    y = np.asarray(y, dtype=float)
    if y.shape != (len(X), 3):
        raise ShapeMismatch(f"labels must have shape ({len(X)}, 3), got {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return X, y


def check_binary_vectors(scores: Sequence, labels: Sequence):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if len(s) != len(y):
        raise LengthMismatch(f"{len(s)} scores vs {len(y)} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(int)
