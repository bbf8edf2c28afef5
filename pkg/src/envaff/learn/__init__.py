"""Affordance networks, losses, optimizer and the estimator that ties them together."""

from .estimator import ABLATIONS, AffordanceModel, with_ablation
from .features import Query

__all__ = ["ABLATIONS", "AffordanceModel", "Query", "with_ablation"]
