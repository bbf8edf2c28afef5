"""Scikit-learn style estimator around the four-network affordance model."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..cloud import LabeledCloud
from ..validation import check_queries, check_triplets
from . import checkpoint
from .features import FeatureCache, Query, build_batch, _pad
from .losses import affordance_loss, affordance_loss_grad, triplet_loss, triplet_loss_grad
from .layers import bounded_score
from .networks import AffordanceNet
from .optim import Adam

log = logging.getLogger(__name__)

ABLATIONS = {
    "none": {},
    "no-of": {"use_field": False},
    "no-cl": {"lambda_cl": 0.0},
}


class AffordanceModel(ClassifierMixin, BaseEstimator):
    """Environment-aware point affordance predictor.

    ``fit`` takes (anchor, positive, negative) query triples with their 0/1 labels;
    ``predict_proba`` scores single queries and ``transform`` returns the
    robot-target conditioned scene features.
    """

    def __init__(
        self,
        k_significant: int = 256,
        width: int = 64,
        feature_dim: int = 128,
        scene_hidden: tuple = (64, 64),
        predictor_hidden: int = 128,
        batch_size: int = 30,
        learning_rate: float = 1e-3,
        alpha: float = 2.0,
        lambda_cl: float = 1.0,
        epochs: int = 30,
        use_field: bool = True,
        field_coords: bool = False,
        include_target_points: bool = False,
        field_height: float = 0.0,
        threshold: float = 0.5,
        random_state: int = 0,
    ):
        self.k_significant = k_significant
        self.width = width
        self.feature_dim = feature_dim
        self.scene_hidden = scene_hidden
        self.predictor_hidden = predictor_hidden
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.alpha = alpha
        self.lambda_cl = lambda_cl
        self.epochs = epochs
        self.use_field = use_field
        self.field_coords = field_coords
        self.include_target_points = include_target_points
        self.field_height = field_height
        self.threshold = threshold
        self.random_state = random_state

    # -- construction -----------------------------------------------------

    def _validate_hyperparams(self):
        for name in ("k_significant", "width", "feature_dim", "predictor_hidden", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.batch_size % 3:
            raise ValueError("batch_size must be a multiple of 3 (whole triplets)")
        if self.learning_rate <= 0 or self.alpha <= 0 or self.lambda_cl < 0 or self.epochs < 0:
            raise ValueError("learning_rate and alpha must be positive; lambda_cl and epochs non-negative")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")

    def _cache(self) -> FeatureCache:
        if getattr(self, "_feature_cache", None) is None:
            self._feature_cache = FeatureCache(self.k_significant, self.include_target_points, self.field_coords,
                                               self.field_height)
        return self._feature_cache

    def _new_net(self) -> AffordanceNet:
        return AffordanceNet(
            seed=self.random_state,
            width=self.width,
            feature_dim=self.feature_dim,
            use_field=self.use_field,
            field_dim=6 if self.field_coords else 3,
            scene_hidden=tuple(self.scene_hidden),
            predictor_hidden=self.predictor_hidden,
        )

    # -- training ---------------------------------------------------------

    def batch_loss_and_grads(self, triplets, labels):
        """Forward + backward on whole triplets; returns ``(loss, aff, cl)``.

        Gradients are left in ``self.net_``.
        """
        net = self.net_
        n = len(triplets)
        queries = [t[0] for t in triplets] + [t[1] for t in triplets] + [t[2] for t in triplets]
        y = np.concatenate([labels[:, 0], labels[:, 1], labels[:, 2]])
        batch = build_batch(queries, self._cache(), self.use_field)
        net.zero_all()
        scores, f_s = net.forward(batch)
        aff = affordance_loss(scores, y)
        g_scores = affordance_loss_grad(scores, y)
        cl, g_scene = 0.0, None
        if self.use_field and self.lambda_cl > 0:
            fa, fp, fn = f_s[:n], f_s[n : 2 * n], f_s[2 * n :]
            cl = triplet_loss(fa, fp, fn, self.alpha)
            ga, gp, gn = triplet_loss_grad(fa, fp, fn, self.alpha)
            g_scene = self.lambda_cl * np.concatenate([ga, gp, gn])
        net.backward(g_scores, g_scene)
        return aff + self.lambda_cl * cl, aff, cl

    def fit(self, X, y):
        """Train on triplets ``X`` with labels ``y`` of shape (n, 3)."""
        self._validate_hyperparams()
        X, y = check_triplets(X, y)
        rng = np.random.default_rng(self.random_state)
        self._feature_cache = None
        self.net_ = self._new_net()
        self.params_ = dict(self.net_.named_params())
        self.optimizer_ = Adam(self.params_, lr=self.learning_rate)
        per_batch = self.batch_size // 3
        self.loss_curve_, self.aff_curve_, self.cl_curve_ = [], [], []
        for epoch in range(self.epochs):
            order = rng.permutation(len(X))
            terms = []
            for s in range(0, len(X), per_batch):
                idx = order[s : s + per_batch]
                terms.append(self.batch_loss_and_grads([X[i] for i in idx], y[idx]))
                self.optimizer_.step(dict(self.net_.named_grads()))
            total, aff, cl = np.mean(terms, axis=0)
            self.loss_curve_.append(float(total))
            self.aff_curve_.append(float(aff))
            self.cl_curve_.append(float(cl))
            log.debug("epoch %d loss %.5f", epoch, self.loss_curve_[-1])
        self.n_features_in_ = 3
        self.classes_ = np.array([0, 1])
        return self

    # -- inference --------------------------------------------------------

    def _forward_queries(self, X, chunk: int = 64):
        check_is_fitted(self, "net_")
        X = check_queries(X)
        scores, feats = [], []
        for s in range(0, len(X), chunk):
            batch = build_batch(X[s : s + chunk], self._cache(), self.use_field)
            sc, f = self.net_.forward(batch)
            scores.append(sc)
            feats.append(f)
        return np.concatenate(scores), np.concatenate(feats)

    def predict_proba(self, X) -> np.ndarray:
        """Affordance scores in (0, 1), one per query (1-D, not the 2-column sklearn layout)."""
        return bounded_score(self.decision_function(X))

    def decision_function(self, X) -> np.ndarray:
        """Raw scores as trained against the 0/1 labels."""
        return self._forward_queries(X)[0]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= self.threshold).astype(int)

    def transform(self, X) -> np.ndarray:
        """Scene features of each query (zeros when the field is ablated)."""
        return self._forward_queries(X)[1]

    def score(self, X, y, sample_weight=None) -> float:
        from ..harness.metrics import average_precision

        return average_precision(self.predict_proba(X), y)

    def score_points(self, cloud: LabeledCloud, robot, indices=None, chunk: int = 32) -> np.ndarray:
        """Scores of many points of one cloud for one robot position.

        Shares the per-cloud part of the target encoder across points; results are
        bit-identical to ``predict_proba`` on the equivalent queries.
        """
        check_is_fitted(self, "net_")
        net = self.net_
        robot = np.asarray(robot, float)
        idx = cloud.target_indices if indices is None else np.asarray(indices, dtype=np.int64)
        if len(idx) == 0:
            return np.zeros(0)
        cache = self._cache()
        static = cache.static(cloud)
        out = []
        for s in range(0, len(idx), chunk):
            part = idx[s : s + chunk]
            f_t = net.target.encode_points(static, cloud.seg, part, chunk)
            f_r = net.robot.forward(np.repeat(robot[None], len(part), axis=0))
            if self.use_field:
                fields = [cache.field(Query(cloud, robot, int(i))) for i in part]
                f_s = net.scene.forward(_pad(fields, max(len(f) for f in fields)))
            else:
                f_s = np.zeros((len(part), self.feature_dim))
            out.append(net.predictor.forward(np.concatenate([f_r, f_t, f_s], axis=-1)))
        return bounded_score(np.concatenate(out))

    # -- persistence ------------------------------------------------------

    def save(self, path, meta: dict | None = None) -> None:
        """Checkpoint weights, optimizer state, loss curves and ``meta`` (JSON-able)."""
        check_is_fitted(self, "net_")
        arrays = {"param." + k: v for k, v in self.net_.state_dict().items()}
        arrays.update({"adam." + k: v for k, v in self.optimizer_.state_dict().items()})
        for name in ("loss_curve", "aff_curve", "cl_curve"):
            arrays[name] = np.asarray(getattr(self, name + "_", []), dtype=float)
        hp = self.get_params()
        hp["scene_hidden"] = list(hp["scene_hidden"])
        checkpoint.save(path, arrays, {"estimator": "AffordanceModel", "params": hp, "extra": meta or {}})

    @classmethod
    def load(cls, path) -> "AffordanceModel":
        arrays, meta = checkpoint.load(path)
        hp = dict(meta["params"])
        hp["scene_hidden"] = tuple(hp["scene_hidden"])
        model = cls(**hp)
        model.net_ = model._new_net()
        model.net_.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("param.")})
        model.params_ = dict(model.net_.named_params())
        model.optimizer_ = Adam(model.params_, lr=model.learning_rate)
        model.optimizer_.load_state_dict({k[5:]: v for k, v in arrays.items() if k.startswith("adam.")})
        for name in ("loss_curve", "aff_curve", "cl_curve"):
            setattr(model, name + "_", arrays[name].tolist() if name in arrays else [])
        model.meta_ = meta.get("extra", {})
        model.n_features_in_ = 3
        model.classes_ = np.array([0, 1])
        return model


def with_ablation(model: AffordanceModel, ablation: str) -> AffordanceModel:
    """A clone of ``model`` with the named ablation (``none``, ``no-of``, ``no-cl``) applied."""
    from sklearn.base import clone

    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}; expected one of {sorted(ABLATIONS)}")
    return clone(model).set_params(**ABLATIONS[ablation])
