"""Uniform adapter over the six classical classifiers.

Both gradient-boosting kinds are scikit-learn estimators: the exact-greedy
``GradientBoostingClassifier`` stands in for XGBoost and the histogram-based
``HistGradientBoostingClassifier`` for LightGBM.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.ensemble import (GradientBoostingClassifier, HistGradientBoostingClassifier,
                              RandomForestClassifier)
from sklearn.linear_model import LogisticRegression
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from .core import NUM_CLASSES

log = logging.getLogger(__name__)

KINDS = ("logistic_regression", "svm", "decision_tree", "random_forest",
         "xgboost_style_gbdt", "lightgbm_style_gbdt")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "logistic_regression": {"C": 1.0, "max_iter": 2000},
    "svm": {"C": 1.0, "kernel": "rbf", "gamma": "scale"},
    "decision_tree": {"max_depth": None, "min_samples_leaf": 1},
    "random_forest": {"n_estimators": 200, "max_depth": None, "min_samples_leaf": 1},
    "xgboost_style_gbdt": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3},
    "lightgbm_style_gbdt": {"max_iter": 100, "learning_rate": 0.1, "max_leaf_nodes": 31},
}

# Small validation grids; contents are a desk-scale choice.
GRIDS: dict[str, dict[str, list]] = {
    "logistic_regression": {"C": [0.1, 1.0, 10.0]},
    "svm": {"C": [0.3, 1.0, 3.0]},
    "decision_tree": {"max_depth": [3, 6, None], "min_samples_leaf": [1, 5]},
    "random_forest": {"n_estimators": [100, 300], "max_depth": [None, 8]},
    "xgboost_style_gbdt": {"n_estimators": [100, 200], "max_depth": [2, 3]},
    "lightgbm_style_gbdt": {"max_iter": [100, 200], "max_leaf_nodes": [15, 31]},
}


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ClassicalSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    personalization: str = "agnostic"  # agnostic | one_hot_id
    class_weighting: str = "none"  # none | inverse_frequency
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelSpecError(f"unknown classical model kind {self.kind!r}; expected one of {KINDS}")
        if self.personalization not in ("agnostic", "one_hot_id"):
            raise ModelSpecError(f"unknown personalization {self.personalization!r}")
        if self.class_weighting not in ("none", "inverse_frequency"):
            raise ModelSpecError(f"unknown class_weighting {self.class_weighting!r}")
        # fail early on misspelt hyperparameters
        valid = _estimator(self.kind, {}, 0).get_params()
        unknown = set(self.hyperparameters) - set(valid)
        if unknown:
            raise ModelSpecError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters),
                "personalization": self.personalization, "class_weighting": self.class_weighting,
                "seed": self.seed}


def _estimator(kind: str, hyper: Mapping[str, Any], seed: int):
    params = {**_DEFAULTS[kind], **hyper}
    params["random_state"] = seed
    return {
        "logistic_regression": LogisticRegression,
        "svm": SVC,
        "decision_tree": DecisionTreeClassifier,
        "random_forest": RandomForestClassifier,
        "xgboost_style_gbdt": GradientBoostingClassifier,
        "lightgbm_style_gbdt": HistGradientBoostingClassifier,
    }[kind](**params)


def inverse_frequency_weights(labels: Sequence[int], num_classes: int = NUM_CLASSES) -> np.ndarray:
    """w_c = N / (K * n_c); classes absent from ``labels`` get weight 0."""
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=num_classes).astype(float)
    n_present = np.count_nonzero(counts)
    with np.errstate(divide="ignore"):
        w = np.where(counts > 0, counts.sum() / (n_present * counts), 0.0)
    return w


def build_user_index(participant_ids: Sequence[str]) -> dict[str, int]:
    return {u: i for i, u in enumerate(sorted(set(participant_ids)))}


def attach_user_onehot(inputs: np.ndarray, participant_ids: Sequence[str],
                       user_index: Mapping[str, int]) -> np.ndarray:
    """Append a one-hot user block; unseen users get an all-zero block."""
    inputs = np.asarray(inputs, dtype=float)
    block = np.zeros((len(inputs), len(user_index)))
    unseen = set()
    for row, pid in enumerate(participant_ids):
        k = user_index.get(pid)
        if k is None:
            unseen.add(pid)
        else:
            block[row, k] = 1.0
    if unseen:
        log.warning("users not in the training index, using zero one-hot: %s", sorted(unseen))
    return np.hstack([inputs, block])


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ClassicalModel:
    """A fitted classifier; ``predict_proba`` always returns (n, 4) columns.

    SVM scores are a softmax over its one-vs-rest decision values, so they
    are pseudo-probabilities rather than calibrated ones.
    """

    spec: ClassicalSpec
    estimator: Any
    input_dim: int
    user_index: dict[str, int] | None = None

    def _prepare(self, inputs, participant_ids):
        x = np.asarray(inputs, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs of shape (n, {self.input_dim}), got {x.shape}")
        if self.user_index is not None:
            if participant_ids is None:
                raise ValueError("one_hot_id model needs participant_ids")
            x = attach_user_onehot(x, participant_ids, self.user_index)
        return x

    def predict_proba(self, inputs, participant_ids=None) -> np.ndarray:
        x = self._prepare(inputs, participant_ids)
        classes = self.estimator.classes_
        if self.spec.kind == "svm":
            dec = self.estimator.decision_function(x)
            if dec.ndim == 1:  # binary case: single margin for classes_[1]
                dec = np.column_stack([-dec, dec])
            part = _softmax(dec)
        else:
            part = self.estimator.predict_proba(x)
        out = np.zeros((len(x), NUM_CLASSES))
        out[:, classes] = part
        return out

    def predict(self, inputs, participant_ids=None) -> np.ndarray:
        return np.argmax(self.predict_proba(inputs, participant_ids), axis=1)


def fit(spec: ClassicalSpec, train_inputs, labels, participant_ids: Sequence[str] | None = None) -> ClassicalModel:
    x = np.asarray(train_inputs, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2:
        raise ValueError(f"classical models take 2-D inputs (aggregated or flattened), got {x.shape}")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs but {len(y)} labels")
    if y.size == 0 or y.min() < 0 or y.max() >= NUM_CLASSES:
        raise ValueError(f"labels must be severity ranks 0..{NUM_CLASSES - 1}")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    user_index = None
    xa = x
    if spec.personalization == "one_hot_id":
        if participant_ids is None:
            raise ValueError("one_hot_id personalization needs participant_ids")
        user_index = build_user_index(participant_ids)
        xa = attach_user_onehot(x, participant_ids, user_index)
    sample_weight = None
    if spec.class_weighting == "inverse_frequency":
        sample_weight = inverse_frequency_weights(y)[y]
    est = _estimator(spec.kind, spec.hyperparameters, spec.seed)
    est.fit(xa, y, sample_weight=sample_weight)
    return ClassicalModel(spec, est, x.shape[1], user_index)


def tune(spec: ClassicalSpec, train: tuple, val: tuple, grid: Mapping[str, list] | None = None,
         scorer=None) -> tuple[ClassicalModel, dict]:
    """Pick hyperparameters by validation macro-F1 over a small grid.

    ``train`` and ``val`` are ``(inputs, labels, participant_ids)`` triples.
    Returns the best fitted model and its hyperparameters.
    """
    from .evaluation import score  # local import keeps module import order simple

    grid = GRIDS[spec.kind] if grid is None else grid
    keys = sorted(grid)
    best = None
    for combo in itertools.product(*(grid[k] for k in keys)):
        hyper = {**spec.hyperparameters, **dict(zip(keys, combo))}
        cand = ClassicalSpec(spec.kind, hyper, spec.personalization, spec.class_weighting, spec.seed)
        model = fit(cand, *train)
        pred = model.predict(val[0], val[2])
        f1 = (scorer or (lambda p, g: score(p, g).macro_f1))(pred, val[1])
        if best is None or f1 > best[0]:
            best = (f1, model, hyper)
    return best[1], best[2]
