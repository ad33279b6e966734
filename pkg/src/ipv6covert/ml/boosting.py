"""Gradient-boosted shallow regression trees on log-loss.

Binary models boost a single log-odds score; multiclass models boost one
score per class through a softmax. Every round backtracks its step size so
training loss never goes up.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import TrainingError
from .forest import check_matrix, encode_labels
from .tree import DecisionTree, grow_regression_tree

MAX_LEAF_STEP = 20.0
MAX_HALVINGS = 40
_EPS = 1e-12


@dataclass(frozen=True)
class BoostingParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    max_features: Optional[int] = None
    seed: int = 42

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 1 <= self.max_depth <= 3:
            raise ValueError("max_depth must be between 1 and 3")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_softmax(F):
    m = F.max(axis=1, keepdims=True)
    return F - m - np.log(np.exp(F - m).sum(axis=1, keepdims=True))


def binary_log_loss(F: np.ndarray, y01: np.ndarray) -> float:
    # log(1 + e^F) - yF, computed stably
    return float(np.mean(np.logaddexp(0.0, F) - y01 * F))


def multiclass_log_loss(F: np.ndarray, codes: np.ndarray) -> float:
    return float(-np.mean(_log_softmax(F)[np.arange(len(codes)), codes]))


@dataclass
class GradientBoostingModel:
    classes: tuple[str, ...]
    init: np.ndarray                 # shape (1,) binary or (K,) multiclass
    stages: list[DecisionTree]       # round-major; K trees per round when multiclass
    n_features: int
    feature_names: tuple[str, ...]
    params: BoostingParams
    train_loss: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    normalization: Optional[dict] = None   # scaling fitted alongside the model

    kind = "gradient_boosting"

    @property
    def is_binary(self) -> bool:
        return len(self.classes) == 2

    @property
    def trees_per_round(self) -> int:
        return 1 if self.is_binary else len(self.classes)

    def raw_scores(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        k = self.trees_per_round
        F = np.tile(self.init, (X.shape[0], 1))
        for s, tree in enumerate(self.stages):
            F[:, s % k] += tree.predict_value(X)[:, 0]
        return F

    def predict_scores(self, X) -> np.ndarray:
        """Class probabilities, shape (n, K)."""
        F = self.raw_scores(X)
        if self.is_binary:
            p = _sigmoid(F[:, 0])
            return np.column_stack([1.0 - p, p])
        return np.exp(_log_softmax(F))

    def predict_codes(self, X) -> np.ndarray:
        if self.is_binary:
            return (self.raw_scores(X)[:, 0] > 0).astype(np.int64)
        return np.argmax(self.raw_scores(X), axis=1)

    def predict(self, X) -> list[str]:
        return [self.classes[k] for k in self.predict_codes(X)]

    def params_dict(self) -> dict:
        return asdict(self.params)


def _newton_binary(r, h):
    def leaf(idx):
        return float(np.clip(r[idx].sum() / max(h[idx].sum(), _EPS), -MAX_LEAF_STEP, MAX_LEAF_STEP))
    return leaf


def _newton_multiclass(r, K):
    a = np.abs(r)
    h = a * (1.0 - a)

    def leaf(idx):
        v = (K - 1) / K * r[idx].sum() / max(h[idx].sum(), _EPS)
        return float(np.clip(v, -MAX_LEAF_STEP, MAX_LEAF_STEP))
    return leaf


def _scaled(tree: DecisionTree, eta: float) -> DecisionTree:
    return DecisionTree(tree.feature, tree.threshold, tree.left, tree.right,
                        tree.value * eta, tree.max_depth)


def train_gradient_boosting(X, y: Sequence, params: BoostingParams = BoostingParams(), *,
                            classes: Optional[Sequence] = None,
                            feature_names: Optional[Sequence[str]] = None) -> GradientBoostingModel:
    """Fit a boosted ensemble; two classes give a binary model.

    The initial score is the log-odds (binary) or log-prior (multiclass) of
    the training labels, so zero rounds predicts the class priors. Each round
    starts at ``learning_rate`` and halves the step until training loss does
    not increase; if no step helps the round contributes nothing.

    Raises:
        TrainingError: empty input, a single class, or labels outside ``classes``.
    """
    X = check_matrix(X)
    classes, codes = encode_labels(y, classes)
    n, d = X.shape
    if n != len(codes):
        raise TrainingError(f"{n} feature rows but {len(codes)} labels")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(d))
    if len(names) != d:
        raise TrainingError(f"{len(names)} feature names for {d} columns")
    K = len(classes)
    rng = np.random.default_rng(params.seed) if params.max_features else None
    grow = dict(max_depth=params.max_depth, min_samples_leaf=params.min_samples_leaf,
                max_features=params.max_features, rng=rng)
    prior = np.bincount(codes, minlength=K) / n
    stages: list[DecisionTree] = []
    steps: list[float] = []

    if K == 2:
        y01 = codes.astype(float)
        p1 = float(np.clip(prior[1], _EPS, 1 - _EPS))
        init = np.array([np.log(p1 / (1 - p1))])
        F = np.full(n, init[0])
        losses = [binary_log_loss(F, y01)]
        for _ in range(params.n_rounds):
            p = _sigmoid(F)
            r = y01 - p
            tree = grow_regression_tree(X, r, _newton_binary(r, p * (1 - p)), **grow)
            delta = tree.predict_value(X)[:, 0]
            eta, loss = _line_search(lambda e: binary_log_loss(F + e * delta, y01),
                                     losses[-1], params.learning_rate)
            F = F + eta * delta
            stages.append(_scaled(tree, eta))
            steps.append(eta)
            losses.append(loss)
    else:
        init = np.log(np.clip(prior, _EPS, None))
        F = np.tile(init, (n, 1))
        Y = np.eye(K)[codes]
        losses = [multiclass_log_loss(F, codes)]
        for _ in range(params.n_rounds):
            P = np.exp(_log_softmax(F))
            trees, delta = [], np.zeros((n, K))
            for k in range(K):
                r = Y[:, k] - P[:, k]
                tree = grow_regression_tree(X, r, _newton_multiclass(r, K), **grow)
                trees.append(tree)
                delta[:, k] = tree.predict_value(X)[:, 0]
            eta, loss = _line_search(lambda e: multiclass_log_loss(F + e * delta, codes),
                                     losses[-1], params.learning_rate)
            F = F + eta * delta
            stages.extend(_scaled(t, eta) for t in trees)
            steps.append(eta)
            losses.append(loss)
    return GradientBoostingModel(classes, init, stages, d, names, params, losses, steps)


def _line_search(loss_at, current: float, eta: float) -> tuple[float, float]:
    for _ in range(MAX_HALVINGS):
        loss = loss_at(eta)
        if loss <= current:
            return eta, loss
        eta /= 2
    return 0.0, current
