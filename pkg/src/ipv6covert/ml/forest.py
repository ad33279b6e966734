"""Bagged CART ensemble with class-balanced weights and majority voting."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import TrainingError
from .tree import DecisionTree, grow_classification_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Optional[int] = None   # None: floor(sqrt(d))
    balanced: bool = True
    seed: int = 42
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split must be >= 2 and min_samples_leaf >= 1")


def label_values(y: Sequence) -> list[str]:
    """Class labels as plain strings; enum members contribute their value."""
    return [str(getattr(v, "value", v)) for v in y]


def encode_labels(y: Sequence, classes: Optional[Sequence] = None) -> tuple[tuple[str, ...], np.ndarray]:
    names = label_values(y)
    if not names:
        raise TrainingError("training set is empty")
    if classes is None:
        classes = tuple(sorted(set(names)))
    else:
        classes = tuple(label_values(classes))
        if len(set(classes)) != len(classes):
            raise TrainingError("duplicate class names")
    index = {c: k for k, c in enumerate(classes)}
    unknown = sorted(set(names) - set(index))
    if unknown:
        raise TrainingError(f"labels {unknown} are not among classes {list(classes)}")
    codes = np.fromiter((index[v] for v in names), dtype=np.int64, count=len(names))
    if len(np.unique(codes)) < 2:
        raise TrainingError(f"training labels contain only one class ({names[0]})")
    return classes, codes


def balanced_class_weights(codes: np.ndarray, n_classes: int) -> np.ndarray:
    """n / (K * count_k) over the classes present; absent classes get 0."""
    counts = np.bincount(codes, minlength=n_classes).astype(float)
    present = counts > 0
    w = np.zeros(n_classes)
    w[present] = len(codes) / (present.sum() * counts[present])
    return w


def check_matrix(X, n_features: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"model expects {n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains NaN or infinite values")
    return X


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    classes: tuple[str, ...]
    class_weights: np.ndarray
    n_features: int
    feature_names: tuple[str, ...]
    params: ForestParams
    normalization: Optional[dict] = None   # scaling fitted alongside the model

    kind = "random_forest"

    def votes(self, X) -> np.ndarray:
        """(n, K) count of trees voting for each class."""
        X = check_matrix(X, self.n_features)
        out = np.zeros((X.shape[0], len(self.classes)))
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            # argmax picks the lowest class index on ties
            choice = np.argmax(tree.predict_value(X), axis=1)
            out[rows, choice] += 1
        return out

    def predict_scores(self, X) -> np.ndarray:
        """Vote fraction per class; rows sum to 1."""
        return self.votes(X) / len(self.trees)

    def predict_codes(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def predict(self, X) -> list[str]:
        return [self.classes[k] for k in self.predict_codes(X)]

    def params_dict(self) -> dict:
        return asdict(self.params)


def _grow_one(X, codes, cw, n_classes, params: ForestParams, max_features: int, t: int) -> DecisionTree:
    rng = np.random.default_rng([params.seed, t])
    n = len(codes)
    draws = np.bincount(rng.integers(0, n, size=n), minlength=n)
    weight = draws * cw[codes]
    return grow_classification_tree(
        X, codes, weight, n_classes,
        max_depth=params.max_depth, min_samples_split=params.min_samples_split,
        min_samples_leaf=params.min_samples_leaf, max_features=max_features, rng=rng)


def train_random_forest(X, y: Sequence, params: ForestParams = ForestParams(), *,
                        classes: Optional[Sequence] = None,
                        feature_names: Optional[Sequence[str]] = None) -> RandomForestModel:
    """Fit ``params.n_trees`` trees on bootstrap resamples of (X, y).

    Tree ``t`` draws all of its randomness from ``default_rng([seed, t])`` so
    the model does not depend on ``n_jobs`` or scheduling order.

    Raises:
        TrainingError: empty input, a single class, or labels outside ``classes``.
    """
    X = check_matrix(X)
    classes, codes = encode_labels(y, classes)
    if X.shape[0] != len(codes):
        raise TrainingError(f"{X.shape[0]} feature rows but {len(codes)} labels")
    d = X.shape[1]
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(d))
    if len(names) != d:
        raise TrainingError(f"{len(names)} feature names for {d} columns")
    K = len(classes)
    cw = balanced_class_weights(codes, K) if params.balanced else np.ones(K)
    mf = params.max_features or max(1, math.isqrt(d))

    def grow(t):
        return _grow_one(X, codes, cw, K, params, mf, t)

    if params.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=params.n_jobs) as pool:
            trees = list(pool.map(grow, range(params.n_trees)))
    else:
        trees = [grow(t) for t in range(params.n_trees)]
    return RandomForestModel(trees, classes, cw, d, names, params)


def predict_forest(model: RandomForestModel, X) -> tuple[list[str], np.ndarray]:
    """Predicted class names and the per-class vote fractions."""
    votes = model.votes(X)
    return [model.classes[k] for k in np.argmax(votes, axis=1)], votes / len(model.trees)
