"""Array-backed binary decision trees and their growers.

A tree is five parallel arrays indexed by node id. Node 0 is the root;
``feature == -1`` marks a leaf. Samples go left when
``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

LEAF = -1


@dataclass
class DecisionTree:
    feature: np.ndarray      # int64, LEAF for leaves
    threshold: np.ndarray    # float64
    left: np.ndarray         # int64 child ids, LEAF for leaves
    right: np.ndarray
    value: np.ndarray        # (n_nodes, n_outputs) float64
    max_depth: Optional[int] = None

    def __post_init__(self):
        n = len(self.feature)
        for name in ("threshold", "left", "right"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"tree array {name} has wrong length")
        if self.value.shape[0] != n:
            raise ValueError("tree value array has wrong length")
        internal = self.feature != LEAF
        for child in (self.left, self.right):
            ids = child[internal]
            if ids.size and (ids.min() <= 0 or ids.max() >= n):
                raise ValueError("tree has a dangling child index")

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max()) if self.node_count else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        rows = np.arange(X.shape[0])
        while active.size:
            nd = node[active]
            go_left = X[rows[active], self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64).reshape(len(d["feature"]), -1),
            max_depth=d.get("max_depth"),
        )


class _Builder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def add(self, value: np.ndarray) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.feature) - 1

    def finish(self, max_depth: Optional[int]) -> DecisionTree:
        return DecisionTree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.vstack(self.value).astype(np.float64),
            max_depth,
        )


def _threshold(lo: float, hi: float) -> float:
    t = (lo + hi) / 2.0
    return lo if t >= hi else t


def _valid_cuts(xs: np.ndarray, min_leaf: int) -> np.ndarray:
    """Positions i such that splitting after sorted row i separates distinct values."""
    m = len(xs)
    cuts = np.flatnonzero(xs[:-1] < xs[1:])
    if min_leaf > 1:
        cuts = cuts[(cuts + 1 >= min_leaf) & (m - cuts - 1 >= min_leaf)]
    return cuts


def _feature_order(rng: Optional[np.random.Generator], n_features: int) -> np.ndarray:
    if rng is None:
        return np.arange(n_features)
    return rng.permutation(n_features)


def grow_classification_tree(X: np.ndarray, y: np.ndarray, weight: np.ndarray, n_classes: int, *,
                             max_depth: Optional[int] = None, min_samples_split: int = 2,
                             min_samples_leaf: int = 1, max_features: Optional[int] = None,
                             rng: Optional[np.random.Generator] = None) -> DecisionTree:
    """CART with weighted Gini impurity.

    ``weight`` folds together class weights and bootstrap multiplicity; rows
    with zero weight are ignored. At each node ``max_features`` columns are
    tried in random order; if none of them can split, the remaining columns
    are tried until one does. Leaves store weighted class totals.
    """
    n, d = X.shape
    k_try = d if max_features is None else max(1, min(d, max_features))
    rows = np.flatnonzero(weight > 0)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = weight

    b = _Builder()
    root = b.add(onehot[rows].sum(axis=0))
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        total = b.value[node]
        if (len(idx) < min_samples_split or np.count_nonzero(total) <= 1
                or (max_depth is not None and depth >= max_depth)):
            continue
        Yw = onehot[idx]
        best_score, best = -np.inf, None
        for tried, f in enumerate(_feature_order(rng, d)):
            if tried >= k_try and best is not None:
                break
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs = xs[order]
            cuts = _valid_cuts(xs, min_samples_leaf)
            if cuts.size == 0:
                continue
            cum = np.cumsum(Yw[order], axis=0)[cuts]
            rest = total - cum
            wl = cum.sum(axis=1)
            wr = rest.sum(axis=1)
            # maximising sum(l^2)/L + sum(r^2)/R minimises the weighted Gini
            score = (cum * cum).sum(axis=1) / wl + (rest * rest).sum(axis=1) / wr
            j = int(np.argmax(score))
            if score[j] > best_score:
                best_score = score[j]
                c = cuts[j]
                best = (f, _threshold(xs[c], xs[c + 1]), idx[order[:c + 1]], idx[order[c + 1:]])
        if best is None:
            continue
        f, thr, li, ri = best
        lnode = b.add(onehot[li].sum(axis=0))
        rnode = b.add(onehot[ri].sum(axis=0))
        b.feature[node], b.threshold[node] = int(f), float(thr)
        b.left[node], b.right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return b.finish(max_depth)


def grow_regression_tree(X: np.ndarray, target: np.ndarray,
                         leaf_value: Callable[[np.ndarray], float], *, max_depth: int = 3,
                         min_samples_leaf: int = 1, max_features: Optional[int] = None,
                         rng: Optional[np.random.Generator] = None) -> DecisionTree:
    """Least-squares regression tree; leaf outputs come from ``leaf_value(row_ids)``."""
    n, d = X.shape
    k_try = d if max_features is None else max(1, min(d, max_features))
    b = _Builder()
    rows = np.arange(n)
    root = b.add(np.zeros(1))
    stack = [(root, rows, 0)]
    leaves: list[tuple[int, np.ndarray]] = []
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf:
            leaves.append((node, idx))
            continue
        t = target[idx]
        s_total = t.sum()
        m = len(idx)
        best_score, best = -np.inf, None
        for tried, f in enumerate(_feature_order(rng, d)):
            if tried >= k_try and best is not None:
                break
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs = xs[order]
            cuts = _valid_cuts(xs, min_samples_leaf)
            if cuts.size == 0:
                continue
            sl = np.cumsum(t[order])[cuts]
            nl = cuts + 1.0
            score = sl * sl / nl + (s_total - sl) ** 2 / (m - nl)
            j = int(np.argmax(score))
            if score[j] > best_score:
                best_score = score[j]
                c = cuts[j]
                best = (f, _threshold(xs[c], xs[c + 1]), idx[order[:c + 1]], idx[order[c + 1:]])
        if best is None or best_score <= s_total * s_total / m:
            leaves.append((node, idx))
            continue
        f, thr, li, ri = best
        lnode, rnode = b.add(np.zeros(1)), b.add(np.zeros(1))
        b.feature[node], b.threshold[node] = int(f), float(thr)
        b.left[node], b.right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    for node, idx in leaves:
        b.value[node] = np.array([leaf_value(idx)])
    return b.finish(max_depth)
