"""Two-stage detection: a normal-vs-covert screen, then channel attribution."""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from ..channels import ChannelKind
from .boosting import GradientBoostingModel
from .forest import RandomForestModel

Model = Union[RandomForestModel, GradientBoostingModel]

COVERT_LABEL = "covert"


def binary_labels(labels: Sequence[ChannelKind]) -> list[str]:
    """Collapse channel labels to ``normal`` / ``covert``."""
    return [ChannelKind.NORMAL.value if lab is ChannelKind.NORMAL else COVERT_LABEL for lab in labels]


def check_feature_space(model: Model, n_features: int, feature_names: Sequence[str] | None = None) -> None:
    if model.n_features != n_features:
        raise ValueError(f"{model.kind} model expects {model.n_features} features, got {n_features}")
    if feature_names is not None and tuple(feature_names) != tuple(model.feature_names):
        raise ValueError(f"{model.kind} model was trained on different feature columns")


def run_two_stage_pipeline(binary_model: Model, multiclass_model: Model, X,
                           feature_names: Sequence[str] | None = None) -> list[ChannelKind]:
    """Label every row with a channel.

    Rows the binary model calls normal stay Normal. The rest go to the
    multiclass model, which may still answer Normal.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
    for m in (binary_model, multiclass_model):
        check_feature_space(m, X.shape[1], feature_names)
    if tuple(binary_model.feature_names) != tuple(multiclass_model.feature_names):
        raise ValueError("binary and multiclass models were trained on different feature columns")
    if ChannelKind.NORMAL.value not in binary_model.classes or len(binary_model.classes) != 2:
        raise ValueError("first-stage model must be binary with a 'normal' class")
    unknown = [c for c in multiclass_model.classes if c not in {k.value for k in ChannelKind}]
    if unknown:
        raise ValueError(f"second-stage model has non-channel classes {unknown}")

    out = [ChannelKind.NORMAL] * X.shape[0]
    flagged = np.flatnonzero(np.array(binary_model.predict(X)) != ChannelKind.NORMAL.value) \
        if X.shape[0] else np.array([], dtype=np.int64)
    if flagged.size:
        for i, name in zip(flagged, multiclass_model.predict(X[flagged])):
            out[i] = ChannelKind(name)
    return out
