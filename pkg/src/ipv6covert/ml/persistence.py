"""Versioned JSON model files."""

from __future__ import annotations

import json
import os
from typing import Union

import numpy as np

from ..errors import ModelFormatError
from .boosting import BoostingParams, GradientBoostingModel
from .forest import ForestParams, RandomForestModel
from .tree import DecisionTree

FORMAT_TAG = "ipv6covert-model"
FORMAT_VERSION = 1

Model = Union[RandomForestModel, GradientBoostingModel]


def model_to_dict(model: Model) -> dict:
    d = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "params": model.params_dict(),
        "classes": list(model.classes),
        "feature_names": list(model.feature_names),
        "n_features": model.n_features,
        "normalization": model.normalization,
    }
    if isinstance(model, RandomForestModel):
        d["class_weights"] = model.class_weights.tolist()
        d["trees"] = [t.to_dict() for t in model.trees]
    else:
        d["init"] = model.init.tolist()
        d["stages"] = [t.to_dict() for t in model.stages]
        d["train_loss"] = list(model.train_loss)
        d["step_sizes"] = list(model.step_sizes)
    return d


def model_from_dict(d: dict) -> Model:
    if not isinstance(d, dict) or d.get("format") != FORMAT_TAG:
        raise ModelFormatError("not a model file (missing format tag)")
    if d.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {d.get('version')!r}")
    try:
        kind = d["kind"]
        classes = tuple(d["classes"])
        names = tuple(d["feature_names"])
        nf = int(d["n_features"])
        norm = d.get("normalization")
        if kind == RandomForestModel.kind:
            return RandomForestModel(
                [DecisionTree.from_dict(t) for t in d["trees"]], classes,
                np.asarray(d["class_weights"], dtype=float), nf, names, ForestParams(**d["params"]),
                norm)
        if kind == GradientBoostingModel.kind:
            return GradientBoostingModel(
                classes, np.asarray(d["init"], dtype=float),
                [DecisionTree.from_dict(t) for t in d["stages"]], nf, names,
                BoostingParams(**d["params"]), list(d["train_loss"]), list(d["step_sizes"]), norm)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


serialize_model = save_model


def load_model(path: str | os.PathLike) -> Model:
    """Read a model written by ``save_model``.

    Raises:
        ModelFormatError: truncated, corrupted or wrong-version file.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"cannot parse model file {os.fspath(path)}: {exc}") from None
    return model_from_dict(d)
