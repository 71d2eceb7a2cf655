"""The three regressors behind one ``fit`` / ``predict`` contract."""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from popbench.errors import ModelError
from popbench.models.base import (
    ElasticNetParams,
    FittedModel,
    GradientBoostingParams,
    ModelKind,
    ModelSpec,
    PackedTrees,
    RandomForestParams,
    TrainMatrix,
    default_specs,
    hyperparameters_dict,
)
from popbench.models.boosting import fit_gradient_boosting, predict_gradient_boosting
from popbench.models.elastic_net import fit_elastic_net, predict_elastic_net
from popbench.models.forest import fit_random_forest, predict_random_forest

__all__ = [
    "ElasticNetParams", "FittedModel", "GradientBoostingParams", "ModelKind", "ModelSpec",
    "RandomForestParams", "TrainMatrix", "default_specs", "feature_usage", "fit", "predict",
    "fit_elastic_net", "fit_gradient_boosting", "fit_random_forest", "model_to_json", "model_from_json",
]

SERIAL_VERSION = 1


def fit(spec: ModelSpec, data: TrainMatrix, seed: int) -> FittedModel:
    if data.n < 2 or data.p < 1:
        raise ModelError(f"need n >= 2 and p >= 1, got n={data.n}, p={data.p}")
    hp = spec.hyperparameters
    if spec.kind is ModelKind.RANDOM_FOREST:
        return fit_random_forest(data, hp, seed)
    if spec.kind is ModelKind.GRADIENT_BOOSTING:
        return fit_gradient_boosting(data, hp, seed)
    return fit_elastic_net(data, hp, seed)


def predict(model: FittedModel, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
    """Raw (unclamped) predictions.

    If ``feature_names`` is given the columns of ``X`` are realigned to the
    training order by name; otherwise ``X`` must already be in that order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ModelError("X must be two-dimensional")
    if feature_names is not None:
        names = list(feature_names)
        if sorted(names) != sorted(model.feature_names) or len(names) != X.shape[1]:
            raise ModelError("prediction columns do not match the training feature names")
        pos = {name: j for j, name in enumerate(names)}
        X = X[:, [pos[name] for name in model.feature_names]]
    elif X.shape[1] != len(model.feature_names):
        raise ModelError(f"expected {len(model.feature_names)} columns, got {X.shape[1]}")
    X = np.ascontiguousarray(X)
    if model.kind is ModelKind.RANDOM_FOREST:
        return predict_random_forest(model, X)
    if model.kind is ModelKind.GRADIENT_BOOSTING:
        return predict_gradient_boosting(model, X)
    return predict_elastic_net(model, X)


def feature_usage(model: FittedModel) -> np.ndarray:
    """Per-feature usage count: split nodes for trees, nonzero coefficient for EN."""
    p = len(model.feature_names)
    if model.kind is ModelKind.ELASTIC_NET:
        return (model.parameters["coef"] != 0).astype(int)
    return model.parameters["trees"].split_counts(p)


def model_to_json(model: FittedModel) -> str:
    params = {}
    for k, v in model.parameters.items():
        if isinstance(v, PackedTrees):
            params[k] = v.to_json()
        elif isinstance(v, np.ndarray):
            params[k] = v.tolist()
        else:
            params[k] = v
    doc = {
        "version": SERIAL_VERSION,
        "kind": model.kind.value,
        "hyperparameters": hyperparameters_dict(model.hyperparameters),
        "feature_names": list(model.feature_names),
        "parameters": params,
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> FittedModel:
    doc = json.loads(text)
    if doc.get("version") != SERIAL_VERSION:
        raise ModelError(f"unsupported model document version {doc.get('version')!r}")
    spec = ModelSpec(doc["kind"], doc["hyperparameters"])
    params = {}
    for k, v in doc["parameters"].items():
        if k == "trees":
            params[k] = PackedTrees.from_json(v)
        elif isinstance(v, list):
            params[k] = np.array(v, dtype=float)
        else:
            params[k] = v
    return FittedModel(spec.kind, spec.hyperparameters, tuple(doc["feature_names"]), params)
