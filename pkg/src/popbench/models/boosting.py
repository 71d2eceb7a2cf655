"""Gradient-boosted regression trees for squared-error loss."""

from __future__ import annotations

import math

import numpy as np

from popbench._rng import rng_for
from popbench.errors import ModelError
from popbench.models import _kernels
from popbench.models.base import FittedModel, GradientBoostingParams, ModelKind, PackedTrees, TrainMatrix


def base_score(y: np.ndarray) -> float:
    # exact for constant targets, where the float mean may drift by an ulp
    return float(y[0]) if np.all(y == y[0]) else float(np.mean(y))


def fit_gradient_boosting(
    data: TrainMatrix,
    hp: GradientBoostingParams,
    seed: int,
    record_training_rmse: bool = False,
) -> FittedModel:
    """Newton boosting with unit hessians; round ``r`` samples from stream (seed, r).

    Leaf values are stored already multiplied by the learning rate. With
    ``record_training_rmse`` the training RMSE after every round is kept in
    ``parameters["training_rmse"]`` (index 0 is the base-score RMSE).
    """
    n, p = data.n, data.p
    if n < 2:
        raise ModelError("gradient boosting needs at least 2 rows")
    X, y = data.X, data.y
    base = base_score(y)
    pred = np.full(n, base)
    hess = np.ones(n)
    n_rows = min(n, math.ceil(hp.row_subsample * n))
    n_cols = min(p, max(1, math.ceil(hp.col_subsample * p)))
    trees = []
    rmse = [float(np.sqrt(np.mean((y - pred) ** 2)))] if record_training_rmse else None
    for r in range(hp.rounds):
        rng = rng_for(seed, r)
        rows = np.arange(n, dtype=np.int64) if n_rows == n else np.sort(rng.choice(n, n_rows, replace=False)).astype(np.int64)
        cols = np.arange(p, dtype=np.int64) if n_cols == p else np.sort(rng.choice(p, n_cols, replace=False)).astype(np.int64)
        grad = pred - y
        f, t, lft, rgt, v = _kernels.grow_gradient_tree(X, grad, hess, rows, cols, hp.max_depth,
                                                       hp.l2_leaf, hp.gamma, hp.min_child_weight)
        v = v * hp.learning_rate
        trees.append((f, t, lft, rgt, v))
        pred = pred + _kernels.predict_tree(X, f, t, lft, rgt, v)
        if rmse is not None:
            rmse.append(float(np.sqrt(np.mean((y - pred) ** 2))))
    params = {"base_score": base, "trees": PackedTrees.pack(trees)}
    if rmse is not None:
        params["training_rmse"] = np.array(rmse)
    return FittedModel(ModelKind.GRADIENT_BOOSTING, hp, data.feature_names, params)


def predict_gradient_boosting(model: FittedModel, X: np.ndarray) -> np.ndarray:
    per_tree = model.parameters["trees"].per_tree(X)
    out = np.full(X.shape[0], model.parameters["base_score"])
    # sequential accumulation mirrors the training-time update order
    for row in per_tree:
        out = out + row
    return out
