"""Random forest regression: bootstrap trees with random feature subsets."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from popbench._rng import rng_for
from popbench.errors import ModelError
from popbench.models import _kernels
from popbench.models.base import FittedModel, ModelKind, PackedTrees, RandomForestParams, TrainMatrix


def _grow(data: TrainMatrix, hp: RandomForestParams, seed: int, t: int):
    rng = rng_for(seed, t)
    n = data.n
    if hp.bootstrap:
        samples = rng.integers(0, n, size=n).astype(np.int64)
    else:
        samples = np.arange(n, dtype=np.int64)
    node_seed = np.uint64(rng.integers(0, 2**63, dtype=np.int64))
    max_depth = -1 if hp.max_depth is None else hp.max_depth
    return _kernels.grow_variance_tree(data.X, data.y, samples, hp.resolve_mtry(data.p),
                                       hp.min_node_size, max_depth, node_seed)


def fit_random_forest(data: TrainMatrix, hp: RandomForestParams, seed: int, n_jobs: int = 1) -> FittedModel:
    """Grow ``hp.n_trees`` trees; tree ``t`` draws from the stream (seed, t)."""
    if data.n < 2:
        raise ModelError("random forest needs at least 2 rows")
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(lambda t: _grow(data, hp, seed, t), range(hp.n_trees)))
    else:
        trees = [_grow(data, hp, seed, t) for t in range(hp.n_trees)]
    return FittedModel(ModelKind.RANDOM_FOREST, hp, data.feature_names, {"trees": PackedTrees.pack(trees)})


def predict_random_forest(model: FittedModel, X: np.ndarray) -> np.ndarray:
    per_tree = model.parameters["trees"].per_tree(X)
    lo, hi = per_tree.min(axis=0), per_tree.max(axis=0)
    # where every tree agrees, return that value rather than a rounded mean
    return np.where(lo == hi, lo, per_tree.mean(axis=0))
