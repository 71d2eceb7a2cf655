"""Shared plumbing for experiment cells: matrices, seeds, parallel map."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

from popbench.datamodel import Dataset, Family
from popbench.evaluation import EvalConfig, evaluate_partition
from popbench.models import FittedModel, ModelSpec, TrainMatrix, fit, predict

T = TypeVar("T")
R = TypeVar("R")

# first key of every derived stream, so different experiments never share one
STREAM_MODEL = 1
STREAM_PERMUTE = 2
STREAM_ABLATION = 3
STREAM_TRANSFER = 4
STREAM_SENSITIVITY = 5

# (family, column names or None for all columns)
Columns = Sequence[tuple[Family, Sequence[str] | None]]


def feature_block(dataset: Dataset, unit_ids: Sequence[str], columns: Columns) -> tuple[np.ndarray, tuple[str, ...]]:
    """Horizontally stacked matrix for several (family, columns) blocks."""
    blocks, names = [], []
    for family, cols in columns:
        table = dataset.families[family]
        cols = table.feature_names if cols is None else tuple(cols)
        if not cols:
            continue
        blocks.append(table.take(unit_ids, cols))
        names.extend(f"{family.value}:{c}" for c in cols)
    if not blocks:
        return np.empty((len(unit_ids), 0)), ()
    return np.hstack(blocks), tuple(names)


def fit_on(dataset: Dataset, columns: Columns, spec: ModelSpec, train_ids: Sequence[str], seed: int) -> FittedModel:
    X, names = feature_block(dataset, train_ids, columns)
    y = dataset.shares.take(train_ids)
    return fit(spec, TrainMatrix(X, y, names), seed)


def fit_and_evaluate(
    dataset: Dataset,
    columns: Columns,
    spec: ModelSpec,
    train_ids: Sequence[str],
    val_ids: Sequence[str],
    seed: int,
    cfg: EvalConfig = EvalConfig(),
) -> tuple[float, float]:
    model = fit_on(dataset, columns, spec, train_ids, seed)
    Xv, _ = feature_block(dataset, val_ids, columns)
    return evaluate_partition(dataset.shares.take(val_ids), predict(model, Xv), cfg)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], n_jobs: int = 1) -> list[R]:
    """Ordered map; results never depend on ``n_jobs``."""
    if n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]
