"""Model specifications, fitted-model container, and tree packing."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from popbench.errors import ModelError
from popbench.models import _kernels


class ModelKind(str, enum.Enum):
    RANDOM_FOREST = "RandomForest"
    GRADIENT_BOOSTING = "GradientBoosting"
    ELASTIC_NET = "ElasticNet"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        aliases = {"rf": cls.RANDOM_FOREST, "gbt": cls.GRADIENT_BOOSTING, "xgboost": cls.GRADIENT_BOOSTING,
                   "en": cls.ELASTIC_NET, "enet": cls.ELASTIC_NET}
        text = str(value)
        for kind in cls:
            if text.lower() == kind.value.lower():
                return kind
        if text.lower() in aliases:
            return aliases[text.lower()]
        raise ModelError(f"unknown model kind {value!r}")

    @property
    def ordinal(self) -> int:
        return list(ModelKind).index(self)


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 499
    mtry: int | None = None  # None: floor(p / 3), at least 1
    min_node_size: int = 5
    bootstrap: bool = True
    max_depth: int | None = None

    def __post_init__(self):
        if self.n_trees < 1 or self.min_node_size < 1:
            raise ModelError("n_trees and min_node_size must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ModelError("mtry must be positive")

    def resolve_mtry(self, p: int) -> int:
        return min(p, self.mtry) if self.mtry is not None else max(1, p // 3)


@dataclass(frozen=True)
class GradientBoostingParams:
    rounds: int = 500
    learning_rate: float = 0.05
    max_depth: int = 6
    row_subsample: float = 0.8
    col_subsample: float = 0.8
    l2_leaf: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        for name in ("learning_rate", "row_subsample", "col_subsample"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ModelError(f"{name} must lie in (0, 1], got {v}")
        if self.rounds < 1 or self.max_depth < 1:
            raise ModelError("rounds and max_depth must be positive")


@dataclass(frozen=True)
class ElasticNetParams:
    alpha: float = 0.5
    path_length: int = 100
    path_ratio: float = 1e-4
    cv_folds: int = 5
    tol: float = 1e-7
    max_iter: int = 100_000
    fixed_lambda: float | None = None  # bypasses the path and CV when set

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ModelError("alpha must lie in (0, 1]")
        if not 0 < self.path_ratio < 1:
            raise ModelError("path_ratio must lie in (0, 1)")
        if self.path_length < 1 or self.cv_folds < 2 or self.max_iter < 1:
            raise ModelError("path_length, cv_folds, max_iter must be positive (cv_folds >= 2)")
        if self.fixed_lambda is not None and self.fixed_lambda < 0:
            raise ModelError("fixed_lambda must be >= 0")


_PARAMS = {
    ModelKind.RANDOM_FOREST: RandomForestParams,
    ModelKind.GRADIENT_BOOSTING: GradientBoostingParams,
    ModelKind.ELASTIC_NET: ElasticNetParams,
}


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    hyperparameters: Any = None

    def __post_init__(self):
        kind = ModelKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        hp = self.hyperparameters
        if hp is None:
            hp = _PARAMS[kind]()
        elif isinstance(hp, dict):
            hp = _PARAMS[kind](**hp)
        elif not isinstance(hp, _PARAMS[kind]):
            raise ModelError(f"{kind.value} needs {_PARAMS[kind].__name__}, got {type(hp).__name__}")
        object.__setattr__(self, "hyperparameters", hp)

    @property
    def name(self) -> str:
        return self.kind.value


def default_specs() -> list[ModelSpec]:
    """The three learners with their fixed benchmark settings."""
    return [ModelSpec(kind) for kind in ModelKind]


@dataclass(frozen=True)
class TrainMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise ModelError("X must be two-dimensional")
        if X.shape[0] != y.size:
            raise ModelError(f"X has {X.shape[0]} rows but y has {y.size}")
        names = tuple(self.feature_names)
        if len(names) != X.shape[1]:
            raise ModelError("feature_names length does not match X columns")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ModelError("training data contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PackedTrees:
    """Trees stored end to end; child indices are local to each tree."""

    offsets: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def pack(cls, trees: Sequence[tuple[np.ndarray, ...]]) -> "PackedTrees":
        sizes = [len(t[0]) for t in trees]
        offsets = np.zeros(len(trees) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        cols = [np.concatenate([t[k] for t in trees]) for k in range(5)]
        return cls(offsets, cols[0].astype(np.int64), cols[1].astype(float), cols[2].astype(np.int64),
                   cols[3].astype(np.int64), cols[4].astype(float))

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def tree(self, t: int) -> tuple[np.ndarray, ...]:
        s = slice(self.offsets[t], self.offsets[t + 1])
        return (self.feature[s], self.threshold[s], self.left[s], self.right[s], self.value[s])

    def per_tree(self, X: np.ndarray) -> np.ndarray:
        return _kernels.predict_packed(np.ascontiguousarray(X, dtype=float), self.offsets, self.feature,
                                       self.threshold, self.left, self.right, self.value)

    def split_counts(self, p: int) -> np.ndarray:
        f = self.feature[self.feature >= 0]
        return np.bincount(f, minlength=p)

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("offsets", "feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_json(cls, d: dict) -> "PackedTrees":
        return cls(np.array(d["offsets"], dtype=np.int64), np.array(d["feature"], dtype=np.int64),
                   np.array(d["threshold"], dtype=float), np.array(d["left"], dtype=np.int64),
                   np.array(d["right"], dtype=np.int64), np.array(d["value"], dtype=float))


@dataclass(frozen=True)
class FittedModel:
    """A fitted regressor.

    ``parameters`` holds, by kind: ``trees`` (RF); ``base_score`` and
    ``trees`` with learning-rate-scaled leaves (GBT); ``intercept``,
    ``coef`` on the original feature scale and ``lambda_`` (EN).
    """

    kind: ModelKind
    hyperparameters: Any
    feature_names: tuple[str, ...]
    parameters: dict = field(compare=False)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.kind, self.hyperparameters)

    @property
    def trees(self) -> PackedTrees | None:
        return self.parameters.get("trees")


def hyperparameters_dict(hp) -> dict:
    return asdict(hp)
