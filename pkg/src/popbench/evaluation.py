"""Predictive-fit (R^2) and distributional (KL) metrics on population shares."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from popbench.datamodel import fmt
from popbench.errors import DataError


@dataclass(frozen=True)
class EvalConfig:
    epsilon: float = 1e-12

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DataError("epsilon must be positive")


@dataclass(frozen=True)
class MetricRecord:
    iteration: int
    country: str
    model: str
    family: str
    r2: float
    kl: float
    n_val: int
    train_unit_frac: float
    train_pop_frac: float


METRIC_COLUMNS = tuple(f.name for f in fields(MetricRecord))


def r_squared(obs, pred) -> float:
    obs = np.asarray(obs, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if obs.shape != pred.shape or obs.size < 2:
        raise DataError("r_squared needs equal-length vectors with at least 2 entries")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        raise DataError("r_squared undefined: observed values have zero variance")
    return 1.0 - float(np.sum((obs - pred) ** 2)) / ss_tot


def rescale_predictions(pred_raw, target_total: float, cfg: EvalConfig = EvalConfig()) -> np.ndarray:
    """Clamp at epsilon, then scale so the values sum to ``target_total``."""
    pred = np.asarray(pred_raw, dtype=float)
    if not np.all(np.isfinite(pred)):
        raise DataError("predictions contain non-finite values")
    if not target_total > 0:
        raise DataError("target_total must be positive")
    clamped = np.maximum(pred, cfg.epsilon)
    return clamped * (target_total / math.fsum(clamped))


def kl_divergence(obs_shares, pred_shares, cfg: EvalConfig = EvalConfig()) -> float:
    """KL(p || q) in nats after normalizing both vectors to sum to one."""
    p = np.asarray(obs_shares, dtype=float)
    q = np.asarray(pred_shares, dtype=float)
    if p.shape != q.shape:
        raise DataError("kl_divergence: length mismatch")
    if np.any(p < 0) or not p.sum() > 0:
        raise DataError("observed shares must be non-negative with positive sum")
    if np.any(q <= 0):
        raise DataError("predicted shares must be strictly positive")
    p = p / math.fsum(p)
    q = q / math.fsum(q)
    mask = p > 0
    terms = p[mask] * np.log(p[mask] / q[mask])
    return max(0.0, math.fsum(terms))


def evaluate_partition(obs_shares, pred_raw, cfg: EvalConfig = EvalConfig()) -> tuple[float, float]:
    """R^2 on raw predictions; KL on mass-preserving rescaled predictions."""
    obs = np.asarray(obs_shares, dtype=float)
    if obs.size == 0:
        raise DataError("empty validation partition")
    r2 = r_squared(obs, pred_raw)
    kl = kl_divergence(obs, rescale_predictions(pred_raw, math.fsum(obs), cfg), cfg)
    return r2, kl


def write_metrics_csv(records: Iterable[MetricRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in records:
            w.writerow([v if isinstance(v, (int, str)) else fmt(v) for v in astuple(r)])


def read_metrics_csv(path) -> list[MetricRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            MetricRecord(int(row["iteration"]), row["country"], row["model"], row["family"],
                         float(row["r2"]), float(row["kl"]), int(row["n_val"]),
                         float(row["train_unit_frac"]), float(row["train_pop_frac"]))
            for row in csv.DictReader(fh)
        ]
