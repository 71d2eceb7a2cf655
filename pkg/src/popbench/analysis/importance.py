"""Permutation importance on validation R^2 and pooled feature rankings."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from popbench._rng import rng_for
from popbench.analysis._cells import STREAM_PERMUTE, feature_block, fit_on, parallel_map
from popbench.analysis.benchmark import cell_seed
from popbench.datamodel import Dataset, Family, fmt
from popbench.evaluation import r_squared
from popbench.models import ModelSpec, predict
from popbench.splits import SplitPlan

IMPORTANCE_COLUMNS = ("family", "feature", "country", "model", "iteration", "delta_r2")


@dataclass(frozen=True)
class ImportanceRow:
    family: str
    feature: str
    country: str
    model: str
    iteration: int
    delta_r2: float


@dataclass
class ImportanceTable:
    rows: list[ImportanceRow] = field(default_factory=list)
    # (country, model, family, iteration) -> validation R^2 before permuting
    baselines: dict[tuple[str, str, str, int], float] = field(default_factory=dict)

    def __add__(self, other: "ImportanceTable") -> "ImportanceTable":
        return ImportanceTable(self.rows + other.rows, {**self.baselines, **other.baselines})

    def values(self) -> dict[tuple[str, str], list[float]]:
        """Per-iteration importances keyed by (family, feature)."""
        out: dict[tuple[str, str], list[float]] = {}
        for r in self.rows:
            out.setdefault((r.family, r.feature), []).append(r.delta_r2)
        return out

    def summary(self) -> dict[tuple[str, str], tuple[float, float, float]]:
        """(median, 25th, 75th percentile) per (family, feature)."""
        return {k: (float(np.median(v)), float(np.percentile(v, 25)), float(np.percentile(v, 75)))
                for k, v in self.values().items()}


def permutation_importance(
    dataset: Dataset,
    family: Family,
    spec: ModelSpec,
    plan: SplitPlan,
    seed: int,
    n_jobs: int = 1,
) -> ImportanceTable:
    """R^2 drop after shuffling each feature within the validation rows.

    The model for each iteration is fitted with the same seed the benchmark
    uses for that cell, so baselines match the benchmark's R^2.
    """
    family = Family.parse(family)
    names = dataset.feature_names(family)

    def run(it):
        train = sorted(it.train_units)
        val = sorted(it.validation_units)
        model = fit_on(dataset, [(family, None)], spec, train, cell_seed(seed, it.iteration, family, spec))
        Xv, _ = feature_block(dataset, val, [(family, None)])
        obs = dataset.shares.take(val)
        base = r_squared(obs, predict(model, Xv))
        rows = []
        for j, name in enumerate(names):
            rng = rng_for(seed, STREAM_PERMUTE, it.iteration, family.ordinal, spec.kind.ordinal, j)
            Xp = Xv.copy()
            Xp[:, j] = Xv[rng.permutation(len(val)), j]
            delta = base - r_squared(obs, predict(model, Xp))
            rows.append(ImportanceRow(family.value, name, dataset.country_tag, spec.name, it.iteration, delta))
        return base, rows

    table = ImportanceTable()
    for it, (base, rows) in zip(plan, parallel_map(run, list(plan), n_jobs)):
        table.baselines[(dataset.country_tag, spec.name, family.value, it.iteration)] = base
        table.rows.extend(rows)
    return table


def rank_features(tables: Sequence[ImportanceTable]) -> dict[str, list[str]]:
    """Features per family by descending pooled median importance, ties by name."""
    pooled: dict[tuple[str, str], list[float]] = {}
    for t in tables:
        for key, vals in t.values().items():
            pooled.setdefault(key, []).extend(vals)
    out: dict[str, list[tuple[float, str]]] = {}
    for (fam, feat), vals in pooled.items():
        out.setdefault(fam, []).append((-float(np.median(vals)), feat))
    return {fam: [feat for _, feat in sorted(items)] for fam, items in sorted(out.items())}


def write_importance_csv(tables: Iterable[ImportanceTable], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMPORTANCE_COLUMNS)
        for t in tables:
            for r in t.rows:
                w.writerow([r.family, r.feature, r.country, r.model, r.iteration, fmt(r.delta_r2)])


def read_importance_csv(path) -> ImportanceTable:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [ImportanceRow(r["family"], r["feature"], r["country"], r["model"], int(r["iteration"]),
                              float(r["delta_r2"])) for r in csv.DictReader(fh)]
    return ImportanceTable(rows)
