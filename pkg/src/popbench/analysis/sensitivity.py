"""Change of support: aggregate units one level up and re-run leave-one-region-out."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from popbench._rng import derive_seed
from popbench.analysis._cells import STREAM_SENSITIVITY, fit_and_evaluate, parallel_map
from popbench.analysis.transfer import TransferRecord, compute_region_descriptors, delta_metrics
from popbench.datamodel import (
    AdminUnit,
    Dataset,
    Family,
    FeatureTable,
    PopulationTable,
    assemble_dataset,
    fmt,
)
from popbench.errors import DataError
from popbench.evaluation import EvalConfig, MetricRecord
from popbench.models import ModelSpec
from popbench.splits import GroupedIndex, leave_one_group_out

AGGREGATORS = ("sum", "mean", "area_weighted_mean", "pop_weighted_mean")
DEFAULT_RULES = {Family.COVARIATES.value: "area_weighted_mean", Family.EMBEDDINGS.value: "mean"}


def _aggregate(values: np.ndarray, how: str, areas: np.ndarray, pops: np.ndarray) -> np.ndarray:
    if how == "sum":
        return values.sum(axis=0)
    if how == "mean":
        return values.mean(axis=0)
    weights = areas if how == "area_weighted_mean" else pops
    total = math.fsum(weights)
    if not total > 0:
        # weights vanish (zero-area or unpopulated group): unweighted mean
        return values.mean(axis=0)
    return weights @ values / total


def aggregate_dataset(dataset: Dataset, to_level: str = "group", rules: Mapping[str, str] | None = None) -> Dataset:
    """Re-express the dataset with one unit per group (or supergroup).

    Population and area are summed; each family is aggregated with the rule
    named for it. At ``to_level='group'`` the old supergroup becomes the new
    group. At ``to_level='supergroup'`` each new unit is its own group.
    """
    if to_level not in ("group", "supergroup"):
        raise DataError(f"unknown aggregation level {to_level!r}")
    merged = dict(DEFAULT_RULES)
    for key, how in (rules or {}).items():
        merged[Family.parse(key).value if key != "population" else key] = how
    if merged.pop("population", "sum") != "sum":
        raise DataError("population can only be aggregated with 'sum'")
    for key, how in merged.items():
        if how not in AGGREGATORS:
            raise DataError(f"unknown aggregator {how!r} for {key}")

    members = dataset.groups(to_level)
    units = dataset.unit_index
    pop = dataset.population.as_dict()
    new_units, counts = [], []
    for gid, ids in members.items():
        parents = {units[u].supergroup_id for u in ids} if to_level == "group" else {gid}
        if None in parents:
            raise DataError(f"group {gid!r} has units without supergroup_id")
        if len(parents) != 1:
            raise DataError(f"group {gid!r} spans several supergroups: {sorted(parents)}")
        parent = parents.pop()
        new_units.append(AdminUnit(id=gid, name=gid, group_id=parent,
                                   area_km2=math.fsum(units[u].area_km2 for u in ids)))
        counts.append(math.fsum(pop[u] for u in ids))

    tables = []
    gids = list(members)
    for family, table in dataset.families.items():
        how = merged[family.value]
        rows = []
        for gid in gids:
            ids = members[gid]
            areas = np.array([units[u].area_km2 for u in ids])
            pops = np.array([pop[u] for u in ids])
            rows.append(_aggregate(table.take(ids), how, areas, pops))
        tables.append(FeatureTable(family, table.feature_names, gids, np.array(rows)))
    population = PopulationTable(tuple(gids), np.array(counts))
    return assemble_dataset(new_units, tables, population, dataset.country_tag)


@dataclass
class SensitivityResult:
    metrics: list[MetricRecord] = field(default_factory=list)
    deltas: list[TransferRecord] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    aggregated: Dataset | None = None


def run_sensitivity(
    dataset: Dataset,
    rf_spec: ModelSpec,
    rules: Mapping[str, str] | None = None,
    seed: int = 0,
    covariate_column_map: Mapping[str, str] | None = None,
    cfg: EvalConfig = EvalConfig(),
    n_jobs: int = 1,
) -> SensitivityResult:
    """Aggregate to the group level, then hold out one supergroup at a time."""
    if any(u.supergroup_id is None for u in dataset.units):
        raise DataError("sensitivity analysis needs supergroup_id on every unit")
    agg = aggregate_dataset(dataset, "group", rules)
    index = GroupedIndex.from_dataset(agg)
    plan = leave_one_group_out(index, agg.shares)
    desc = compute_region_descriptors(agg, None, covariate_column_map)
    result = SensitivityResult(aggregated=agg)
    jobs = []
    for it in plan:
        region = index.group_ids[it.iteration]
        val = sorted(it.validation_units)
        obs = agg.shares.take(val)
        if len(val) < 2 or np.ptp(obs) == 0:
            result.skipped.append(f"{region}: {len(val)} validation unit(s), not evaluable")
            continue
        jobs.append((it, region, val))

    def run(job):
        it, region, val = job
        out = {}
        for family in Family:
            s = derive_seed(seed, STREAM_SENSITIVITY, it.iteration, family.ordinal)
            out[family] = fit_and_evaluate(agg, [(family, None)], rf_spec, sorted(it.train_units), val, s, cfg)
        return out

    for (it, region, val), scores in zip(jobs, parallel_map(run, jobs, n_jobs)):
        for family in Family:
            r2, kl = scores[family]
            result.metrics.append(MetricRecord(it.iteration, dataset.country_tag, rf_spec.name, family.value,
                                               r2, kl, len(val), it.train_unit_frac, it.train_pop_frac))
        (r2e, kle), (r2c, klc) = scores[Family.EMBEDDINGS], scores[Family.COVARIATES]
        dr2, dkl = delta_metrics(r2e, r2c, kle, klc)
        result.deltas.append(TransferRecord(dataset.country_tag, region, dr2, dkl, desc[region],
                                            r2e, r2c, kle, klc, len(val)))
    return result


SENSITIVITY_DELTA_COLUMNS = ("country", "region", "r2_embeddings", "r2_covariates", "kl_embeddings",
                             "kl_covariates", "delta_r2", "delta_kl", "n_val")


def write_sensitivity_delta_csv(records, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SENSITIVITY_DELTA_COLUMNS)
        for r in records:
            w.writerow([r.country, r.region, fmt(r.r2_embeddings), fmt(r.r2_covariates), fmt(r.kl_embeddings),
                        fmt(r.kl_covariates), fmt(r.delta_r2), fmt(r.delta_kl), r.n_val])
