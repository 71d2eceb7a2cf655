"""Leave-one-region-out transferability, regional descriptors and univariate OLS."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from popbench._rng import derive_seed
from popbench.analysis._cells import STREAM_TRANSFER, feature_block, parallel_map
from popbench.datamodel import Dataset, Family, fmt
from popbench.errors import DataError
from popbench.evaluation import EvalConfig, evaluate_partition
from popbench.linkage import MatchResult
from popbench.models import ModelSpec, TrainMatrix, fit, predict
from popbench.splits import GroupedIndex, leave_one_group_out

# descriptor -> covariate column feeding it
DEFAULT_DESCRIPTOR_COLUMNS = {
    "night_lights": "night_time_lights_intensity",
    "built_fraction": "built_up_surface_area",
    "built_volume": "built_up_volume",
    "building_density": "building_density",
    "distance_to_highway": "distance_to_highways",
}

TRANSFER_COLUMNS = (
    "country", "region", "delta_r2", "delta_kl", "area_km2", "pop_density", "night_lights",
    "built_fraction", "built_volume", "building_density", "road_accessibility", "pdfm_density",
)
DESCRIPTOR_NAMES = TRANSFER_COLUMNS[4:]
DESCRIPTOR_LABELS = {
    "area_km2": "Area",
    "pop_density": "Population density",
    "night_lights": "Night-time lights",
    "built_fraction": "Built-up fraction",
    "built_volume": "Built volume",
    "building_density": "Building density",
    "road_accessibility": "Road accessibility",
    "pdfm_density": "PDFM density",
}
OLS_COLUMNS = ("scope", "metric", "variable", "estimate", "ci_low", "ci_high", "std_error", "p_value")


@dataclass(frozen=True)
class RegionDescriptors:
    area_km2: float
    pop_density: float
    night_lights: float | None = None
    built_fraction: float | None = None
    built_volume: float | None = None
    building_density: float | None = None
    road_accessibility: float | None = None
    pdfm_density: float | None = None

    def get(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class TransferRecord:
    country: str
    region: str
    delta_r2: float
    delta_kl: float
    descriptors: RegionDescriptors | None = None
    r2_embeddings: float = math.nan
    r2_covariates: float = math.nan
    kl_embeddings: float = math.nan
    kl_covariates: float = math.nan
    n_val: int = 0


def delta_metrics(r2_emb: float, r2_cov: float, kl_emb: float, kl_cov: float) -> tuple[float, float]:
    """Both deltas are oriented so that positive favours the embeddings."""
    return r2_emb - r2_cov, kl_cov - kl_emb


def compute_region_descriptors(
    dataset: Dataset,
    match_results: Iterable[MatchResult] | None = None,
    covariate_column_map: Mapping[str, str] | None = None,
    level: str = "group",
) -> dict[str, RegionDescriptors]:
    """Area, density and area-weighted covariate means for each region.

    Without ``match_results`` every embedding row counts as one record.
    Covariate descriptors are left empty if their column is not available.
    """
    column_map = DEFAULT_DESCRIPTOR_COLUMNS if covariate_column_map is None else covariate_column_map
    units = dataset.unit_index
    pop = dataset.population.as_dict()
    cov = dataset.families.get(Family.COVARIATES)
    if match_results is None:
        emb = dataset.families.get(Family.EMBEDDINGS)
        records = Counter(u for u in dataset.unit_ids if emb is not None and u in emb)
    else:
        records = Counter(r.matched_unit for r in match_results)

    out = {}
    for region, ids in dataset.groups(level).items():
        areas = np.array([units[u].area_km2 for u in ids])
        area = math.fsum(areas)
        if not area > 0:
            raise DataError(f"region {region!r} has zero total area")
        values: dict[str, float | None] = {
            "area_km2": area,
            "pop_density": math.fsum(pop[u] for u in ids) / area,
        }
        for desc in ("night_lights", "built_fraction", "built_volume", "building_density", "distance_to_highway"):
            col = column_map.get(desc)
            if cov is None or col is None or col not in cov.feature_names:
                values[desc] = None
                continue
            x = cov.take(ids, [col])[:, 0]
            values[desc] = float(np.sum(areas * x) / area)
        dist = values.pop("distance_to_highway")
        values["road_accessibility"] = None if dist is None else -dist
        n_rec = sum(records.get(u, 0) for u in ids)
        values["pdfm_density"] = area / n_rec if n_rec > 0 else None
        out[region] = RegionDescriptors(**values)
    return out


def _fold_seed(seed, country_idx, region_idx, family: Family) -> int:
    return derive_seed(seed, STREAM_TRANSFER, country_idx, region_idx, family.ordinal)


@dataclass
class TransferResult:
    records: list[TransferRecord] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def run_transferability(
    datasets: Mapping[str, Dataset] | Sequence[Dataset],
    rf_spec: ModelSpec,
    seed: int,
    covariate_column_map: Mapping[str, str] | None = None,
    match_results: Mapping[str, Sequence[MatchResult]] | None = None,
    pooled_training: bool = False,
    cfg: EvalConfig = EvalConfig(),
    n_jobs: int = 1,
) -> TransferResult:
    """Hold out each region of each country in turn; fit both families on the rest.

    Training stays within the country unless ``pooled_training`` is set, in
    which case units of all other countries join every training set (the
    families must then share column names across countries).
    """
    if not isinstance(datasets, Mapping):
        datasets = {d.country_tag: d for d in datasets}
    countries = sorted(datasets)
    result = TransferResult()
    jobs = []
    for ci, country in enumerate(countries):
        ds = datasets[country]
        missing = [f for f in Family if f not in ds.families]
        if missing:
            raise DataError(f"{country}: transferability needs both families (missing {missing[0].value})")
        plan = leave_one_group_out(GroupedIndex.from_dataset(ds), ds.shares)
        desc = compute_region_descriptors(
            ds, None if match_results is None else match_results.get(country), covariate_column_map
        )
        for it in plan:
            region = sorted(set(ds.groups()) - set(it.train_groups))[0]
            val = sorted(it.validation_units)
            obs = ds.shares.take(val)
            if len(val) < 2 or np.ptp(obs) == 0:
                result.skipped.append(f"{country}/{region}: {len(val)} validation unit(s), not evaluable")
                continue
            jobs.append((ci, country, it.iteration, region, sorted(it.train_units), val, desc[region]))

    def others(country: str, family: Family):
        blocks = []
        for c in countries:
            if c == country:
                continue
            ds = datasets[c]
            ids = list(ds.unit_ids)
            X, _ = feature_block(ds, ids, [(family, None)])
            blocks.append((X, ds.shares.take(ids)))
        return blocks

    def run(job) -> TransferRecord:
        ci, country, idx, region, train, val, descriptors = job
        ds = datasets[country]
        scores = {}
        for family in Family:
            X, names = feature_block(ds, train, [(family, None)])
            y = ds.shares.take(train)
            if pooled_training:
                for Xo, yo in others(country, family):
                    X, y = np.vstack([X, Xo]), np.concatenate([y, yo])
            model = fit(rf_spec, TrainMatrix(X, y, names), _fold_seed(seed, ci, idx, family))
            Xv, _ = feature_block(ds, val, [(family, None)])
            scores[family] = evaluate_partition(ds.shares.take(val), predict(model, Xv), cfg)
        (r2e, kle), (r2c, klc) = scores[Family.EMBEDDINGS], scores[Family.COVARIATES]
        dr2, dkl = delta_metrics(r2e, r2c, kle, klc)
        return TransferRecord(country, region, dr2, dkl, descriptors, r2e, r2c, kle, klc, len(val))

    result.records = parallel_map(run, jobs, n_jobs)
    return result


# --- OLS --------------------------------------------------------------------

@dataclass(frozen=True)
class OlsFit:
    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    p_value: float
    n: int
    intercept: float = 0.0


def zscore(x) -> np.ndarray:
    """Centre and scale by the sample (n - 1) standard deviation."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DataError("cannot z-score a zero-variance descriptor")
    return (x - x.mean()) / sd


def ols_univariate(x, y, standardize: bool = True) -> OlsFit:
    """Slope of ``y ~ a + b * z(x)`` with classical SE, 95% t-interval and two-sided p."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3 or y.size != n:
        raise DataError("ols_univariate needs n >= 3 paired observations")
    if not np.ptp(x) > 0:
        raise DataError("ols_univariate: zero-variance predictor")
    xz = zscore(x) if standardize else x
    xc = xz - xz.mean()
    sxx = float(xc @ xc)
    b = float(xc @ (y - y.mean())) / sxx
    a = float(y.mean() - b * xz.mean())
    resid = y - a - b * xz
    rss = float(resid @ resid)
    syy = float(np.sum((y - y.mean()) ** 2))
    if rss <= (64 * np.finfo(float).eps) ** 2 * max(syy, np.finfo(float).tiny):
        rss = 0.0
    df = n - 2
    se = math.sqrt(rss / df / sxx)
    if se == 0.0:
        return OlsFit(b, 0.0, b, b, 0.0 if b != 0 else 1.0, n, a)
    tcrit = float(stats.t.ppf(0.975, df))
    p = float(2 * stats.t.sf(abs(b / se), df))
    return OlsFit(b, se, b - tcrit * se, b + tcrit * se, min(max(p, 0.0), 1.0), n, a)


@dataclass(frozen=True)
class OlsRow:
    scope: str
    metric: str
    variable: str
    estimate: float
    ci_low: float
    ci_high: float
    std_error: float
    p_value: float
    n: int


def ols_table(records: Sequence[TransferRecord], pooled_label: str = "All Data") -> tuple[list[OlsRow], list[str]]:
    """One univariate fit per (scope, metric, descriptor).

    Scopes are the pooled sample plus each country; descriptors are z-scored
    within the scope. Returns the rows and notes for skipped fits.
    """
    scopes = [(pooled_label, list(records))]
    for country in sorted({r.country for r in records}):
        scopes.append((country, [r for r in records if r.country == country]))
    rows, notes = [], []
    for scope, recs in scopes:
        for metric in ("delta_r2", "delta_kl"):
            for var in DESCRIPTOR_NAMES:
                pairs = [(r.descriptors.get(var), getattr(r, metric)) for r in recs
                         if r.descriptors is not None and r.descriptors.get(var) is not None]
                if len(pairs) < 3:
                    notes.append(f"{scope}/{metric}/{var}: {len(pairs)} observations, skipped")
                    continue
                x, y = map(np.array, zip(*pairs))
                if not np.ptp(x) > 0:
                    notes.append(f"{scope}/{metric}/{var}: zero variance, skipped")
                    continue
                f = ols_univariate(x, y)
                rows.append(OlsRow(scope, metric, DESCRIPTOR_LABELS[var], f.estimate, f.ci_low, f.ci_high,
                                   f.std_error, f.p_value, f.n))
    return rows, notes


def write_ols_csv(rows: Iterable[OlsRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OLS_COLUMNS)
        for r in rows:
            w.writerow([r.scope, r.metric, r.variable, fmt(r.estimate), fmt(r.ci_low), fmt(r.ci_high),
                        fmt(r.std_error), fmt(r.p_value)])


def _cell(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else fmt(v)


def write_transfer_csv(records: Iterable[TransferRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSFER_COLUMNS)
        for r in records:
            d = r.descriptors
            w.writerow([r.country, r.region, fmt(r.delta_r2), fmt(r.delta_kl),
                        *(_cell(None if d is None else d.get(name)) for name in DESCRIPTOR_NAMES)])


def read_transfer_csv(path) -> list[TransferRecord]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vals = {k: (float(row[k]) if row[k] != "" else None) for k in DESCRIPTOR_NAMES}
            out.append(TransferRecord(row["country"], row["region"], float(row["delta_r2"]),
                                      float(row["delta_kl"]), RegionDescriptors(**vals)))
    return out
