"""Domain types, file loaders and dataset assembly."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from popbench.errors import DataError, GeometryError
from popbench.geometry import Geometry, GeometrySet, geometry_from_geojson, spherical_area_km2

AREA_CONSISTENCY_RTOL = 0.005


class Family(str, enum.Enum):
    """Predictor family. The value is the lowercase name used in files."""

    EMBEDDINGS = "embeddings"
    COVARIATES = "covariates"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DataError(f"unknown feature family {value!r}") from None

    @property
    def ordinal(self) -> int:
        return list(Family).index(self)

    @property
    def label(self) -> str:
        return self.value.capitalize()


# Embedding dimension groups at full scale (inclusive column spans).
EMBEDDING_GROUPS = {
    "search_trends": (0, 127),
    "maps_busyness": (128, 255),
    "weather_air_quality": (256, 329),
}
EMBEDDING_DIM = 330

# Harmonised covariate set, one column per raster source.
COVARIATE_NAMES = (
    "building_density",
    "built_up_surface_area",
    "built_up_volume",
    "distance_to_coastline",
    "distance_to_inland_water",
    "elevation",
    "distance_to_cropland",
    "distance_to_forest",
    "distance_to_grassland",
    "distance_to_shrubland",
    "distance_to_sparse_vegetation",
    "distance_to_flooded_vegetation",
    "distance_to_urban_areas",
    "distance_to_bare_areas",
    "distance_to_highways",
    "fraction_of_inland_water",
    "annual_precipitation",
    "distance_to_road_intersections",
    "slope",
    "average_temperature",
    "night_time_lights_intensity",
    "distance_to_mapped_water_bodies",
    "distance_to_protected_areas",
)


def _check_id(value, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise DataError(f"{what} must be a non-empty string, got {value!r}")
    return value


@dataclass(frozen=True)
class AdminUnit:
    id: str
    name: str
    group_id: str
    area_km2: float
    supergroup_id: str | None = None
    geometry_ref: str | None = None

    def __post_init__(self):
        _check_id(self.id, "unit id")
        _check_id(self.group_id, f"group_id of unit {self.id!r}")
        if not (math.isfinite(self.area_km2) and self.area_km2 >= 0):
            raise DataError(f"unit {self.id!r}: area_km2 must be finite and >= 0")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class FeatureTable:
    """Unit-indexed feature matrix for one predictor family.

    ``values[i]`` is the row of ``unit_ids[i]``; columns follow ``feature_names``.
    """

    def __init__(self, family: Family, feature_names: Sequence[str], unit_ids: Sequence[str], values):
        self.family = Family.parse(family)
        self.feature_names = tuple(feature_names)
        self.unit_ids = tuple(unit_ids)
        self.values = _frozen(values).reshape(len(self.unit_ids), len(self.feature_names))
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError(f"{self.family.value}: duplicate feature names")
        if len(set(self.unit_ids)) != len(self.unit_ids):
            raise DataError(f"{self.family.value}: duplicate unit ids")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"{self.family.value}: non-finite feature values")
        self._index = {uid: i for i, uid in enumerate(self.unit_ids)}

    @property
    def rows(self) -> dict[str, np.ndarray]:
        return {uid: self.values[i] for uid, i in self._index.items()}

    def __contains__(self, uid) -> bool:
        return uid in self._index

    def __len__(self) -> int:
        return len(self.unit_ids)

    def row(self, uid: str) -> np.ndarray:
        return self.values[self._index[uid]]

    def take(self, unit_ids: Sequence[str], columns: Sequence[str] | None = None) -> np.ndarray:
        """Matrix for ``unit_ids`` (in that order) and optionally a column subset."""
        rows = np.fromiter((self._index[u] for u in unit_ids), dtype=np.intp, count=len(unit_ids))
        if columns is None:
            return self.values[rows]
        col_index = {name: j for j, name in enumerate(self.feature_names)}
        try:
            cols = [col_index[c] for c in columns]
        except KeyError as exc:
            raise DataError(f"{self.family.value}: unknown feature {exc.args[0]!r}") from None
        return self.values[np.ix_(rows, cols)]

    def restrict(self, unit_ids: Sequence[str]) -> "FeatureTable":
        return FeatureTable(self.family, self.feature_names, unit_ids, self.take(unit_ids))


@dataclass(frozen=True)
class PopulationTable:
    unit_ids: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        object.__setattr__(self, "counts", _frozen(self.counts))
        if len(self.unit_ids) != len(self.counts):
            raise DataError("population ids and counts differ in length")
        if len(set(self.unit_ids)) != len(self.unit_ids):
            raise DataError("duplicate unit id in population table")
        if not np.all(np.isfinite(self.counts)):
            raise DataError("population counts must be finite")
        bad = np.nonzero(self.counts < 0)[0]
        if len(bad):
            raise DataError(f"negative population for unit {self.unit_ids[bad[0]]!r}")

    @property
    def total(self) -> float:
        return math.fsum(self.counts)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.unit_ids, self.counts.tolist()))

    def restrict(self, unit_ids: Sequence[str]) -> "PopulationTable":
        d = self.as_dict()
        return PopulationTable(tuple(unit_ids), np.array([d[u] for u in unit_ids]))


@dataclass(frozen=True)
class ShareVector:
    unit_ids: tuple[str, ...]
    shares: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.unit_ids, self.shares.tolist()))

    def take(self, unit_ids: Sequence[str]) -> np.ndarray:
        d = self.as_dict()
        return np.array([d[u] for u in unit_ids])


def compute_shares(population: PopulationTable) -> ShareVector:
    """Each unit's count divided by the total count."""
    total = population.total
    if not total > 0:
        raise DataError("total population is zero")
    return ShareVector(population.unit_ids, _frozen(population.counts / total))


@dataclass(frozen=True)
class JoinReport:
    """Which unit ids were dropped because a source lacked them."""

    n_kept: int
    missing: Mapping[str, tuple[str, ...]]

    @property
    def n_dropped(self) -> int:
        return len(set().union(*self.missing.values())) if self.missing else 0

    def lines(self) -> list[str]:
        out = []
        for source, ids in self.missing.items():
            if ids:
                noun = "unit" if len(ids) == 1 else "units"
                out.append(f"{len(ids)} {noun} dropped (missing {source})")
        return out

    def __str__(self):
        return "; ".join(self.lines()) or "no units dropped"


@dataclass(frozen=True)
class Dataset:
    units: tuple[AdminUnit, ...]
    families: Mapping[Family, FeatureTable]
    population: PopulationTable
    shares: ShareVector
    country_tag: str
    join_report: JoinReport | None = field(default=None, compare=False)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(u.id for u in self.units)

    @property
    def unit_index(self) -> dict[str, AdminUnit]:
        return {u.id: u for u in self.units}

    def groups(self, level: str = "group") -> dict[str, list[str]]:
        """Unit ids per group (``level='group'``) or per supergroup."""
        out: dict[str, list[str]] = {}
        for u in self.units:
            key = u.group_id if level == "group" else u.supergroup_id
            if key is None:
                raise DataError(f"unit {u.id!r} has no {level} id")
            out.setdefault(key, []).append(u.id)
        return dict(sorted(out.items()))

    def feature_names(self, family: Family) -> tuple[str, ...]:
        return self.families[Family.parse(family)].feature_names

    def matrix(self, family: Family, unit_ids: Sequence[str], columns: Sequence[str] | None = None) -> np.ndarray:
        return self.families[Family.parse(family)].take(unit_ids, columns)


def assemble_dataset(
    units: Iterable[AdminUnit],
    families: Mapping[Family, FeatureTable] | Iterable[FeatureTable],
    population: PopulationTable,
    country_tag: str,
) -> Dataset:
    """Restrict every source to the common unit ids and derive shares.

    Units are kept in sorted id order. The returned dataset carries a
    :class:`JoinReport` describing every dropped id.
    """
    units = list(units)
    if isinstance(families, Mapping):
        families = list(families.values())
    families = list(families)
    if not units or not families or len(population.unit_ids) == 0:
        raise DataError("assemble_dataset needs units, at least one family and population")
    for table in families:
        if not table.feature_names:
            raise DataError(f"family {table.family.value} has zero columns")
    sources = {"boundaries": {u.id for u in units}}
    for table in families:
        sources[table.family.value] = set(table.unit_ids)
    sources["population"] = set(population.unit_ids)
    common = set.intersection(*sources.values())
    if not common:
        raise DataError("no unit ids are shared by all inputs (empty intersection)")
    universe = set.union(*sources.values())
    missing = {name: tuple(sorted(universe - ids)) for name, ids in sources.items()}
    keep = tuple(sorted(common))
    by_id = {u.id: u for u in units}
    pop = population.restrict(keep)
    return Dataset(
        units=tuple(by_id[u] for u in keep),
        families={t.family: t.restrict(keep) for t in sorted(families, key=lambda t: t.family.ordinal)},
        population=pop,
        shares=compute_shares(pop),
        country_tag=country_tag,
        join_report=JoinReport(len(keep), missing),
    )


# --- loaders ---------------------------------------------------------------

def load_boundaries(path) -> list[tuple[AdminUnit, Geometry]]:
    """Read a GeoJSON FeatureCollection of administrative units."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read GeoJSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise DataError(f"{path}: not a GeoJSON FeatureCollection")
    features = doc.get("features") or []
    if not features:
        raise DataError(f"{path}: no features")
    out, seen = [], set()
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        for key in ("id", "name", "group_id"):
            if key not in props or props[key] in (None, ""):
                raise DataError(f"{path}: feature {k} missing required property {key!r}")
        uid = str(props["id"])
        if uid in seen:
            raise DataError(f"{path}: duplicate id {uid!r}")
        seen.add(uid)
        try:
            geom = geometry_from_geojson(feat.get("geometry"))
        except GeometryError as exc:
            raise DataError(f"{path}: feature {uid!r}: {exc}") from None
        sg = props.get("supergroup_id")
        unit = AdminUnit(
            id=uid,
            name=str(props["name"]),
            group_id=str(props["group_id"]),
            supergroup_id=None if sg in (None, "") else str(sg),
            area_km2=spherical_area_km2(geom),
            geometry_ref=uid,
        )
        out.append((unit, geom))
    return out


def geometry_set(boundaries: Iterable[tuple[AdminUnit, Geometry]]) -> GeometrySet:
    return GeometrySet({u.id: g for u, g in boundaries})


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    return [h.strip() for h in rows[0]], [r for r in rows[1:] if r]


def _parse_float(cell: str, path, line: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"{path}: line {line}, column {column!r}: non-numeric value {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}: line {line}, column {column!r}: non-finite value {cell!r}")
    return value


def load_feature_table(path, family: Family) -> FeatureTable:
    """Read a ``unit_id,<feature>...`` CSV."""
    header, rows = _read_csv(path)
    if not header or header[0] != "unit_id":
        raise DataError(f"{path}: first column must be 'unit_id'")
    names = header[1:]
    if not names:
        raise DataError(f"{path}: no feature columns")
    if len(set(names)) != len(names):
        raise DataError(f"{path}: duplicate feature names in header")
    ids, values, seen = [], [], set()
    for k, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {k} has {len(row)} cells, expected {len(header)}")
        uid = row[0]
        if uid in seen:
            raise DataError(f"{path}: duplicate unit_id {uid!r}")
        seen.add(uid)
        ids.append(uid)
        values.append([_parse_float(c, path, k, names[j]) for j, c in enumerate(row[1:])])
    return FeatureTable(family, names, ids, np.array(values, dtype=float).reshape(len(ids), len(names)))


def fmt(x: float) -> str:
    """17 significant digits: round-trips every float exactly."""
    return format(float(x), ".17g")


def write_feature_table(table: FeatureTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", *table.feature_names])
        for uid, row in zip(table.unit_ids, table.values):
            w.writerow([uid, *(fmt(v) for v in row)])


def load_population(path) -> PopulationTable:
    """Read a ``unit_id,population`` CSV."""
    header, rows = _read_csv(path)
    if header[:2] != ["unit_id", "population"]:
        raise DataError(f"{path}: expected header 'unit_id,population'")
    ids, counts, seen = [], [], set()
    for k, row in enumerate(rows, start=2):
        if len(row) < 2:
            raise DataError(f"{path}: line {k} is incomplete")
        uid = row[0]
        if uid in seen:
            raise DataError(f"{path}: duplicate unit_id {uid!r}")
        seen.add(uid)
        value = _parse_float(row[1], path, k, "population")
        if value < 0:
            raise DataError(f"{path}: line {k}: negative population {value} for {uid!r}")
        ids.append(uid)
        counts.append(value)
    table = PopulationTable(tuple(ids), np.array(counts))
    if not table.total > 0:
        raise DataError(f"{path}: total population is zero")
    return table


def write_population(table: PopulationTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "population"])
        for uid, c in zip(table.unit_ids, table.counts):
            w.writerow([uid, fmt(c)])
