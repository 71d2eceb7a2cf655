"""Record linkage of named, geocoded place records to administrative polygons.

Each record is matched independently: candidates are the polygon nearest to
its coordinates plus that polygon's direct neighbours, and the nearest one is
kept unless another candidate's Jaro-Winkler name similarity beats it by more
than a configurable margin.
"""

from __future__ import annotations

import csv
import enum
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from popbench.datamodel import AdminUnit, DataError, fmt
from popbench.errors import GeocodingError, LinkageError
from popbench.geometry import GeometrySet, Point, haversine_km, nearest_polygon, point_in_polygon

DEFAULT_SUFFIXES = (
    "municipio",
    "municipality",
    "district",
    "local government area",
    "lga",
    "county",
)


class Flag(str, enum.Enum):
    LOW_SIMILARITY = "LowSimilarity"
    OUTSIDE_POLYGON = "OutsidePolygon"


@dataclass(frozen=True)
class PlaceRecord:
    record_id: str
    raw_name: str
    coordinates: Point | None = None


@dataclass(frozen=True)
class MatchConfig:
    winkler_prefix_weight: float = 0.1
    winkler_max_prefix: int = 4
    similarity_margin: float = 0.10
    low_similarity_threshold: float = 0.85
    suffix_list: tuple[str, ...] = DEFAULT_SUFFIXES

    def __post_init__(self):
        # inf is accepted so the "always nearest" limit can be expressed
        if not (0 <= self.similarity_margin):
            raise DataError("similarity_margin must be >= 0")
        if not (0 < self.low_similarity_threshold <= 1):
            raise DataError("low_similarity_threshold must be in (0, 1]")
        if not (0 <= self.winkler_prefix_weight * self.winkler_max_prefix <= 1):
            raise DataError("prefix weight x max prefix must lie in [0, 1]")


@dataclass(frozen=True)
class MatchResult:
    record_id: str
    matched_unit: str
    name_similarity: float
    distance_km: float
    flags: frozenset[Flag] = field(default_factory=frozenset)


@dataclass(frozen=True)
class QaSummary:
    """Review counts. ``n_low_similarity`` and ``n_outside_polygon`` include
    records carrying both flags; ``n_both`` counts those separately."""

    n_low_similarity: int = 0
    n_outside_polygon: int = 0
    n_both: int = 0

    def __add__(self, other: "QaSummary") -> "QaSummary":
        return QaSummary(
            self.n_low_similarity + other.n_low_similarity,
            self.n_outside_polygon + other.n_outside_polygon,
            self.n_both + other.n_both,
        )

    @classmethod
    def of(cls, result: MatchResult) -> "QaSummary":
        low = Flag.LOW_SIMILARITY in result.flags
        out = Flag.OUTSIDE_POLYGON in result.flags
        return cls(int(low), int(out), int(low and out))


# --- names -----------------------------------------------------------------

_DELETE = re.compile(r"[.'’`]")
_NON_WORD = re.compile(r"[^a-z0-9\s]")


def _fold(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c)).encode("ascii", "ignore").decode()


def normalize_name(raw: str, suffix_list: Sequence[str] = DEFAULT_SUFFIXES) -> str:
    """Lowercase, ASCII-fold, strip punctuation and trailing admin suffixes.

    Abbreviation marks (periods, apostrophes) are deleted so that "L.G.A"
    collapses to "lga"; every other punctuation character becomes a space.
    Trailing suffixes are removed repeatedly, which keeps the function
    idempotent.
    """
    text = _fold(raw).lower()
    text = _DELETE.sub("", text)
    text = _NON_WORD.sub(" ", text)
    tokens = text.split()
    suffixes = [s.split() for s in (_NON_WORD.sub(" ", _DELETE.sub("", _fold(s).lower())) for s in suffix_list)]
    suffixes = sorted((s for s in suffixes if s), key=len, reverse=True)
    changed = True
    while changed and tokens:
        changed = False
        for suf in suffixes:
            if len(tokens) >= len(suf) and tokens[-len(suf):] == suf:
                del tokens[-len(suf):]
                changed = True
                break
    return " ".join(tokens)


def strip_region_tokens(name: str, region_names: Iterable[str]) -> str:
    """Remove whole-token occurrences of each (normalized) region name."""
    tokens = name.split()
    for region in region_names:
        rt = region.split()
        if not rt:
            continue
        out, i = [], 0
        while i < len(tokens):
            if tokens[i:i + len(rt)] == rt:
                i += len(rt)
            else:
                out.append(tokens[i])
                i += 1
        tokens = out
    return " ".join(tokens)


# --- string similarity -----------------------------------------------------

def jaro(a: str, b: str) -> float:
    if a == b:
        return 1.0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    window = max(max(la, lb) // 2 - 1, 0)
    a_hit = [False] * la
    b_hit = [False] * lb
    m = 0
    for i, ch in enumerate(a):
        lo, hi = max(0, i - window), min(lb, i + window + 1)
        for j in range(lo, hi):
            if not b_hit[j] and b[j] == ch:
                a_hit[i] = b_hit[j] = True
                m += 1
                break
    if m == 0:
        return 0.0
    b_matched = [b[j] for j in range(lb) if b_hit[j]]
    half_t = sum(1 for ca, cb in zip((a[i] for i in range(la) if a_hit[i]), b_matched) if ca != cb)
    t = half_t / 2.0
    return (m / la + m / lb + (m - t) / m) / 3.0


def jaro_winkler(a: str, b: str, cfg: MatchConfig = MatchConfig()) -> float:
    j = jaro(a, b)
    prefix = 0
    for ca, cb in zip(a[: cfg.winkler_max_prefix], b[: cfg.winkler_max_prefix]):
        if ca != cb:
            break
        prefix += 1
    return j + prefix * cfg.winkler_prefix_weight * (1.0 - j)


# --- geocoding -------------------------------------------------------------

class Geocoder(Protocol):
    def lookup(self, record_id: str) -> Point: ...


class FixtureGeocoder:
    """Resolves record ids from a ``record_id,lon,lat`` CSV loaded once."""

    def __init__(self, path):
        self.path = Path(path)
        self._table: dict[str, Point] = {}
        try:
            with self.path.open(newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or not {"record_id", "lon", "lat"} <= set(reader.fieldnames):
                    raise DataError(f"{self.path}: expected header 'record_id,lon,lat'")
                for row in reader:
                    try:
                        self._table[row["record_id"]] = Point(float(row["lon"]), float(row["lat"]))
                    except ValueError as exc:
                        raise DataError(f"{self.path}: bad coordinates for {row['record_id']!r}: {exc}") from None
        except OSError as exc:
            raise GeocodingError(f"cannot read geocoder fixture {self.path}: {exc}") from None

    def __contains__(self, record_id) -> bool:
        return record_id in self._table

    def lookup(self, record_id: str) -> Point:
        try:
            return self._table[record_id]
        except KeyError:
            raise GeocodingError(f"record {record_id!r} not found in {self.path}") from None


def geocode(record: PlaceRecord, client: Geocoder) -> Point:
    if record.coordinates is not None:
        return record.coordinates
    return client.lookup(record.record_id)


# --- matching --------------------------------------------------------------

def candidate_set(p: Point, geoms: GeometrySet) -> list[str]:
    """Nearest polygon followed by its one-hop neighbours in id order."""
    if not geoms.polygons:
        raise LinkageError("empty geometry set")
    nearest = nearest_polygon(p, geoms)
    return [nearest, *sorted(geoms.adjacency.get(nearest, ()) - {nearest})]


def match_record(
    record: PlaceRecord,
    geoms: GeometrySet,
    units: Mapping[str, AdminUnit] | Iterable[AdminUnit],
    cfg: MatchConfig = MatchConfig(),
    region_names: Sequence[str] = (),
) -> MatchResult:
    if record.coordinates is None:
        raise LinkageError(f"record {record.record_id!r} has no coordinates; geocode it first")
    if not isinstance(units, Mapping):
        units = {u.id: u for u in units}
    candidates = candidate_set(record.coordinates, geoms)
    if not candidates:
        raise LinkageError(f"no candidate polygons for record {record.record_id!r}")

    full = normalize_name(record.raw_name, cfg.suffix_list)
    regions = [normalize_name(r, cfg.suffix_list) for r in region_names]
    stripped = strip_region_tokens(full, regions)
    variants = {full, stripped}

    sims = []
    for uid in candidates:
        target = normalize_name(units[uid].name, cfg.suffix_list) if uid in units else ""
        sims.append(max(jaro_winkler(v, target, cfg) for v in variants))

    # first maximum in candidate order = nearest, then lexicographic
    best = max(range(len(candidates)), key=lambda k: (sims[k], -k))
    chosen = best if sims[best] - sims[0] > cfg.similarity_margin else 0
    unit = candidates[chosen]

    flags = set()
    if sims[chosen] < cfg.low_similarity_threshold:
        flags.add(Flag.LOW_SIMILARITY)
    if not point_in_polygon(record.coordinates, geoms.polygons[unit]):
        flags.add(Flag.OUTSIDE_POLYGON)
    return MatchResult(
        record_id=record.record_id,
        matched_unit=unit,
        name_similarity=sims[chosen],
        distance_km=haversine_km(record.coordinates, geoms.centroids[unit]),
        flags=frozenset(flags),
    )


def match_all(
    records: Sequence[PlaceRecord],
    geoms: GeometrySet,
    units,
    cfg: MatchConfig = MatchConfig(),
    geocoder: Geocoder | None = None,
    region_names: Mapping[str, Sequence[str]] | Sequence[str] = (),
    n_jobs: int = 1,
) -> tuple[list[MatchResult], QaSummary]:
    """Match every record; geocode those without coordinates first.

    ``region_names`` is either one list applied to all records or a mapping
    from record id to that record's own higher-level region names.
    """
    ids = [r.record_id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate record_id in batch")
    if not isinstance(units, Mapping):
        units = {u.id: u for u in units}
    resolved = []
    for r in records:
        if r.coordinates is None:
            if geocoder is None:
                raise GeocodingError(f"record {r.record_id!r} has no coordinates and no geocoder was given")
            r = replace(r, coordinates=geocode(r, geocoder))
        resolved.append(r)
    geoms.adjacency  # build once before fanning out

    def one(r: PlaceRecord) -> MatchResult:
        names = region_names.get(r.record_id, ()) if isinstance(region_names, Mapping) else region_names
        return match_record(r, geoms, units, cfg, names)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(one, resolved))
    else:
        results = [one(r) for r in resolved]
    qa = QaSummary()
    for res in results:
        qa = qa + QaSummary.of(res)
    return results, qa


REVIEW_COLUMNS = ("record_id", "matched_unit", "name_similarity", "distance_km", "flags")


def write_review_csv(results: Iterable[MatchResult], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REVIEW_COLUMNS)
        for r in results:
            flags = "|".join(sorted(f.value for f in r.flags))
            w.writerow([r.record_id, r.matched_unit, fmt(r.name_similarity), fmt(r.distance_km), flags])


def read_review_csv(path) -> list[MatchResult]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            MatchResult(
                row["record_id"],
                row["matched_unit"],
                float(row["name_similarity"]),
                float(row["distance_km"]),
                frozenset(Flag(f) for f in row["flags"].split("|") if f),
            )
            for row in csv.DictReader(fh)
        ]


def load_places(path) -> list[PlaceRecord]:
    """Read a ``record_id,name[,lon,lat]`` CSV of place records."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"record_id", "name"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns 'record_id,name'")
        for row in reader:
            lon, lat = row.get("lon"), row.get("lat")
            pt = Point(float(lon), float(lat)) if lon not in (None, "") and lat not in (None, "") else None
            out.append(PlaceRecord(row["record_id"], row["name"], pt))
    return out
