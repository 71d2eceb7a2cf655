"""Minimal lon/lat geometry: containment, distances, areas, centroids, adjacency.

All coordinates are WGS84 degrees. Planar operations (containment, centroid)
work directly on the lon/lat plane; areas and distances use a sphere of
radius :data:`EARTH_RADIUS_KM`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from popbench.errors import GeometryError

EARTH_RADIUS_KM = 6371.0088
ADJACENCY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Point:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise GeometryError(f"non-finite coordinates ({self.lon}, {self.lat})")
        if not (-180.0 <= self.lon <= 180.0) or not (-90.0 <= self.lat <= 90.0):
            raise GeometryError(f"coordinates out of range ({self.lon}, {self.lat})")


def _as_ring(coords) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] < 2:
        raise GeometryError("ring must be a sequence of [lon, lat] pairs")
    ring = ring[:, :2]
    if len(ring) < 4:
        raise GeometryError(f"ring has {len(ring)} points, need at least 4")
    if not np.all(np.isfinite(ring)):
        raise GeometryError("ring contains non-finite coordinates")
    if not np.array_equal(ring[0], ring[-1]):
        raise GeometryError("ring is not closed (first point != last point)")
    if np.any(np.abs(np.diff(ring[:, 0])) > 180.0):
        raise GeometryError("antimeridian-crossing rings are not supported")
    ring.setflags(write=False)
    return ring


def _ring_signed_area(ring: np.ndarray) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    return 0.5 * float(np.sum(x * y2 - x2 * y))


class Polygon:
    """Exterior ring plus optional holes, each a closed (k, 2) lon/lat array."""

    __slots__ = ("exterior", "holes", "_bbox")

    def __init__(self, exterior, holes: Iterable = ()):
        self.exterior = _as_ring(exterior)
        self.holes = tuple(_as_ring(h) for h in holes)
        self._bbox = (
            float(self.exterior[:, 0].min()),
            float(self.exterior[:, 1].min()),
            float(self.exterior[:, 0].max()),
            float(self.exterior[:, 1].max()),
        )

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return self._bbox

    @property
    def rings(self) -> tuple[np.ndarray, ...]:
        return (self.exterior, *self.holes)

    def planar_area(self) -> float:
        """Unsigned lon/lat-plane area of the exterior minus holes."""
        area = abs(_ring_signed_area(self.exterior))
        return area - sum(abs(_ring_signed_area(h)) for h in self.holes)

    def __repr__(self):
        return f"Polygon({len(self.exterior)} vertices, {len(self.holes)} holes)"


@dataclass(frozen=True)
class MultiPolygon:
    parts: tuple[Polygon, ...]

    def __post_init__(self):
        if not self.parts:
            raise GeometryError("MultiPolygon needs at least one part")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        boxes = np.array([p.bbox for p in self.parts])
        return (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())


Geometry = Union[Polygon, MultiPolygon]


def _parts(geom: Geometry) -> tuple[Polygon, ...]:
    return geom.parts if isinstance(geom, MultiPolygon) else (geom,)


def geometry_from_geojson(obj: Mapping) -> Geometry:
    """Build a Polygon or MultiPolygon from a GeoJSON geometry mapping."""
    try:
        kind = obj["type"]
        coords = obj["coordinates"]
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"unparseable geometry: {exc!r}") from None
    try:
        if kind == "Polygon":
            return Polygon(coords[0], coords[1:])
        if kind == "MultiPolygon":
            return MultiPolygon(tuple(Polygon(rings[0], rings[1:]) for rings in coords))
    except (IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, GeometryError):
            raise
        raise GeometryError(f"unparseable {kind} coordinates: {exc}") from None
    raise GeometryError(f"unsupported geometry type {kind!r}")


def geometry_to_geojson(geom: Geometry) -> dict:
    def rings(poly: Polygon):
        return [ring.tolist() for ring in poly.rings]

    if isinstance(geom, MultiPolygon):
        return {"type": "MultiPolygon", "coordinates": [rings(p) for p in geom.parts]}
    return {"type": "Polygon", "coordinates": rings(geom)}


# --- containment -----------------------------------------------------------

def _on_segment(px, py, x1, y1, x2, y2) -> np.ndarray:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    scale = np.maximum(np.abs(x2 - x1) + np.abs(y2 - y1), 1.0)
    within = (
        (px >= np.minimum(x1, x2)) & (px <= np.maximum(x1, x2))
        & (py >= np.minimum(y1, y2)) & (py <= np.maximum(y1, y2))
    )
    return within & (np.abs(cross) <= 1e-12 * scale)


def _ring_contains(ring: np.ndarray, px: float, py: float) -> tuple[bool, bool]:
    """Return (inside_by_parity, on_boundary) for one ring."""
    x1, y1 = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    if np.any(_on_segment(px, py, x1, y1, x2, y2)):
        return True, True
    crosses = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    hits = np.count_nonzero(crosses & (px < x_at))
    return bool(hits % 2), False


def point_in_polygon(p: Point, poly: Geometry) -> bool:
    """Ray-casting parity test; holes subtract, boundary points count as inside."""
    for part in _parts(poly):
        minx, miny, maxx, maxy = part.bbox
        if not (minx <= p.lon <= maxx and miny <= p.lat <= maxy):
            continue
        inside, _ = _ring_contains(part.exterior, p.lon, p.lat)
        if not inside:
            continue
        for hole in part.holes:
            in_hole, on_edge = _ring_contains(hole, p.lon, p.lat)
            if in_hole and not on_edge:
                inside = False
                break
        if inside:
            return True
    return False


# --- metrics ---------------------------------------------------------------

def haversine_km(a: Point, b: Point) -> float:
    """Great-circle distance between two points in kilometres."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _ring_spherical_excess(ring: np.ndarray) -> float:
    lon = np.radians(ring[:, 0])
    t = np.tan(np.radians(ring[:, 1]) / 2.0)
    dlon = lon[1:] - lon[:-1]
    t1, t2 = t[:-1], t[1:]
    # signed excess of the triangle (edge, pole) summed over edges
    excess = 2.0 * np.arctan2(np.tan(dlon / 2.0) * (t1 + t2), 1.0 + t1 * t2)
    return abs(float(np.sum(excess)))


def spherical_area_km2(poly: Geometry) -> float:
    """Spherical-excess area with geodesic edges; holes subtracted, parts summed."""
    total = 0.0
    for part in _parts(poly):
        if abs(_ring_signed_area(part.exterior)) == 0.0:
            continue
        area = _ring_spherical_excess(part.exterior)
        for hole in part.holes:
            if abs(_ring_signed_area(hole)) > 0.0:
                area -= _ring_spherical_excess(hole)
        total += max(area, 0.0) * EARTH_RADIUS_KM**2
    return total


def _ring_moments(ring: np.ndarray) -> tuple[float, float, float]:
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    cross = x * y2 - x2 * y
    a = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + x2) * cross)) / 6.0
    cy = float(np.sum((y + y2) * cross)) / 6.0
    if a < 0:
        a, cx, cy = -a, -cx, -cy
    return a, cx, cy


def centroid(poly: Geometry) -> Point:
    """Planar shoelace centroid of the exterior(s) minus holes."""
    area = mx = my = 0.0
    for part in _parts(poly):
        a, cx, cy = _ring_moments(part.exterior)
        area += a
        mx += cx
        my += cy
        for hole in part.holes:
            a, cx, cy = _ring_moments(hole)
            area -= a
            mx -= cx
            my -= cy
    if area <= 0.0:
        raise GeometryError("centroid of a zero-area polygon is undefined")
    return Point(mx / area, my / area)


# --- collections -----------------------------------------------------------

@dataclass
class GeometrySet:
    """Unit polygons keyed by unit id, with lazily built adjacency."""

    polygons: Mapping[str, Geometry]
    _adjacency: dict[str, frozenset[str]] | None = field(default=None, repr=False)
    _centroids: dict[str, Point] | None = field(default=None, repr=False)
    _areas: dict[str, float] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.polygons = dict(self.polygons)

    def __len__(self):
        return len(self.polygons)

    @property
    def adjacency(self) -> dict[str, frozenset[str]]:
        if self._adjacency is None:
            self._adjacency = build_adjacency(self)
        return self._adjacency

    @property
    def centroids(self) -> dict[str, Point]:
        if self._centroids is None:
            self._centroids = {uid: centroid(g) for uid, g in self.polygons.items()}
        return self._centroids

    @property
    def areas(self) -> dict[str, float]:
        if self._areas is None:
            self._areas = {uid: spherical_area_km2(g) for uid, g in self.polygons.items()}
        return self._areas


def nearest_polygon(p: Point, geoms: GeometrySet) -> str:
    """Containing polygon (smallest area on overlap), else nearest centroid.

    Centroid distance is an approximation of point-to-polygon distance; ties
    resolve to the lexicographically smallest unit id.
    """
    if not geoms.polygons:
        raise GeometryError("nearest_polygon on an empty geometry set")
    containing = [uid for uid, g in geoms.polygons.items() if point_in_polygon(p, g)]
    if containing:
        areas = geoms.areas
        return min(containing, key=lambda uid: (areas[uid], uid))
    return min(geoms.centroids.items(), key=lambda kv: (haversine_km(p, kv[1]), kv[0]))[0]


def build_adjacency(geoms: GeometrySet, tol: float = ADJACENCY_TOLERANCE) -> dict[str, frozenset[str]]:
    """Units are adjacent iff they share a vertex within ``tol`` on both axes."""
    ids = sorted(geoms.polygons)
    xs, ys, owner = [], [], []
    for k, uid in enumerate(ids):
        for part in _parts(geoms.polygons[uid]):
            for ring in part.rings:
                xs.append(ring[:-1, 0])
                ys.append(ring[:-1, 1])
                owner.append(np.full(len(ring) - 1, k))
    neighbours: dict[str, set[str]] = {uid: set() for uid in ids}
    if not xs:
        return {uid: frozenset() for uid in ids}
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    own = np.concatenate(owner)
    order = np.lexsort((y, x))
    x, y, own = x[order], y[order], own[order]
    pairs = []
    d = 1
    while d < len(x):
        close_x = x[d:] - x[:-d] <= tol
        if not close_x.any():
            break
        hit = close_x & (np.abs(y[d:] - y[:-d]) <= tol) & (own[d:] != own[:-d])
        idx = np.nonzero(hit)[0]
        pairs.append(np.stack([own[idx], own[idx + d]], axis=1))
        d += 1
    if pairs:
        for a, b in np.unique(np.concatenate(pairs), axis=0):
            neighbours[ids[a]].add(ids[b])
            neighbours[ids[b]].add(ids[a])
    return {uid: frozenset(v) for uid, v in neighbours.items()}
