import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from popbench.errors import GeometryError
from popbench.geometry import (
    EARTH_RADIUS_KM,
    GeometrySet,
    MultiPolygon,
    Point,
    Polygon,
    centroid,
    geometry_from_geojson,
    geometry_to_geojson,
    haversine_km,
    nearest_polygon,
    point_in_polygon,
    spherical_area_km2,
)


def square(x0, y0, side=1.0, holes=()):
    return Polygon([[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side], [x0, y0]], holes)


def area_oracle(lon0, lat0, lon1, lat1, R=EARTH_RADIUS_KM):
    # exact area of a lon/lat rectangle on the sphere
    return R * R * math.radians(lon1 - lon0) * (math.sin(math.radians(lat1)) - math.sin(math.radians(lat0)))


def test_point_in_unit_square():
    sq = square(0, 0)
    assert point_in_polygon(Point(0.5, 0.5), sq)
    assert not point_in_polygon(Point(2, 2), sq)


def test_hole_excludes_point():
    hole = [[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75], [0.25, 0.25]]
    sq = square(0, 0, holes=[hole])
    assert not point_in_polygon(Point(0.5, 0.5), sq)
    assert point_in_polygon(Point(0.1, 0.1), sq)


def test_boundary_counts_as_inside():
    assert point_in_polygon(Point(1.0, 0.5), square(0, 0))
    assert point_in_polygon(Point(0.0, 0.0), square(0, 0))


def test_multipolygon_membership():
    mp = MultiPolygon((square(0, 0), square(5, 5)))
    assert point_in_polygon(Point(5.5, 5.5), mp)
    assert not point_in_polygon(Point(3, 3), mp)


def test_haversine_examples():
    assert haversine_km(Point(0, 0), Point(0, 0)) == 0.0
    assert haversine_km(Point(0, 0), Point(1, 0)) == pytest.approx(math.pi / 180 * EARTH_RADIUS_KM, abs=1e-9)
    assert haversine_km(Point(0, 0), Point(1, 0)) == pytest.approx(111.195, abs=1e-3)
    assert haversine_km(Point(0, 90), Point(0, -90)) == pytest.approx(math.pi * EARTH_RADIUS_KM, rel=1e-12)


@given(st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180), st.floats(-90, 90))
def test_haversine_symmetric_and_bounded(a, b, c, d):
    p, q = Point(a, b), Point(c, d)
    h = haversine_km(p, q)
    assert h == pytest.approx(haversine_km(q, p), abs=1e-9)
    assert 0 <= h <= math.pi * EARTH_RADIUS_KM + 1e-6


def test_centroid_examples():
    c = centroid(square(0, 0))
    assert (c.lon, c.lat) == pytest.approx((0.5, 0.5))
    c = centroid(square(10, 10))
    assert (c.lon, c.lat) == pytest.approx((10.5, 10.5))
    ell = Polygon([[0, 0], [2, 0], [2, 1], [1, 1], [0, 1], [0, 0]])
    c = centroid(ell)
    assert (c.lon, c.lat) == pytest.approx((1.0, 0.5))


def test_centroid_with_hole_is_area_weighted():
    # hole in the right half pulls the centroid left
    hole = [[1.25, 0.25], [1.75, 0.25], [1.75, 0.75], [1.25, 0.75], [1.25, 0.25]]
    poly = Polygon([[0, 0], [2, 0], [2, 1], [0, 1], [0, 0]], [hole])
    expected_x = (2 * 1.0 - 0.25 * 1.5) / (2 - 0.25)
    c = centroid(poly)
    assert c.lon == pytest.approx(expected_x)
    assert c.lat == pytest.approx(0.5)


def _unit(lon, lat):
    lo, la = math.radians(lon), math.radians(lat)
    return np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)])


def great_circle_area_oracle(ring, R=EARTH_RADIUS_KM):
    # triangle fan from vertex 0, each solid angle by Van Oosterom-Strackee
    v = [_unit(*pt) for pt in ring[:-1]]
    total = 0.0
    for b, c in zip(v[1:-1], v[2:]):
        a = v[0]
        num = float(np.dot(a, np.cross(b, c)))
        den = 1 + float(np.dot(a, b) + np.dot(b, c) + np.dot(c, a))
        total += 2 * math.atan2(num, den)
    return abs(total) * R * R


def test_spherical_area_equatorial_quad():
    a = spherical_area_km2(square(0, 0))
    assert a == pytest.approx(12363.4, rel=0.005)
    assert a == pytest.approx(great_circle_area_oracle(square(0, 0).exterior), rel=1e-9)


def test_spherical_area_lat60_is_about_half():
    ratio = spherical_area_km2(square(0, 60)) / spherical_area_km2(square(0, 0))
    assert ratio == pytest.approx(0.5, rel=0.02)


def test_degenerate_ring_has_zero_area():
    line = Polygon([[0, 0], [1, 1], [2, 2], [0, 0]])
    assert spherical_area_km2(line) == 0.0


@given(st.floats(-179, 178), st.floats(-80, 79), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_spherical_area_matches_rectangle_oracle(lon, lat, w, h):
    poly = Polygon([[lon, lat], [lon + w, lat], [lon + w, lat + h], [lon, lat + h], [lon, lat]])
    a = spherical_area_km2(poly)
    assert a == pytest.approx(great_circle_area_oracle(poly.exterior), rel=1e-7)
    # edges are great circles, not parallels; the gap is tiny for cells this small
    assert a == pytest.approx(area_oracle(lon, lat, lon + w, lat + h), rel=2e-3)


def test_area_independent_of_orientation():
    cw = Polygon([[0, 0], [0, 1], [1, 1], [1, 0], [0, 0]])
    assert spherical_area_km2(cw) == pytest.approx(spherical_area_km2(square(0, 0)), rel=1e-12)


def test_nearest_polygon_rules():
    geoms = GeometrySet({"A": square(0, 0), "B": square(2, 0)})
    assert nearest_polygon(Point(0.5, 0.5), geoms) == "A"
    # equidistant from both centroids, inside neither
    assert nearest_polygon(Point(1.5, 0.5), geoms) == "A"
    overlap = GeometrySet({"big": square(0, 0, 4), "small": square(1, 1)})
    assert nearest_polygon(Point(1.5, 1.5), overlap) == "small"


def test_adjacency_rules():
    geoms = GeometrySet({
        "A": square(0, 0), "B": square(1, 0),  # shared edge
        "C": square(2, 1),                     # corner touch with B
        "D": square(5, 5),                     # isolated
    })
    adj = geoms.adjacency
    assert adj["A"] == {"B"}
    assert adj["B"] == {"A", "C"}
    assert adj["C"] == {"B"}
    assert adj["D"] == frozenset()


@given(st.integers(2, 6), st.integers(2, 6))
def test_grid_adjacency_is_symmetric_queen_rule(nx, ny):
    geoms = GeometrySet({f"{i}_{j}": square(i * 0.1, j * 0.1, 0.1) for i in range(nx) for j in range(ny)})
    adj = geoms.adjacency
    for a, nbrs in adj.items():
        i, j = map(int, a.split("_"))
        expected = {f"{i + di}_{j + dj}" for di in (-1, 0, 1) for dj in (-1, 0, 1)
                    if (di or dj) and 0 <= i + di < nx and 0 <= j + dj < ny}
        assert nbrs == expected
        for b in nbrs:
            assert a in adj[b]


def test_geojson_round_trip():
    obj = {"type": "MultiPolygon", "coordinates": [
        [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]],
        [[[3, 3], [4, 3], [4, 4], [3, 4], [3, 3]], [[3.2, 3.2], [3.4, 3.2], [3.4, 3.4], [3.2, 3.2]]],
    ]}
    geom = geometry_from_geojson(obj)
    assert isinstance(geom, MultiPolygon) and len(geom.parts[1].holes) == 1
    again = geometry_from_geojson(geometry_to_geojson(geom))
    for a, b in zip(geom.parts, again.parts):
        np.testing.assert_array_equal(a.exterior, b.exterior)


@pytest.mark.parametrize("ring", [
    [[0, 0], [1, 0], [1, 1], [0, 1]],           # not closed
    [[0, 0], [1, 0], [0, 0]],                   # too short
    [[170, 0], [-170, 0], [-170, 1], [170, 0]],  # antimeridian
])
def test_invalid_rings(ring):
    with pytest.raises(GeometryError):
        Polygon(ring)


def test_point_range_checked():
    with pytest.raises(GeometryError):
        Point(200, 0)
    with pytest.raises(GeometryError):
        Point(0, float("nan"))
