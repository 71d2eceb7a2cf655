import math

import pytest
from hypothesis import given, strategies as st

from popbench.datamodel import AdminUnit
from popbench.errors import GeocodingError
from popbench.geometry import GeometrySet, Point, Polygon, point_in_polygon
from popbench.linkage import (
    Flag,
    FixtureGeocoder,
    MatchConfig,
    PlaceRecord,
    QaSummary,
    candidate_set,
    geocode,
    jaro,
    jaro_winkler,
    match_all,
    match_record,
    normalize_name,
    read_review_csv,
    strip_region_tokens,
    write_review_csv,
)

words = st.text(alphabet="abcdeilmnorst ", max_size=12)


def square(x0, y0, side=1.0):
    return Polygon([[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side], [x0, y0]])


def test_normalize_examples():
    assert normalize_name("São Paulo!") == "sao paulo"
    assert normalize_name("ILESHA EAST L.G.A", ["lga"]) == "ilesha east"
    assert normalize_name("") == ""
    assert normalize_name("Ikeja Local Government Area") == "ikeja"


@given(st.text(max_size=30))
def test_normalize_idempotent(s):
    once = normalize_name(s)
    assert normalize_name(once) == once


def test_jaro_examples():
    assert jaro("martha", "marhta") == pytest.approx(0.94444, abs=1e-5)
    assert jaro("abc", "abc") == 1.0
    assert jaro("abc", "xyz") == 0.0
    assert jaro_winkler("martha", "marhta") == pytest.approx(0.96111, abs=1e-5)
    assert jaro("dwayne", "duane") == pytest.approx(0.82222, abs=1e-5)
    assert jaro_winkler("dwayne", "duane") == pytest.approx(0.84000, abs=1e-5)
    assert jaro_winkler("same", "same") == 1.0


@given(words, words)
def test_similarity_properties(a, b):
    j, jw = jaro(a, b), jaro_winkler(a, b)
    assert 0.0 <= j <= jw <= 1.0
    assert j == pytest.approx(jaro(b, a), abs=1e-12)
    assert jw == pytest.approx(jaro_winkler(b, a), abs=1e-12)
    assert (j == 1.0) == (a == b)


def test_strip_region_tokens():
    assert strip_region_tokens("centro rio de janeiro", ["rio de janeiro"]) == "centro"
    assert strip_region_tokens("centro", ["rio de janeiro"]) == "centro"
    assert strip_region_tokens("rio de janeiro", ["rio de janeiro"]) == ""


def test_fixture_geocoder(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("record_id,lon,lat\nr1,7.49,9.05\n")
    g = FixtureGeocoder(p)
    assert geocode(PlaceRecord("r1", "x"), g) == Point(7.49, 9.05)
    with pytest.raises(GeocodingError):
        geocode(PlaceRecord("r2", "x"), g)

    class Exploding:
        def lookup(self, record_id):
            raise AssertionError("client consulted")

    assert geocode(PlaceRecord("r3", "x", Point(1, 2)), Exploding()) == Point(1, 2)


def chain():
    # A-B-D in a row, C above A; C and B touch A
    return GeometrySet({"A": square(0, 0), "B": square(1, 0), "C": square(0, 1), "D": square(2, 0),
                        "E": square(10, 10)})


def test_candidate_set_rules():
    g = chain()
    assert candidate_set(Point(0.5, 0.5), g) == ["A", "B", "C"]
    assert candidate_set(Point(10.5, 10.5), g) == ["E"]
    # D is two hops from A
    assert "D" not in candidate_set(Point(0.2, 0.2), g)


def units(**names):
    return {uid: AdminUnit(uid, name, "g", 1.0) for uid, name in names.items()}


def test_exact_name_inside_nearest():
    g = GeometrySet({"A": square(0, 0), "B": square(1, 0)})
    res = match_record(PlaceRecord("r", "Alpha", Point(0.5, 0.5)), g, units(A="Alpha", B="Beta"))
    assert (res.matched_unit, res.name_similarity, res.flags) == ("A", 1.0, frozenset())


def test_margin_switches_to_better_neighbour():
    g = GeometrySet({"A": square(0, 0), "B": square(1, 0)})
    u = units(A="Xylophone", B="Kentucky")
    rec = PlaceRecord("r", "Kentucky", Point(0.5, 0.5))
    res = match_record(rec, g, u, MatchConfig(similarity_margin=0.10))
    assert res.matched_unit == "B"
    assert res.flags == {Flag.OUTSIDE_POLYGON}
    assert match_record(rec, g, u, MatchConfig(similarity_margin=math.inf)).matched_unit == "A"


def test_low_similarity_flag():
    g = GeometrySet({"A": square(0, 0)})
    cfg = MatchConfig()
    res = match_record(PlaceRecord("r", "Kentukki West", Point(0.5, 0.5)), g, units(A="Kentucky"), cfg)
    assert 0.80 < res.name_similarity < cfg.low_similarity_threshold
    assert res.flags == {Flag.LOW_SIMILARITY}


def grid_fixture(n=5):
    g = GeometrySet({f"u{i}{j}": square(i, j) for i in range(n) for j in range(n)})
    names = ["ilorin", "ibadan", "oyo", "ogbomoso", "ife", "ilesha", "akure", "ondo", "owo", "ado",
             "ekiti", "osogbo", "iwo", "ede", "ikirun", "offa", "jebba", "ilobu", "ejigbo", "iseyin",
             "saki", "igboho", "kishi", "igbeti", "okeho"]
    return g, {uid: AdminUnit(uid, nm, "g", 1.0) for uid, nm in zip(sorted(g.polygons), names)}


@given(st.lists(st.tuples(st.floats(0.01, 4.99), st.floats(0.01, 4.99), st.integers(0, 24)),
                min_size=1, max_size=20))
def test_margin_limits_and_flag_invariants(pts):
    g, u = grid_fixture()
    names = [u[k].name for k in sorted(u)]
    for i, (x, y, k) in enumerate(pts):
        rec = PlaceRecord(f"r{i}", names[k], Point(x, y))
        cands = candidate_set(rec.coordinates, g)
        sims = [jaro_winkler(names[k], u[c].name) for c in cands]
        # delta = inf -> always the nearest candidate
        far = match_record(rec, g, u, MatchConfig(similarity_margin=math.inf))
        assert far.matched_unit == cands[0]
        # delta = 0 -> the best-scoring candidate, ties to the earliest
        best = match_record(rec, g, u, MatchConfig(similarity_margin=0.0))
        top = max(sims)
        assert best.matched_unit == (cands[0] if sims[0] == top else cands[sims.index(top)])
        for res in (far, best):
            assert (Flag.LOW_SIMILARITY in res.flags) == (res.name_similarity < 0.85)
            inside = point_in_polygon(rec.coordinates, g.polygons[res.matched_unit])
            assert (Flag.OUTSIDE_POLYGON in res.flags) == (not inside)


def test_batch_with_planted_errors(tmp_path):
    g, u = grid_fixture()
    ids = sorted(u)
    records = [PlaceRecord(f"r{k}", u[uid].name, Point(g.centroids[uid].lon, g.centroids[uid].lat))
               for k, uid in enumerate(ids)]
    results, qa = match_all(records, g, u)
    assert qa == QaSummary(0, 0, 0)
    assert [r.matched_unit for r in results] == ids

    records[3] = PlaceRecord("r3", "zzqx", records[3].coordinates)    # misspelt beyond threshold
    records[7] = PlaceRecord("r7", records[7].raw_name, Point(9, 9))  # far outside every polygon
    results, qa = match_all(records, g, u, n_jobs=4)
    assert qa.n_low_similarity == 1 + (Flag.LOW_SIMILARITY in results[7].flags)
    assert qa.n_outside_polygon == 1
    assert qa.n_both == sum(len(r.flags) == 2 for r in results)

    write_review_csv(results, tmp_path / "review.csv")
    assert read_review_csv(tmp_path / "review.csv") == results


def test_qa_summary_is_additive():
    a, b, c = QaSummary(1, 0, 0), QaSummary(0, 2, 1), QaSummary(3, 3, 0)
    assert (a + b) + c == a + (b + c) == QaSummary(4, 5, 1)
