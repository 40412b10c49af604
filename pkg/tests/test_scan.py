"""Scan engine tests: laziness, short-circuit, cross-engine agreement."""

import random

import pytest

from edsp import ecf, prep, scanapi, table
from edsp.errors import QueryTypeError, UnknownColumnError
from edsp.predicates import and_, eq, ge, gt, is_not_null, is_null, le, lt, ne, or_
from edsp.sqlexec import EngineSession


@pytest.fixture
def poi(tmp_path, mem_store):
    csv = tmp_path / "poi.csv"
    prep.generate_poi(prep.PoiGenSpec(rows=1200, seed=31), str(csv))
    prep.ingest(
        mem_store,
        prep.IngestSpec(source=str(csv), target="tables/poi", rows_per_file=400),
    )
    session = EngineSession(mem_store)
    session.register("poi", "tables/poi")
    return mem_store, session, str(csv)


def test_scan_limit_short_circuits(poi):
    store, _, _ = poi
    stream = scanapi.scan(store, "tables/poi", limit=1)
    rows = list(stream)
    assert len(rows) == 1
    # Short-circuit: at most the first file was decoded.
    assert stream.counters.rows_scanned <= 400


def test_scan_columns_and_order(poi):
    store, session, _ = poi
    stream = scanapi.scan(store, "tables/poi", columns=["id", "name"])
    rows = list(stream)
    assert stream.columns == ["id", "name"]
    expect = session.sql("SELECT id, name FROM poi").rows
    assert rows == expect


def test_scan_q2_count_matches_sql_engine(poi):
    store, session, _ = poi
    rows = list(scanapi.scan(store, "tables/poi", predicate=eq("prefecture", "P31")))
    sql_rows = session.sql("SELECT * FROM poi WHERE prefecture = 'P31'").rows
    assert len(rows) == len(sql_rows) == round(1200 * 0.021)
    assert rows == sql_rows


def test_scan_time_travel_replays_history(poi, tmp_path):
    store, session, _ = poi
    more = tmp_path / "more.csv"
    prep.generate_poi(prep.PoiGenSpec(rows=300, seed=32), str(more))
    prep.ingest(store, prep.IngestSpec(source=str(more), target="tables/poi", mode="APPEND"))

    meta, _ = table.load_table(store, "tables/poi")
    first = min(meta.snapshots, key=lambda s: s.sequence)
    historical = list(scanapi.scan(store, "tables/poi", snapshot_id=first.snapshot_id))
    assert len(historical) == 1200
    current = list(scanapi.scan(store, "tables/poi"))
    assert len(current) == 1500


def test_scan_unknown_column(poi):
    store, _, _ = poi
    with pytest.raises(UnknownColumnError):
        scanapi.scan(store, "tables/poi", columns=["nope"])
    with pytest.raises(UnknownColumnError):
        scanapi.scan(store, "tables/poi", predicate=eq("nope", 1))


def test_aggregate_count_star_empty_table(mem_store):
    schema = ecf.Schema((ecf.Field("x", "INT64"),))
    table.create_table(mem_store, "t", schema)
    labels, rows, _ = scanapi.aggregate(mem_store, "t", aggregates=[("count", None)])
    assert labels == ["count(*)"]
    assert rows == [(0,)]


def test_aggregate_category_matches_sql_engine(poi):
    store, session, _ = poi
    labels, rows, _ = scanapi.aggregate(
        store,
        "tables/poi",
        group_by=["category"],
        aggregates=[("count", None), ("avg", "rating")],
    )
    sql = session.sql("SELECT category, COUNT(*), AVG(rating) FROM poi GROUP BY category")
    assert labels == sql.columns
    assert len(rows) == len(sql.rows) == 100
    for (cat_a, n_a, avg_a), (cat_b, n_b, avg_b) in zip(rows, sql.rows):
        assert cat_a == cat_b and n_a == n_b
        if avg_a is None:
            assert avg_b is None
        else:
            assert abs(avg_a - avg_b) <= 1e-9 * max(abs(avg_a), abs(avg_b))


def test_aggregate_minmax_string_matches_manifest_stats(poi):
    store, _, _ = poi
    _, rows, _ = scanapi.aggregate(
        store,
        "tables/poi",
        aggregates=[("min", "prefecture"), ("max", "prefecture")],
    )
    meta, snap = table.load_table(store, "tables/poi")
    manifest = table.read_manifest(store, snap)
    # Oracle: manifest stats vs full scan, no predicate.
    assert rows[0][0] == min(e.stats["prefecture"].min for e in manifest)
    assert rows[0][1] == max(e.stats["prefecture"].max for e in manifest)


def test_aggregate_type_validation(poi):
    store, _, _ = poi
    with pytest.raises(QueryTypeError):
        scanapi.aggregate(store, "tables/poi", aggregates=[("sum", "prefecture")])
    with pytest.raises(ValueError):
        scanapi.aggregate(store, "tables/poi", aggregates=[("median", "rating")])


def test_scan_lazy_bounded_consumption(poi):
    """Laziness: pulling a few rows must not decode later files."""
    store, _, _ = poi
    stream = scanapi.scan(store, "tables/poi")
    it = iter(stream)
    for _ in range(10):
        next(it)
    assert stream.counters.rows_scanned <= 400  # only the first file so far


def test_engine_equivalence_on_generated_queries(poi):
    """The central Read-Anywhere oracle at unit scale: engines A and B
    agree on every query in a generated family."""
    store, session, _ = poi
    rng = random.Random(7)
    columns = ["id", "name", "prefecture", "category", "lat", "lon", "rating", "created_ms"]

    preds = [
        None,
        eq("prefecture", "P31"),
        ne("category", "C050"),
        and_(ge("rating", 1.0), lt("rating", 4.5)),
        or_(eq("prefecture", "P01"), eq("prefecture", "P47")),
        is_null("rating"),
        is_not_null("rating"),
        and_(gt("id", 100), le("id", 900)),
        or_(and_(ge("lat", 30.0), lt("lat", 40.0)), eq("category", "C001")),
    ]

    def pred_to_sql(p):
        from edsp.predicates import And, Comparison, NullCheck, Or

        if p is None:
            return None
        if isinstance(p, Comparison):
            v = p.value
            if isinstance(v, str):
                lit = "'" + v.replace("'", "''") + "'"
            elif isinstance(v, bool):
                lit = "TRUE" if v else "FALSE"
            else:
                lit = repr(v)
            return f"{p.column} {p.op} {lit}"
        if isinstance(p, NullCheck):
            return f"{p.column} IS {'NOT ' if p.negate else ''}NULL"
        joiner = " AND " if isinstance(p, And) else " OR "
        return "(" + joiner.join(pred_to_sql(x) for x in p.parts) + ")"

    for pred in preds:
        cols = rng.sample(columns, k=rng.randrange(1, 4))
        limit = rng.choice([None, 5, 50])
        sql = f"SELECT {', '.join(cols)} FROM poi"
        if pred is not None:
            sql += f" WHERE {pred_to_sql(pred)}"
        if limit is not None:
            sql += f" LIMIT {limit}"
        a = session.sql(sql)
        b = list(
            scanapi.scan(store, "tables/poi", columns=cols, predicate=pred, limit=limit)
        )
        assert a.rows == b, sql
