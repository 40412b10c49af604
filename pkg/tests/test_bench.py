"""Harness tests: canonicalization, matrix incl. fault injection, cold runs,
write-once audit, report artifacts."""

import csv
import json

import pytest

from edsp import bench, prep, report
from edsp.bench import (
    EngineAdapter,
    RunOutcome,
    builtin_engines,
    canonical_digest,
    canonicalize,
    consistency_matrix,
    percentile,
    rows_equal,
    run_bench,
    verify_write_once,
)
from edsp.store import LocalStore


@pytest.fixture
def poi_store(tmp_path):
    root = tmp_path / "store"
    root.mkdir()
    store = LocalStore(root)
    csv_path = tmp_path / "poi.csv"
    prep.generate_poi(prep.PoiGenSpec(rows=3000, seed=51), str(csv_path))
    prep.ingest(
        store,
        prep.IngestSpec(source=str(csv_path), target="tables/poi", rows_per_file=500),
    )
    return store


def test_canonicalize_sorts_with_nulls_last():
    rows = [(None, 1), ("b", 2), ("a", None), ("a", 3)]
    assert canonicalize(rows) == [("a", 3), ("a", None), ("b", 2), (None, 1)]


def test_rows_equal_tolerance():
    assert rows_equal([(1.0,)], [(1.0 + 1e-12,)]) is None
    assert rows_equal([(1.0,)], [(1.001,)]) is not None
    assert rows_equal([(1,)], [(1, 2)]) is not None
    assert rows_equal([(None,)], [(0,)]) is not None
    assert rows_equal([(True,)], [(1,)]) is not None  # type-tagged comparison


def test_digest_stable_under_row_order():
    a = canonical_digest(["x"], [(1,), (2,), (3,)])
    b = canonical_digest(["x"], [(3,), (1,), (2,)])
    assert a == b
    c = canonical_digest(["x"], [(1,), (2,), (4,)])
    assert a != c


def test_percentile_interpolation():
    values = [10.0, 20.0, 30.0, 40.0]
    assert percentile(values, 50) == 25.0
    assert percentile(values, 95) == pytest.approx(38.5)
    assert percentile([7.0], 50) == percentile([7.0], 95) == 7.0
    for q in (0, 25, 50, 75, 95, 100):
        assert percentile(values, q) <= percentile(values, min(100, q + 5))


def test_matrix_engines_agree(poi_store):
    matrix = consistency_matrix(poi_store, "tables/poi")
    assert matrix.all_pass
    assert matrix.reference == "sql"
    assert set(matrix.cells) == {"sql", "scan"}
    assert set(matrix.cells["scan"]) == {"q1", "q2", "q3"}


class NullDroppingEngine(EngineAdapter):
    """Fault injection: silently drops rows carrying any null."""

    name = "broken"

    def run(self, store_root, location, pattern, params, prune=True):
        inner = bench.ScanEngine().run(store_root, location, pattern, params, prune)
        rows = [r for r in inner.rows if all(v is not None for v in r)]
        return RunOutcome(
            columns=inner.columns,
            rows=rows,
            digest=canonical_digest(inner.columns, rows),
            counters=inner.counters,
            wall_time_ms=inner.wall_time_ms,
        )


def test_matrix_flags_null_dropping_engine(poi_store):
    engines = builtin_engines()
    engines["broken"] = NullDroppingEngine()
    matrix = consistency_matrix(poi_store, "tables/poi", engines=engines)
    assert not matrix.all_pass
    # q1 selects * including nullable rating: the drop shows up there.
    assert not matrix.cells["broken"]["q1"]["pass"]
    assert matrix.cells["scan"]["q1"]["pass"]  # honest engine unaffected


def test_single_engine_matrix_passes(poi_store):
    matrix = consistency_matrix(poi_store, "tables/poi", engines={"sql": bench.SqlEngine()})
    assert matrix.all_pass


def test_run_bench_warm_shape(poi_store):
    rep = run_bench(poi_store, "tables/poi", runs=2, cold=False, table_name="poi")
    d = rep.to_json_dict()
    assert d["runs"] == 2 and d["cold"] is False
    assert d["table"]["row-count"] == 3000
    for engine in ("sql", "scan"):
        for q in ("q1", "q2", "q3"):
            cell = d["cells"][engine][q]
            assert cell["runs"] == 2 and cell["errors"] == []
            assert cell["p50_ms"] <= cell["p95_ms"]


def test_run_bench_single_run_p50_equals_p95(poi_store):
    rep = run_bench(poi_store, "tables/poi", queries=["q2"], runs=1, cold=False)
    for engine in rep.engines:
        cell = rep.cells[engine]["q2"]
        assert cell["p50_ms"] == cell["p95_ms"]


def test_run_bench_cold_subprocesses(poi_store):
    rep = run_bench(poi_store, "tables/poi", queries=["q2"], runs=2, cold=True)
    for engine in ("sql", "scan"):
        cell = rep.cells[engine]["q2"]
        assert cell["runs"] == 2 and cell["errors"] == []
        assert cell["p50_ms"] > 0


def test_bench_q2_reads_less_than_q1_on_sql_engine(poi_store):
    """Counter comparison: pruning makes Q2 cheaper than the full Q1 scan."""
    rep = run_bench(poi_store, "tables/poi", runs=1, cold=False)
    sql_cells = rep.cells["sql"]
    assert (
        sql_cells["q2"]["counters"]["data_bytes_read"]
        < sql_cells["q1"]["counters"]["data_bytes_read"]
    )
    assert sql_cells["q2"]["counters"]["files_pruned"] > 0


def test_refuses_to_time_inconsistent_engines(poi_store):
    engines = builtin_engines()
    engines["broken"] = NullDroppingEngine()
    with pytest.raises(RuntimeError, match="consistency"):
        run_bench(poi_store, "tables/poi", engines=engines, runs=1, cold=False)


def test_verify_write_once(tmp_path):
    root = tmp_path / "store"
    root.mkdir()
    store = LocalStore(root)
    csvs = []
    for i, n in enumerate([600, 200, 200, 200, 200]):
        p = tmp_path / f"u{i}.csv"
        prep.generate_poi(prep.PoiGenSpec(rows=n, seed=60 + i), str(p))
        csvs.append(str(p))
    scratch = {}
    for engine in ("sql", "scan"):
        d = tmp_path / f"scratch-{engine}"
        d.mkdir()
        scratch[engine] = str(d)

    rep = verify_write_once(
        store,
        "poi",
        "tables/poi",
        csvs,
        queries_per_engine=6,
        scratch_dirs=scratch,
        rows_per_file=300,
    )
    assert rep.ok, rep.violations
    assert [c["snapshot-sequence"] for c in rep.commits] == [1, 2, 3, 4, 5]
    assert [c["metadata-version"] for c in rep.commits] == [2, 3, 4, 5, 6]
    assert rep.replica["roots-per-dataset"] == {"poi": ["tables/poi"]}
    assert rep.replica["scratch-deltas"] == {"sql": 0, "scan": 0}
    assert rep.store_delta_bytes == 0
    assert rep.query_runs == 12


def test_verify_write_once_flags_stray_copy(tmp_path):
    root = tmp_path / "store"
    root.mkdir()
    store = LocalStore(root)
    p = tmp_path / "u.csv"
    prep.generate_poi(prep.PoiGenSpec(rows=300, seed=71), str(p))

    class CopyingEngine(EngineAdapter):
        """Fault injection: materializes a replica under a second root."""

        name = "copier"

        def run(self, store_root, location, pattern, params, prune=True):
            for key in store.list(location + "/"):
                store.put("replica/" + key, store.get(key))
            return bench.ScanEngine().run(store_root, location, pattern, params, prune)

    rep = verify_write_once(
        store,
        "poi",
        "tables/poi",
        [str(p)],
        engines={"copier": CopyingEngine()},
        queries_per_engine=1,
    )
    assert not rep.ok
    assert any("roots" in v or "store changed" in v for v in rep.violations)


def test_report_files(tmp_path, poi_store):
    rep = run_bench(poi_store, "tables/poi", runs=2, cold=False, table_name="poi")
    paths = report.write_report_files(rep.to_json_dict(), tmp_path / "out" / "bench.json")
    assert paths["json"].exists() and paths["csv"].exists() and paths["png"].exists()

    parsed = json.loads(paths["json"].read_text())
    assert parsed["table"]["name"] == "poi"

    with open(paths["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "configuration",
        "q1_p50_ms", "q1_p95_ms", "q2_p50_ms", "q2_p95_ms", "q3_p50_ms", "q3_p95_ms",
    ]
    assert len(rows) == 3  # header + one row per engine
    assert rows[1][0].startswith("sql ->")
    assert paths["png"].stat().st_size > 1000
