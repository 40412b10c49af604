"""End-to-end CLI tests: dispatch, exit codes, stream separation."""

import json
import subprocess
import sys

import pytest

from edsp.cli import main


@pytest.fixture
def store_env(tmp_path, monkeypatch):
    store = tmp_path / "store"
    monkeypatch.setenv("EDSP_STORE", str(store))
    assert main(["init"]) == 0
    return tmp_path, store


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def poi_table(store_env, capsys):
    tmp_path, store = store_env
    csv_path = tmp_path / "poi.csv"
    code, _, _ = run_cli(capsys, ["gen-poi", "--rows", "1000", "--seed", "7", "--out", str(csv_path)])
    assert code == 0
    code, _, _ = run_cli(
        capsys,
        ["ingest", "--csv", str(csv_path), "--table", "tables/poi", "--rows-per-file", "250"],
    )
    assert code == 0
    return tmp_path, store


def test_unknown_subcommand_exits_2(capsys):
    code, _, _ = run_cli(capsys, ["frobnicate"])
    assert code == 2


def test_missing_store_is_user_error(capsys, monkeypatch):
    monkeypatch.delenv("EDSP_STORE", raising=False)
    code, _, err = run_cli(capsys, ["snapshots", "--table-root", "t"])
    assert code == 2
    assert "store" in err.lower()


def test_snapshots_lists_ascending(poi_table, capsys):
    tmp_path, _ = poi_table
    csv_path = tmp_path / "more.csv"
    run_cli(capsys, ["gen-poi", "--rows", "100", "--seed", "8", "--out", str(csv_path)])
    for _ in range(2):
        code, _, _ = run_cli(
            capsys,
            ["ingest", "--csv", str(csv_path), "--table", "tables/poi", "--mode", "append"],
        )
        assert code == 0
    code, out, err = run_cli(capsys, ["snapshots", "--table-root", "tables/poi"])
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 3
    seqs = [int(line.split("\t")[0]) for line in lines]
    assert seqs == [1, 2, 3]
    assert "metadata version 4" in err


def test_query_json_round_trips(poi_table, capsys):
    code, out, err = run_cli(
        capsys,
        [
            "--format", "json",
            "query",
            "--table-root", "tables/poi",
            "--sql", "SELECT prefecture, COUNT(*) FROM poi GROUP BY prefecture LIMIT 5",
        ],
    )
    assert code == 0
    # Oracle: the data stream alone re-parses as JSON.
    payload = json.loads(out)
    assert payload["columns"] == ["prefecture", "count(*)"]
    assert len(payload["rows"]) == 5
    assert "counters:" in err and "counters" not in out


def test_query_csv_output(poi_table, capsys):
    code, out, _ = run_cli(
        capsys,
        ["query", "--table-root", "tables/poi", "--sql", "SELECT id FROM poi LIMIT 3"],
    )
    assert code == 0
    assert out.splitlines() == ["id", "1", "2", "3"]


def test_query_user_errors_exit_2(poi_table, capsys):
    code, _, err = run_cli(
        capsys, ["query", "--table-root", "tables/poi", "--sql", "SELECT FROM poi"]
    )
    assert code == 2 and "error" in err
    code, _, _ = run_cli(
        capsys, ["query", "--table-root", "tables/poi", "--sql", "SELECT nope FROM poi"]
    )
    assert code == 2
    code, _, _ = run_cli(capsys, ["query", "--sql", "SELECT * FROM unregistered"])
    assert code == 2


def test_scan_mirrors_query(poi_table, capsys):
    code, scan_out, _ = run_cli(
        capsys,
        [
            "--format", "json",
            "scan",
            "--table-root", "tables/poi",
            "--columns", "id,prefecture",
            "--where", "prefecture = 'P31'",
        ],
    )
    assert code == 0
    code, query_out, _ = run_cli(
        capsys,
        [
            "--format", "json",
            "query",
            "--table-root", "tables/poi",
            "--sql", "SELECT id, prefecture FROM poi WHERE prefecture = 'P31'",
        ],
    )
    assert code == 0
    assert json.loads(scan_out) == json.loads(query_out)
    assert len(json.loads(scan_out)["rows"]) == 21


def test_alter_and_query_new_column(poi_table, capsys):
    code, _, _ = run_cli(capsys, ["alter", "--table-root", "tables/poi", "--add-column", "note:STRING"])
    assert code == 0
    code, out, _ = run_cli(
        capsys,
        [
            "--format", "json",
            "query", "--table-root", "tables/poi",
            "--sql", "SELECT COUNT(*) FROM poi WHERE note IS NULL",
        ],
    )
    assert code == 0
    assert json.loads(out)["rows"] == [[1000]]


def test_time_travel_flags(poi_table, capsys):
    tmp_path, _ = poi_table
    csv_path = tmp_path / "more.csv"
    run_cli(capsys, ["gen-poi", "--rows", "500", "--seed", "9", "--out", str(csv_path)])
    run_cli(capsys, ["ingest", "--csv", str(csv_path), "--table", "tables/poi", "--mode", "append"])
    code, out, _ = run_cli(capsys, ["--format", "json", "snapshots", "--table-root", "tables/poi"])
    snaps = json.loads(out)
    first = snaps[0]["snapshot-id"]
    code, out, _ = run_cli(
        capsys,
        [
            "--format", "json",
            "query", "--table-root", "tables/poi",
            "--sql", "SELECT COUNT(*) FROM poi",
            "--as-of", str(first),
        ],
    )
    assert json.loads(out)["rows"] == [[1000]]
    code, out, _ = run_cli(
        capsys,
        [
            "--format", "json",
            "query", "--table-root", "tables/poi",
            "--sql", "SELECT COUNT(*) FROM poi",
        ],
    )
    assert json.loads(out)["rows"] == [[1500]]


def test_catalog_flow(poi_table, capsys):
    code, _, err = run_cli(
        capsys,
        ["catalog", "register", "--name", "poi", "--table-root", "tables/poi",
         "--description", "points of interest"],
    )
    assert code == 0 and "registered" in err
    code, out, _ = run_cli(capsys, ["catalog", "list"])
    assert code == 0 and out.startswith("poi\ttables/poi")
    code, out, _ = run_cli(capsys, ["catalog", "snippet", "--name", "poi", "--engine", "sql"])
    assert code == 0
    assert out.strip() == "CREATE EXTERNAL TABLE poi LOCATION 'tables/poi' FORMAT EDSP_ICE_V1;"
    code, out, _ = run_cli(capsys, ["catalog", "describe", "--name", "poi"])
    desc = json.loads(out)
    assert desc["snapshot"]["row-count"] == 1000
    # Catalog-resolved querying without --table-root.
    code, out, _ = run_cli(
        capsys, ["--format", "json", "query", "--sql", "SELECT COUNT(*) FROM poi"]
    )
    assert code == 0 and json.loads(out)["rows"] == [[1000]]
    code, _, _ = run_cli(capsys, ["catalog", "snippet", "--name", "poi", "--engine", "spark"])
    assert code == 2


def test_bench_matrix_cli(poi_table, capsys):
    run_cli(capsys, ["catalog", "register", "--name", "poi", "--table-root", "tables/poi"])
    code, out, err = run_cli(capsys, ["bench", "matrix", "--table", "poi"])
    assert code == 0
    matrix = json.loads(out)
    assert matrix["all-pass"] is True
    assert "agree" in err


def test_bench_run_cli_writes_report_files(poi_table, tmp_path, capsys):
    out_stem = tmp_path / "reports" / "bench.json"
    code, out, err = run_cli(
        capsys,
        [
            "bench", "run",
            "--table-root", "tables/poi",
            "--runs", "1",
            "--no-cold",
            "--queries", "q2,q3",
            "--out", str(out_stem),
        ],
    )
    assert code == 0
    assert out.splitlines()[0] == "configuration,q2_p50_ms,q2_p95_ms,q3_p50_ms,q3_p95_ms"
    assert out_stem.exists()
    assert out_stem.with_suffix(".csv").exists()
    assert out_stem.with_suffix(".png").exists()


def test_bench_audit_cli(store_env, capsys):
    code, out, err = run_cli(
        capsys,
        [
            "bench", "audit",
            "--table", "audit_poi",
            "--updates", "3",
            "--initial-rows", "200",
            "--append-rows", "100",
            "--queries-per-engine", "3",
        ],
    )
    assert code == 0
    rep = json.loads(out)
    assert rep["ok"] is True
    assert [c["snapshot-sequence"] for c in rep["commits"]] == [1, 2, 3]


def test_audit_cli(poi_table, capsys):
    run_cli(capsys, ["catalog", "register", "--name", "poi", "--table-root", "tables/poi"])
    code, out, _ = run_cli(capsys, ["audit"])
    assert code == 0
    rep = json.loads(out)
    assert rep["ok"] is True and rep["datasets"] == {"poi": ["tables/poi"]}


def test_console_script_entry(store_env):
    """The installed `edsp` binary dispatches and separates streams."""
    proc = subprocess.run(
        [sys.executable, "-m", "edsp.cli", "snapshots", "--table-root", "missing"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert proc.stdout == ""
    assert "error" in proc.stderr
