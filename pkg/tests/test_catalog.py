"""Catalog tests: registry, snippets, digest invariance, HTTP facade."""

import json
import urllib.request

import pytest

from edsp import catalog as cat
from edsp import prep, table
from edsp.errors import DuplicateNameError, InvalidTableError, UnknownEngineError, UnknownEntryError
from edsp.sqlexec import EngineSession


@pytest.fixture
def store_with_table(tmp_path, mem_store):
    csv = tmp_path / "poi.csv"
    prep.generate_poi(prep.PoiGenSpec(rows=400, seed=41), str(csv))
    prep.ingest(mem_store, prep.IngestSpec(source=str(csv), target="tables/poi"))
    return mem_store


def test_register_and_list(store_with_table):
    c = cat.Catalog(store_with_table)
    entry = c.register("poi", "tables/poi", description="points of interest")
    assert entry.created_ms > 0
    assert [e.name for e in c.list()] == ["poi"]
    assert c.get("poi").location == "tables/poi"


def test_register_duplicate_name(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    with pytest.raises(DuplicateNameError):
        c.register("poi", "tables/poi")


def test_register_invalid_table(store_with_table):
    c = cat.Catalog(store_with_table)
    with pytest.raises(InvalidTableError):
        c.register("ghost", "tables/ghost")


def test_register_never_touches_table_bytes(store_with_table):
    c = cat.Catalog(store_with_table)
    before = cat.table_roots_digest(store_with_table, ["tables/poi"])
    c.register("poi", "tables/poi")
    after = cat.table_roots_digest(store_with_table, ["tables/poi"])
    assert before == after


def test_sql_snippet_is_single_statement(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    snippet = c.snippet("poi", "sql")
    assert snippet.count(";") == 1 and snippet.strip().endswith(";")
    assert "\n" not in snippet.strip()
    assert "tables/poi" in snippet


def test_snippet_round_trip_registers_for_querying(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    session = EngineSession(store_with_table)
    session.sql(c.snippet("poi", "sql"))
    result = session.sql("SELECT COUNT(*) FROM poi")
    assert result.rows == [(400,)]


def test_snippet_unknown_engine(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    with pytest.raises(UnknownEngineError):
        c.snippet("poi", "spark")
    with pytest.raises(UnknownEntryError):
        c.snippet("nope", "sql")


def test_every_registered_engine_has_a_snippet(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    snippets = c.snippets("poi")
    assert set(snippets) == {"sql", "scan", "reader"}
    for text in snippets.values():
        assert "tables/poi" in text


def test_catalog_resolver_feeds_sql_engine(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    session = EngineSession(store_with_table, resolver=c.resolve)
    assert session.sql("SELECT COUNT(*) FROM poi").rows == [(400,)]


def test_describe_includes_schema_and_snapshot(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    desc = c.describe("poi")
    meta, snap = table.load_table(store_with_table, "tables/poi")
    assert desc["schema"] == meta.schema().to_json_dict()
    assert desc["snapshot"]["row-count"] == 400
    assert desc["snapshot"]["sequence"] == snap.sequence


# --- HTTP facade -------------------------------------------------------------


def _get(url):
    with urllib.request.urlopen(url) as resp:
        return resp.status, json.loads(resp.read().decode("utf-8"))


def test_http_facade(store_with_table):
    c = cat.Catalog(store_with_table)
    server = cat.serve(c, "127.0.0.1", 0)
    host, port = server.server_address
    base = f"http://{host}:{port}"
    try:
        status, body = _get(base + "/tables")
        assert status == 200 and body == []

        c.register("poi", "tables/poi")
        status, body = _get(base + "/tables")
        assert status == 200 and [e["name"] for e in body] == ["poi"]

        status, body = _get(base + "/tables/poi")
        assert status == 200
        meta, _ = table.load_table(store_with_table, "tables/poi")
        assert body["schema"] == meta.schema().to_json_dict()
        assert set(body["snippets"]) == {"sql", "scan", "reader"}

        with pytest.raises(urllib.error.HTTPError) as err:
            _get(base + "/tables/ghost")
        assert err.value.code == 404

        req = urllib.request.Request(base + "/tables", data=b"{}", method="POST")
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(req)
        assert err.value.code == 405
    finally:
        server.shutdown()


def test_http_facade_never_writes(store_with_table):
    c = cat.Catalog(store_with_table)
    c.register("poi", "tables/poi")
    baseline = table.ByteCensus.take(store_with_table)
    server = cat.serve(c, "127.0.0.1", 0)
    host, port = server.server_address
    try:
        _get(f"http://{host}:{port}/tables/poi")
    finally:
        server.shutdown()
    after = table.ByteCensus.take(store_with_table)
    assert after.store_bytes == baseline.store_bytes
    assert after.store_objects == baseline.store_objects
