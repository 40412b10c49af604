#!/usr/bin/env python3
"""Regenerate the reader conformance fixtures.

Builds a small store with two tables (a clustered POI table with
appends, schema evolution and time travel; a type-zoo table with an
OVERWRITE history), runs the canonical query patterns through the
primary SQL engine, and freezes store bytes plus expected outputs
under reader/fixtures/. Run from the repository root:

    python3 scripts/gen_reader_fixtures.py
"""

import json
import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from edsp import ecf, prep, table  # noqa: E402
from edsp.patterns import pattern_sql, with_defaults  # noqa: E402
from edsp.sqlexec import EngineSession, execute  # noqa: E402
from edsp.sqlparser import parse  # noqa: E402
from edsp.store import LocalStore  # noqa: E402

FIXTURES = REPO / "reader" / "fixtures"

MIXED_SCHEMA = ecf.Schema(
    (
        ecf.Field("id", "INT64"),
        ecf.Field("big", "INT64", nullable=True),
        ecf.Field("score", "FLOAT64", nullable=True),
        ecf.Field("ghost", "FLOAT64", nullable=True),  # stays all-null
        ecf.Field("flag", "BOOL"),
        ecf.Field("tag", "STRING", nullable=True),
        ecf.Field("blurb", "STRING"),
    )
)

SAFE_MAX = (1 << 53) - 1


def mixed_rows(start, n, tag_cycle):
    rows = []
    for i in range(start, start + n):
        tag = tag_cycle[i % len(tag_cycle)]
        rows.append(
            (
                i,
                None if i % 5 == 0 else (SAFE_MAX - i if i % 7 == 0 else i * 1000),
                None if i % 4 == 0 else float(i) if i % 3 == 0 else i / 7.0,
                None,
                i % 2 == 0,
                tag,
                ["", "a\x00b", "東京 'タワー'", 'say "hi", ok', "🙂🙂"][i % 5],
            )
        )
    return rows


def commit_batch(store, location, rows, schema, operation=table.APPEND, name=None):
    data, stats, count = ecf.write_file(schema, rows)
    path = f"{location}/data/{name or f'{count}-rows'}.ecf"
    store.put(path, data)
    entry = table.ManifestEntry(path, count, len(data), schema.schema_id, stats)
    return table.commit(store, location, operation, [entry], schema.schema_id)


def build_store(store_dir: Path, scratch: Path):
    store_dir.mkdir(parents=True)
    store = LocalStore(store_dir)

    # tables/poi: three appends, then additive evolution.
    csvs = []
    for i, n in enumerate([400, 300, 200]):
        p = scratch / f"poi-{i}.csv"
        prep.generate_poi(prep.PoiGenSpec(rows=n, seed=1001 + i), str(p))
        csvs.append(p)
    prep.ingest(store, prep.IngestSpec(source=str(csvs[0]), target="tables/poi", rows_per_file=150))
    for p in csvs[1:]:
        prep.ingest(
            store,
            prep.IngestSpec(source=str(p), target="tables/poi", mode="APPEND", rows_per_file=150),
        )
    table.evolve_schema(store, "tables/poi", "note", "STRING")

    # tables/mixed: type zoo with an OVERWRITE in its history.
    table.create_table(store, "tables/mixed", MIXED_SCHEMA)
    commit_batch(store, "tables/mixed", mixed_rows(1, 40, ["x", "y", None]), MIXED_SCHEMA, name="b1")
    commit_batch(store, "tables/mixed", mixed_rows(100, 30, ["x", "z", "z"]), MIXED_SCHEMA, name="b2")
    commit_batch(
        store,
        "tables/mixed",
        mixed_rows(500, 25, ["y", None, "w"]),
        MIXED_SCHEMA,
        operation=table.OVERWRITE,
        name="b3",
    )
    return store


def run_case(store, name, location, pattern, params, snapshot_id=None):
    session = EngineSession(store)
    session.register("fixture", location)
    merged = with_defaults(pattern, params)
    query = parse(pattern_sql(pattern, "fixture", merged))
    query.as_of_snapshot_id = snapshot_id
    result = execute(store, query, session.resolve)
    return {
        "name": name,
        "table": location,
        "pattern": pattern,
        "params": merged,
        "snapshot_id": snapshot_id,
        "columns": result.columns,
        "rows": [list(r) for r in result.rows],
    }


def main():
    if FIXTURES.exists():
        shutil.rmtree(FIXTURES)
    scratch = FIXTURES / ".scratch"
    scratch.mkdir(parents=True)
    store = build_store(FIXTURES / "store", scratch)

    meta, _ = table.load_table(store, "tables/poi")
    poi_snaps = sorted(meta.snapshots, key=lambda s: s.sequence)
    mixed_meta, _ = table.load_table(store, "tables/mixed")
    mixed_snaps = sorted(mixed_meta.snapshots, key=lambda s: s.sequence)

    cases = [
        run_case(store, "poi q1 capped", "tables/poi", "q1", {"limit": 50}),
        run_case(store, "poi q1 evolved nulls", "tables/poi", "q1", {"limit": 1000}),
        run_case(store, "poi q2 default", "tables/poi", "q2", {}),
        run_case(store, "poi q2 uncapped", "tables/poi", "q2", {"limit": None}),
        run_case(store, "poi q2 other column", "tables/poi", "q2",
                 {"column": "category", "value": "C007", "limit": None}),
        run_case(store, "poi q3 category stats", "tables/poi", "q3", {}),
        run_case(store, "poi q1 time travel", "tables/poi", "q1",
                 {"limit": None}, snapshot_id=poi_snaps[0].snapshot_id),
        run_case(store, "poi q3 at snapshot 2", "tables/poi", "q3",
                 {}, snapshot_id=poi_snaps[1].snapshot_id),
        run_case(store, "mixed q1 post overwrite", "tables/mixed", "q1", {"limit": None}),
        run_case(store, "mixed q1 pre overwrite", "tables/mixed", "q1",
                 {"limit": None}, snapshot_id=mixed_snaps[1].snapshot_id),
        run_case(store, "mixed q2 bool filter", "tables/mixed", "q2",
                 {"column": "flag", "value": True, "limit": None}),
        run_case(store, "mixed q2 string tag", "tables/mixed", "q2",
                 {"column": "tag", "value": "z", "limit": None}),
        run_case(store, "mixed q2 int filter", "tables/mixed", "q2",
                 {"column": "id", "value": 505, "limit": None}),
        run_case(store, "mixed q3 nullable groups", "tables/mixed", "q3",
                 {"group_by": "tag", "agg": "score"}),
        run_case(store, "mixed q3 all null agg", "tables/mixed", "q3",
                 {"group_by": "flag", "agg": "ghost"}),
    ]

    shutil.rmtree(scratch)
    shutil.rmtree(FIXTURES / "store" / ".cas")  # backend bookkeeping, not format
    expected = {
        "note": "frozen outputs of the primary engines over the fixture store",
        "cases": cases,
    }
    (FIXTURES / "expected.json").write_text(
        json.dumps(expected, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
    print(f"wrote {FIXTURES}/store and expected.json with {len(cases)} cases")


if __name__ == "__main__":
    main()
