"""Single entry point wiring the four layers.

Subcommands map onto the architecture: gen-poi / ingest / alter are
the preparation layer, snapshots exposes the data store, catalog is
the access interface, query / scan / bench / audit drive the engines.
Data goes to stdout, diagnostics and counters to stderr; exit codes:
0 success, 2 user error, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile

from . import bench as benchmod
from . import catalog as catmod
from . import prep, table
from .ecf import Schema
from .errors import EdspError
from .patterns import PATTERNS
from .sqlexec import EngineSession, QueryResult, execute
from .sqlparser import Query, parse, parse_predicate
from .store import ENV_STORE, open_store


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _emit_rows(columns, rows, fmt: str) -> None:
    if fmt == "json":
        json.dump(
            {"columns": list(columns), "rows": [list(r) for r in rows]},
            sys.stdout,
            ensure_ascii=False,
        )
        sys.stdout.write("\n")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])


def _emit_counters(counters) -> None:
    d = counters.to_json_dict() if hasattr(counters, "to_json_dict") else dict(counters)
    _diag(
        "counters: "
        + " ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())
    )


def _load_schema_file(path: str) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def cmd_init(args) -> int:
    store = open_store(args.store, create=True)
    _diag(f"store ready at {store.root}")
    return 0


def cmd_gen_poi(args) -> int:
    spec = prep.PoiGenSpec(
        rows=args.rows,
        seed=args.seed,
        target_prefecture_share=args.share,
        cluster_by_prefecture=not args.no_cluster,
    )
    count = prep.generate_poi(spec, args.out)
    _diag(f"wrote {count} rows to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    store = open_store(args.store)
    schema = _load_schema_file(args.schema) if args.schema else None
    snapshot = prep.ingest(
        store,
        prep.IngestSpec(
            source=args.csv,
            target=args.table,
            mode=args.mode.upper(),
            schema=schema,
            rows_per_file=args.rows_per_file,
        ),
    )
    if snapshot is None:
        _diag(f"{args.table}: no rows committed")
    else:
        _diag(
            f"{args.table}: snapshot {snapshot.snapshot_id} "
            f"(sequence {snapshot.sequence}, {snapshot.operation})"
        )
    return 0


def cmd_alter(args) -> int:
    store = open_store(args.store)
    name, _, col_type = args.add_column.partition(":")
    if not col_type:
        raise EdspError("--add-column takes NAME:TYPE (e.g. note:STRING)")
    schema = table.evolve_schema(store, args.table_root, name, col_type.upper())
    _diag(f"{args.table_root}: schema {schema.schema_id} adds {name} {col_type.upper()}")
    return 0


def cmd_snapshots(args) -> int:
    store = open_store(args.store)
    meta, _ = table.load_table(store, args.table_root)
    snaps = sorted(meta.snapshots, key=lambda s: s.sequence)
    if args.format == "json":
        json.dump([s.to_json_dict() for s in snaps], sys.stdout)
        sys.stdout.write("\n")
    else:
        for s in snaps:
            print(
                f"{s.sequence}\t{s.snapshot_id}\t{s.operation}\t"
                f"{s.timestamp_ms}\tschema={s.schema_id}"
            )
    _diag(f"{len(snaps)} snapshots; metadata version {meta.sequence}")
    return 0


def _run_query(args, store) -> QueryResult:
    stmt = parse(args.sql)
    if isinstance(stmt, Query):
        stmt.as_of_snapshot_id = args.as_of
        stmt.as_of_ms = args.as_of_ts
        if args.table_root:
            resolver = lambda name: args.table_root  # noqa: E731
        else:
            resolver = catmod.Catalog(store).resolve
        return execute(store, stmt, resolver, prune=not args.no_prune)
    session = EngineSession(store, resolver=catmod.Catalog(store).resolve)
    return session.sql(args.sql)


def cmd_query(args) -> int:
    store = open_store(args.store)
    result = _run_query(args, store)
    _emit_rows(result.columns, result.rows, args.format)
    _emit_counters(result.counters)
    return 0


def cmd_scan(args) -> int:
    from . import scanapi

    store = open_store(args.store)
    columns = args.columns.split(",") if args.columns else None
    predicate = parse_predicate(args.where) if args.where else None
    stream = scanapi.scan(
        store,
        args.table_root,
        columns=columns,
        predicate=predicate,
        limit=args.limit,
        snapshot_id=args.as_of,
        as_of_ms=args.as_of_ts,
        prune=not args.no_prune,
    )
    rows = list(stream)
    _emit_rows(stream.columns, rows, args.format)
    _emit_counters(stream.counters)
    return 0


def cmd_catalog(args) -> int:
    store = open_store(args.store)
    cat = catmod.Catalog(store)
    if args.catalog_cmd == "register":
        entry = cat.register(
            args.name,
            args.table_root,
            description=args.description,
            update_cadence=args.cadence,
            owner=args.owner,
        )
        _diag(f"registered {entry.name} -> {entry.location}")
        return 0
    if args.catalog_cmd == "list":
        entries = cat.list()
        if args.format == "json":
            json.dump([e.to_json_dict() for e in entries], sys.stdout)
            sys.stdout.write("\n")
        else:
            for e in entries:
                print(f"{e.name}\t{e.location}\t{e.description}")
        return 0
    if args.catalog_cmd == "describe":
        json.dump(cat.describe(args.name), sys.stdout, ensure_ascii=False, indent=2)
        sys.stdout.write("\n")
        return 0
    if args.catalog_cmd == "snippet":
        print(cat.snippet(args.name, args.engine))
        return 0
    if args.catalog_cmd == "serve":
        host, _, port = args.bind.partition(":")
        server = catmod.serve(cat, host or "127.0.0.1", int(port or 0))
        bound = server.server_address
        _diag(f"catalog facade listening on http://{bound[0]}:{bound[1]} (Ctrl-C stops)")
        try:
            while True:
                import time

                time.sleep(3600)
        except KeyboardInterrupt:
            server.shutdown()
        return 0
    raise EdspError(f"unknown catalog subcommand {args.catalog_cmd!r}")


def _resolve_bench_location(args, store) -> tuple[str, str]:
    if args.table_root:
        return args.table_root, args.table_root
    if not args.table:
        raise EdspError("pass --table NAME (catalog) or --table-root LOC")
    cat = catmod.Catalog(store)
    return cat.get(args.table).location, args.table


def cmd_bench(args) -> int:
    store = open_store(args.store)
    engines = benchmod.make_engines(args.engines.split(","))
    queries = args.queries.split(",")
    if args.bench_cmd != "audit":
        location, name = _resolve_bench_location(args, store)

    if args.bench_cmd == "matrix":
        matrix = benchmod.consistency_matrix(store, location, queries, engines)
        json.dump(matrix.to_json_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        _diag("matrix: " + ("all engines agree" if matrix.all_pass else "FAILURES present"))
        return 0

    if args.bench_cmd == "run":
        done = {"n": 0}
        total = len(engines) * len(queries) * args.runs

        def progress(engine, pattern):
            done["n"] += 1
            if args.verbose:
                _diag(f"[{done['n']}/{total}] {engine} {pattern}")

        rep = benchmod.run_bench(
            store,
            location,
            engines=engines,
            queries=queries,
            runs=args.runs,
            cold=not args.no_cold,
            table_name=name,
            parallel=args.parallel,
            progress=progress,
        ).to_json_dict()
        from .report import latency_table, write_report_files

        header, rows = latency_table(rep)
        _emit_rows(header, rows, args.format if args.format == "json" else "csv")
        if args.out:
            paths = write_report_files(rep, args.out)
            _diag(
                "report written: "
                + " ".join(str(p) for p in (paths["json"], paths["csv"], paths["png"]))
            )
        return 0

    if args.bench_cmd == "audit":
        # The audit builds its table from scratch; --table-root names a
        # fresh location, --table only labels the dataset in the report.
        if args.table_root:
            location = args.table_root
            name = args.table or args.table_root
        else:
            location = f"tables/{args.table}"
            name = args.table
        with tempfile.TemporaryDirectory(prefix="edsp-audit-") as tmp:
            csvs = []
            for i in range(args.updates):
                rows = args.initial_rows if i == 0 else args.append_rows
                path = os.path.join(tmp, f"update-{i}.csv")
                prep.generate_poi(
                    prep.PoiGenSpec(rows=rows, seed=args.seed + i), path
                )
                csvs.append(path)
            scratch = {}
            for engine in engines:
                d = os.path.join(tmp, f"scratch-{engine}")
                os.makedirs(d)
                scratch[engine] = d
            rep = benchmod.verify_write_once(
                store,
                name,
                location,
                csvs,
                engines=engines,
                queries_per_engine=args.queries_per_engine,
                scratch_dirs=scratch,
            )
        json.dump(rep.to_json_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        _diag("write-once audit: " + ("clean" if rep.ok else "VIOLATIONS present"))
        return 0

    raise EdspError(f"unknown bench subcommand {args.bench_cmd!r}")


def cmd_audit(args) -> int:
    store = open_store(args.store)
    cat = catmod.Catalog(store)
    datasets = {e.name: e.location for e in cat.list()}
    report = table.audit_replicas(store, datasets)
    json.dump(
        {
            "datasets": report.roots_per_dataset,
            "violations": report.violations,
            "ok": report.ok,
        },
        sys.stdout,
        indent=2,
    )
    sys.stdout.write("\n")
    _diag("replica audit: " + ("clean" if report.ok else "VIOLATIONS present"))
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edsp",
        description="Write-once, read-anywhere tables on a local object store.",
    )
    parser.add_argument(
        "--store",
        default=None,
        help=f"store root directory (default: ${ENV_STORE})",
    )
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create the store root").set_defaults(func=cmd_init)

    p = sub.add_parser("gen-poi", help="generate the synthetic POI CSV")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--share", type=float, default=0.021)
    p.add_argument("--no-cluster", action="store_true")
    p.set_defaults(func=cmd_gen_poi)

    p = sub.add_parser("ingest", help="load a CSV into a table")
    p.add_argument("--csv", required=True)
    p.add_argument("--table", required=True, help="table location (store key prefix)")
    p.add_argument("--mode", choices=["create", "append", "overwrite"], default="create")
    p.add_argument("--schema", help="schema JSON file (inferred when absent)")
    p.add_argument("--rows-per-file", type=int, default=prep.DEFAULT_ROWS_PER_FILE)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("alter", help="add a nullable column in place")
    p.add_argument("--table-root", required=True)
    p.add_argument("--add-column", required=True, metavar="NAME:TYPE")
    p.set_defaults(func=cmd_alter)

    p = sub.add_parser("snapshots", help="list the snapshot log")
    p.add_argument("--table-root", required=True)
    p.set_defaults(func=cmd_snapshots)

    p = sub.add_parser("query", help="run SQL through the warehouse-style engine")
    p.add_argument("--sql", required=True)
    p.add_argument("--table-root", help="bind the queried name to this table root")
    p.add_argument("--as-of", type=int, help="snapshot id")
    p.add_argument("--as-of-ts", type=int, help="timestamp (ms)")
    p.add_argument("--no-prune", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("scan", help="stream rows through the library engine")
    p.add_argument("--table-root", required=True)
    p.add_argument("--columns", help="comma-separated projection")
    p.add_argument("--where", help="predicate expression")
    p.add_argument("--limit", type=int)
    p.add_argument("--as-of", type=int)
    p.add_argument("--as-of-ts", type=int)
    p.add_argument("--no-prune", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("catalog", help="dataset registry and discovery facade")
    csub = p.add_subparsers(dest="catalog_cmd", required=True)
    c = csub.add_parser("register")
    c.add_argument("--name", required=True)
    c.add_argument("--table-root", required=True)
    c.add_argument("--description", default="")
    c.add_argument("--cadence", default="")
    c.add_argument("--owner", default="")
    c = csub.add_parser("list")
    c = csub.add_parser("describe")
    c.add_argument("--name", required=True)
    c = csub.add_parser("snippet")
    c.add_argument("--name", required=True)
    c.add_argument("--engine", required=True)
    c = csub.add_parser("serve")
    c.add_argument("--bind", default="127.0.0.1:8080", metavar="HOST:PORT")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("bench", help="latency bench, consistency matrix, audits")
    bsub = p.add_subparsers(dest="bench_cmd", required=True)
    for name in ("run", "matrix", "audit"):
        b = bsub.add_parser(name)
        b.add_argument("--table", help="catalog dataset name")
        b.add_argument("--table-root", help="direct table location")
        b.add_argument("--engines", default="sql,scan")
        b.add_argument("--queries", default=",".join(PATTERNS))
        if name == "run":
            b.add_argument("--runs", type=int, default=benchmod.DEFAULT_RUNS)
            b.add_argument("--no-cold", action="store_true")
            b.add_argument("--out", help="report stem; writes .json/.csv/.png")
            b.add_argument(
                "--parallel", type=int, default=1,
                help="stress only: concurrent runs muddy timings",
            )
        if name == "audit":
            b.add_argument("--updates", type=int, default=5)
            b.add_argument("--initial-rows", type=int, default=600)
            b.add_argument("--append-rows", type=int, default=200)
            b.add_argument("--queries-per-engine", type=int, default=30)
            b.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="replica audit over catalog datasets")
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (EdspError, ValueError) as exc:
        # ValueError covers bad spec values (rows, shares, JSON files).
        _diag(f"error: {exc}")
        return 2
    except BrokenPipeError:
        return 0
    except Exception as exc:  # internal failure: keep the traceback visible
        import traceback

        traceback.print_exc()
        _diag(f"internal error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
