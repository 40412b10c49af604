"""Child entry point for cold benchmark runs.

One process = one query execution with nothing warmed up. Prints a
single JSON object on stdout (rows omitted unless requested; the
harness compares canonical digests).
"""

from __future__ import annotations

import argparse
import json
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="edsp-benchrun")
    parser.add_argument("--store", required=True)
    parser.add_argument("--location", required=True)
    parser.add_argument("--engine", required=True, choices=["sql", "scan"])
    parser.add_argument("--pattern", required=True)
    parser.add_argument("--params", default="{}")
    parser.add_argument("--prune", default="1")
    parser.add_argument("--emit-rows", action="store_true")
    args = parser.parse_args(argv)

    from .bench import ScanEngine, SqlEngine, canonical_digest

    adapter = SqlEngine() if args.engine == "sql" else ScanEngine()
    outcome = adapter.run(
        args.store,
        args.location,
        args.pattern,
        json.loads(args.params),
        prune=args.prune != "0",
    )
    payload = {
        "engine": args.engine,
        "pattern": args.pattern,
        "columns": outcome.columns,
        "digest": canonical_digest(outcome.columns, outcome.rows),
        "row_count": len(outcome.rows),
        "counters": outcome.counters,
        "wall_time_ms": outcome.wall_time_ms,
    }
    if args.emit_rows:
        payload["rows"] = [list(r) for r in outcome.rows]
    json.dump(payload, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
