"""The three benchmark query patterns, shared by the harness and the CLI.

q1: full extraction (ETL shape), output capped
q2: selective WHERE on one column, output capped
q3: GROUP BY aggregation (count + mean per group)

Each pattern maps to SQL text for the SQL engine and to a programmatic
call for scan-style engines; both spellings must agree.
"""

from __future__ import annotations

from .predicates import eq

PATTERNS = ("q1", "q2", "q3")

ROW_CAP = 10_000  # output cap applied to q1/q2 unless overridden


def default_params(pattern: str) -> dict:
    if pattern == "q1":
        return {"limit": ROW_CAP}
    if pattern == "q2":
        return {"column": "prefecture", "value": "P31", "limit": ROW_CAP}
    if pattern == "q3":
        return {"group_by": "category", "agg": "rating"}
    raise ValueError(f"unknown pattern {pattern!r} (expected one of {PATTERNS})")


def with_defaults(pattern: str, params: dict | None) -> dict:
    merged = default_params(pattern)
    merged.update(params or {})
    return merged


def _sql_literal(value) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    return repr(value)


def pattern_sql(pattern: str, table_name: str, params: dict | None = None) -> str:
    p = with_defaults(pattern, params)
    if pattern == "q1":
        sql = f"SELECT * FROM {table_name}"
        if p.get("limit") is not None:
            sql += f" LIMIT {p['limit']}"
        return sql
    if pattern == "q2":
        sql = (
            f"SELECT * FROM {table_name} "
            f"WHERE {p['column']} = {_sql_literal(p['value'])}"
        )
        if p.get("limit") is not None:
            sql += f" LIMIT {p['limit']}"
        return sql
    if pattern == "q3":
        g, a = p["group_by"], p["agg"]
        return (
            f"SELECT {g}, COUNT(*), AVG({a}) FROM {table_name} GROUP BY {g}"
        )
    raise ValueError(f"unknown pattern {pattern!r}")


def run_pattern_scan(store, location, pattern, params=None, snapshot_id=None,
                     as_of_ms=None, prune=True):
    """Execute a pattern through the programmatic scan engine.

    Returns (columns, rows, counters)."""
    from . import scanapi

    p = with_defaults(pattern, params)
    if pattern in ("q1", "q2"):
        predicate = eq(p["column"], p["value"]) if pattern == "q2" else None
        stream = scanapi.scan(
            store,
            location,
            predicate=predicate,
            limit=p.get("limit"),
            snapshot_id=snapshot_id,
            as_of_ms=as_of_ms,
            prune=prune,
        )
        rows = list(stream)
        return stream.columns, rows, stream.counters
    if pattern == "q3":
        labels, rows, counters = scanapi.aggregate(
            store,
            location,
            group_by=[p["group_by"]],
            aggregates=[("count", None), ("avg", p["agg"])],
            snapshot_id=snapshot_id,
            as_of_ms=as_of_ms,
            prune=prune,
        )
        return labels, rows, counters
    raise ValueError(f"unknown pattern {pattern!r}")
