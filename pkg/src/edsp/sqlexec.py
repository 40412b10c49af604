"""SQL engine executor (engine A): the warehouse-style external-table path.

Scans every file plan_scan keeps (LIMIT is applied after the
deterministic scan, never by short-circuit, so its byte counters
reflect the true scan cost), evaluates predicates with its own
three-valued logic, and aggregates with its own accumulators. The only
code shared with the programmatic scan engine lies at or below the
plan_scan layer; agreement between the two executors is the system's
consistency oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import table as tbl
from .ecf import Schema, read_columns
from .errors import (
    Int64OverflowError,
    QueryError,
    QueryTypeError,
    UnknownColumnError,
    UnknownTableError,
)
from .predicates import And, Comparison, NullCheck, Or, Predicate, columns_of
from .sqlparser import Aggregate, ColumnRef, Query, RegisterExternalTable, parse
from .store import ObjectStore

_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1

_NUMERIC = ("INT64", "FLOAT64")


@dataclass
class Counters:
    files_considered: int = 0
    files_pruned: int = 0
    data_bytes_read: int = 0
    rows_scanned: int = 0
    wall_time_ms: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "files_considered": self.files_considered,
            "files_pruned": self.files_pruned,
            "data_bytes_read": self.data_bytes_read,
            "rows_scanned": self.rows_scanned,
            "wall_time_ms": self.wall_time_ms,
        }


@dataclass
class QueryResult:
    columns: list[str]
    rows: list[tuple]
    counters: Counters = field(default_factory=Counters)


# ---------------------------------------------------------------------------
# predicate semantics (this engine's own implementation)
# ---------------------------------------------------------------------------


def _cmp3(value, literal, op: str, column: str):
    if value is None:
        return None
    mixed_bool = (type(value) is bool) != (type(literal) is bool)
    mixed_str = (type(value) is str) != (type(literal) is str)
    if mixed_bool or mixed_str:
        raise QueryTypeError(
            f"column {column}: cannot compare {type(value).__name__} with {literal!r}"
        )
    if op == "=":
        ok = value == literal
    elif op == "!=":
        ok = value != literal
    elif op == "<":
        ok = value < literal
    elif op == "<=":
        ok = value <= literal
    elif op == ">":
        ok = value > literal
    else:
        ok = value >= literal
    return ok


def _truth(pred: Predicate, get):
    if isinstance(pred, Comparison):
        return _cmp3(get(pred.column), pred.value, pred.op, pred.column)
    if isinstance(pred, NullCheck):
        value = get(pred.column)
        return (value is not None) if pred.negate else (value is None)
    if isinstance(pred, And):
        result = True
        for part in pred.parts:
            r = _truth(part, get)
            if r is False:
                return False
            if r is None:
                result = None
        return result
    if isinstance(pred, Or):
        result = False
        for part in pred.parts:
            r = _truth(part, get)
            if r is True:
                return True
            if r is None:
                result = None
        return result
    raise TypeError(f"not a predicate: {pred!r}")


def _check_predicate_types(pred: Predicate, schema: Schema):
    """Static validation so type errors do not depend on data reached."""
    if isinstance(pred, Comparison):
        ftype = schema.field(pred.column).type
        lit = pred.value
        if ftype in _NUMERIC:
            if type(lit) is bool or not isinstance(lit, (int, float)):
                raise QueryTypeError(
                    f"column {pred.column} is {ftype}, literal {lit!r} is not numeric"
                )
        elif ftype == "STRING":
            if not isinstance(lit, str):
                raise QueryTypeError(
                    f"column {pred.column} is STRING, literal {lit!r} is not"
                )
        else:  # BOOL
            if type(lit) is not bool:
                raise QueryTypeError(
                    f"column {pred.column} is BOOL, literal {lit!r} is not"
                )
    elif isinstance(pred, NullCheck):
        schema.field(pred.column)
    else:
        for part in pred.parts:
            _check_predicate_types(part, schema)


# ---------------------------------------------------------------------------
# aggregation accumulators
# ---------------------------------------------------------------------------


class _Acc:
    __slots__ = ("func", "count", "total", "extreme", "is_float")

    def __init__(self, func: str, is_float: bool):
        self.func = func
        self.count = 0
        self.total = 0.0 if is_float else 0
        self.extreme = None
        self.is_float = is_float

    def add(self, value):
        if self.func == "count":
            if value is not None:
                self.count += 1
            return
        if value is None:
            return
        self.count += 1
        if self.func in ("sum", "avg"):
            self.total += value
        elif self.func == "min":
            if self.extreme is None or value < self.extreme:
                self.extreme = value
        else:  # max
            if self.extreme is None or value > self.extreme:
                self.extreme = value

    def result(self):
        if self.func == "count":
            return self.count
        if self.count == 0:
            return None
        if self.func == "sum":
            if not self.is_float and not (_INT64_MIN <= self.total <= _INT64_MAX):
                raise Int64OverflowError(f"SUM overflows INT64: {self.total}")
            return self.total
        if self.func == "avg":
            return self.total / self.count
        return self.extreme


class _StarAcc:
    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def result(self):
        return self.count


def _group_sort_key(key: tuple):
    # Ascending by group key; nulls last per component.
    return tuple((1,) if v is None else (0, v) for v in key)


# ---------------------------------------------------------------------------
# session / execution
# ---------------------------------------------------------------------------


class EngineSession:
    """Holds external-table registrations for the SQL engine.

    Tables become visible either through the one-statement DDL
    (CREATE EXTERNAL TABLE ... LOCATION ... FORMAT EDSP_ICE_V1) or
    through a resolver such as the catalog.
    """

    def __init__(self, store: ObjectStore, resolver=None):
        self.store = store
        self.resolver = resolver  # callable: name -> location, or None
        self.tables: dict[str, str] = {}

    def resolve(self, name: str) -> str:
        if name in self.tables:
            return self.tables[name]
        if self.resolver is not None:
            location = self.resolver(name)
            if location is not None:
                return location
        raise UnknownTableError(name)

    def register(self, name: str, location: str):
        self.tables[name] = location

    def sql(self, text: str, prune: bool = True) -> QueryResult:
        stmt = parse(text)
        if isinstance(stmt, RegisterExternalTable):
            self.register(stmt.name, stmt.location)
            return QueryResult(columns=["registered"], rows=[(stmt.name,)])
        return execute(self.store, stmt, self.resolve, prune=prune)


def execute(store: ObjectStore, query: Query, resolve, prune: bool = True) -> QueryResult:
    """Run a parsed query; ``resolve`` maps table name -> location."""
    started = time.perf_counter()
    location = resolve(query.table)
    if location is None:
        raise UnknownTableError(query.table)
    meta, snapshot = tbl.load_table(
        store,
        location,
        snapshot_id=query.as_of_snapshot_id,
        as_of_ms=query.as_of_ms,
    )
    # Current reads serve the current schema (post-evolution columns read
    # as null); explicit time travel serves the schema recorded then.
    time_travel = query.as_of_snapshot_id is not None or query.as_of_ms is not None
    schema = meta.schema(snapshot.schema_id) if (snapshot and time_travel) else meta.schema()

    # --- validate projections ------------------------------------------
    if query.select_star:
        if query.group_by:
            raise QueryError("SELECT * cannot be combined with GROUP BY")
        projections: list = [ColumnRef(n) for n in schema.names()]
    else:
        projections = list(query.projections)
    aggregates = [p for p in projections if isinstance(p, Aggregate)]
    bare = [p for p in projections if isinstance(p, ColumnRef)]

    for p in bare:
        if not schema.has(p.name):
            raise UnknownColumnError(p.name)
    for a in aggregates:
        if a.arg is not None:
            ftype = schema.field(a.arg).type
            if a.func in ("sum", "avg") and ftype not in _NUMERIC:
                raise QueryTypeError(f"{a.label}: argument must be numeric, is {ftype}")
    for g in query.group_by:
        if not schema.has(g):
            raise UnknownColumnError(g)

    grouped = bool(query.group_by) or bool(aggregates)
    if query.group_by:
        keys = set(query.group_by)
        for p in bare:
            if p.name not in keys:
                raise QueryError(
                    f"column {p.name} must appear in GROUP BY or an aggregate"
                )
    elif aggregates and bare:
        raise QueryError("cannot mix bare columns with aggregates without GROUP BY")

    if query.predicate is not None:
        for col in sorted(columns_of(query.predicate)):
            if not schema.has(col):
                raise UnknownColumnError(col)
        _check_predicate_types(query.predicate, schema)

    # --- plan ------------------------------------------------------------
    entries, report = tbl.plan_scan(
        store, meta, snapshot, query.predicate, prune=prune, schema=schema
    )
    counters = Counters(
        files_considered=report.files_considered, files_pruned=report.files_pruned
    )

    needed: list[str] = []
    for p in bare:
        if p.name not in needed:
            needed.append(p.name)
    for a in aggregates:
        if a.arg is not None and a.arg not in needed:
            needed.append(a.arg)
    for g in query.group_by:
        if g not in needed:
            needed.append(g)
    if query.predicate is not None:
        for col in sorted(columns_of(query.predicate)):
            if col not in needed:
                needed.append(col)

    # --- scan --------------------------------------------------------------
    out_rows: list[tuple] = []
    groups: dict[tuple, list] = {}
    group_cols = list(query.group_by)
    agg_is_float = [
        a.arg is not None and schema.field(a.arg).type == "FLOAT64" for a in aggregates
    ]
    limit = query.limit
    predicate = query.predicate

    def new_accs():
        accs = []
        for a, is_float in zip(aggregates, agg_is_float):
            if a.func == "count" and a.arg is None:
                accs.append(_StarAcc())
            else:
                accs.append(_Acc(a.func, is_float))
        return accs

    for entry in entries:
        data = store.get(entry.data_path)
        cols, nrows, bytes_read = read_columns(data, needed, reader_schema=schema)
        counters.data_bytes_read += bytes_read
        counters.rows_scanned += nrows

        def getter(i):
            return lambda c: cols[c][i]

        if grouped:
            key_cols = [cols[g] for g in group_cols]
            arg_cols = [None if a.arg is None else cols[a.arg] for a in aggregates]
            for i in range(nrows):
                if predicate is not None and _truth(predicate, getter(i)) is not True:
                    continue
                key = tuple(kc[i] for kc in key_cols)
                accs = groups.get(key)
                if accs is None:
                    accs = groups[key] = new_accs()
                for acc, arg_col in zip(accs, arg_cols):
                    if isinstance(acc, _StarAcc):
                        acc.count += 1
                    else:
                        acc.add(arg_col[i])
        else:
            proj_cols = [cols[p.name] for p in bare]
            for i in range(nrows):
                if predicate is not None and _truth(predicate, getter(i)) is not True:
                    continue
                if limit is None or len(out_rows) < limit:
                    out_rows.append(tuple(pc[i] for pc in proj_cols))
                # The scan itself continues: LIMIT never shrinks counters.

    # --- finalize ------------------------------------------------------
    if grouped:
        if not query.group_by and not groups:
            groups[()] = new_accs()  # aggregates over zero rows still emit one row
        ordered = sorted(groups.items(), key=lambda kv: _group_sort_key(kv[0]))
        key_index = {g: i for i, g in enumerate(group_cols)}
        rows = []
        for key, accs in ordered:
            agg_values = [acc.result() for acc in accs]
            row = []
            agg_i = 0
            for p in projections:
                if isinstance(p, ColumnRef):
                    row.append(key[key_index[p.name]])
                else:
                    row.append(agg_values[agg_i])
                    agg_i += 1
            rows.append(tuple(row))
        if limit is not None:
            rows = rows[:limit]
        out_rows = rows

    columns = [p.name if isinstance(p, ColumnRef) else p.label for p in projections]
    counters.wall_time_ms = (time.perf_counter() - started) * 1000.0
    return QueryResult(columns=columns, rows=out_rows, counters=counters)
