"""Programmatic scan engine (engine B): the client-library path.

Streams rows file by file with projection and predicate pushdown into
the codec layer, short-circuiting as soon as a LIMIT is satisfied, so
peak resident rows stay bounded by one file. Aggregation is
implemented here a second time, on purpose: the SQL executor and this
module must agree without sharing executor code, and that agreement is
what the consistency matrix checks.
"""

from __future__ import annotations

import time

from . import table as tbl
from .ecf import project_read
from .errors import Int64OverflowError, QueryTypeError, UnknownColumnError
from .predicates import Predicate, columns_of
from .sqlexec import Counters
from .store import ObjectStore

_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1


class ScanStream:
    """Single-consumer row stream; counters settle as rows are pulled."""

    def __init__(self, columns: list[str], row_iter, counters: Counters):
        self.columns = columns
        self.counters = counters
        self._iter = row_iter

    def __iter__(self):
        return self._iter


def _resolve_schema(store, location, snapshot_id, as_of_ms):
    meta, snapshot = tbl.load_table(
        store, location, snapshot_id=snapshot_id, as_of_ms=as_of_ms
    )
    # Time travel serves the schema recorded on the chosen snapshot;
    # current reads serve the current (possibly evolved) schema.
    time_travel = snapshot_id is not None or as_of_ms is not None
    schema = meta.schema(snapshot.schema_id) if (snapshot and time_travel) else meta.schema()
    return meta, snapshot, schema


def scan(
    store: ObjectStore,
    location: str,
    columns: list[str] | None = None,
    predicate: Predicate | None = None,
    limit: int | None = None,
    snapshot_id: int | None = None,
    as_of_ms: int | None = None,
    prune: bool = True,
) -> ScanStream:
    """Stream rows in the deterministic scan order.

    ``columns=None`` selects the snapshot schema's columns. The stream
    stops reading files once ``limit`` rows have been produced.
    """
    started = time.perf_counter()
    meta, snapshot, schema = _resolve_schema(store, location, snapshot_id, as_of_ms)
    out_columns = list(columns) if columns is not None else schema.names()
    for name in out_columns:
        if not schema.has(name):
            raise UnknownColumnError(name)
    if predicate is not None:
        for name in sorted(columns_of(predicate)):
            if not schema.has(name):
                raise UnknownColumnError(name)

    entries, report = tbl.plan_scan(
        store, meta, snapshot, predicate, prune=prune, schema=schema
    )
    counters = Counters(
        files_considered=report.files_considered, files_pruned=report.files_pruned
    )

    def rows():
        produced = 0
        for entry in entries:
            if limit is not None and produced >= limit:
                break
            data = store.get(entry.data_path)
            file_rows, read = project_read(
                data, out_columns, predicate, reader_schema=schema
            )
            counters.data_bytes_read += read.bytes_read
            counters.rows_scanned += read.rows_scanned
            for row in file_rows:
                if limit is not None and produced >= limit:
                    break
                produced += 1
                yield row
        counters.wall_time_ms = (time.perf_counter() - started) * 1000.0

    return ScanStream(out_columns, rows(), counters)


# ---------------------------------------------------------------------------
# aggregation (independent implementation, engine B flavor)
# ---------------------------------------------------------------------------

_AGG_FUNCS = ("count", "sum", "avg", "min", "max")


def _null_last_key(key: tuple):
    return tuple((1,) if v is None else (0, v) for v in key)


def aggregate(
    store: ObjectStore,
    location: str,
    group_by: list[str] | None = None,
    aggregates: list[tuple[str, str | None]] = (),
    predicate: Predicate | None = None,
    snapshot_id: int | None = None,
    as_of_ms: int | None = None,
    prune: bool = True,
) -> tuple[list[str], list[tuple], Counters]:
    """Grouped aggregation over a streamed scan.

    ``aggregates`` is a list of (func, column) with column None only
    for count(*). Returns (column labels, rows sorted by group key
    with nulls last, counters).
    """
    started = time.perf_counter()
    group_by = list(group_by or [])
    aggregates = list(aggregates)
    meta, snapshot, schema = _resolve_schema(store, location, snapshot_id, as_of_ms)

    for func, arg in aggregates:
        if func not in _AGG_FUNCS:
            raise ValueError(f"unknown aggregate {func!r}")
        if arg is None:
            if func != "count":
                raise ValueError(f"{func}(*) is not defined")
            continue
        ftype = schema.field(arg).type
        if func in ("sum", "avg") and ftype not in ("INT64", "FLOAT64"):
            raise QueryTypeError(f"{func}({arg}): argument must be numeric, is {ftype}")

    needed = list(group_by)
    for _func, arg in aggregates:
        if arg is not None and arg not in needed:
            needed.append(arg)

    stream = scan(
        store,
        location,
        columns=needed,
        predicate=predicate,
        snapshot_id=snapshot_id,
        as_of_ms=as_of_ms,
        prune=prune,
    )
    index = {name: i for i, name in enumerate(stream.columns)}
    key_idx = [index[g] for g in group_by]
    agg_idx = [None if arg is None else index[arg] for _func, arg in aggregates]
    float_sum = [
        arg is not None and schema.field(arg).type == "FLOAT64"
        for _func, arg in aggregates
    ]

    # state per group: [star_count, per-agg (count, total, extreme)]
    groups: dict[tuple, list] = {}

    def fresh_state():
        return [
            [0, 0.0 if is_f else 0, None] for (_f, _a), is_f in zip(aggregates, float_sum)
        ]

    for row in stream:
        key = tuple(row[i] for i in key_idx)
        state = groups.get(key)
        if state is None:
            state = groups[key] = fresh_state()
        for slot, (func, _arg), idx in zip(state, aggregates, agg_idx):
            if idx is None:  # count(*)
                slot[0] += 1
                continue
            value = row[idx]
            if value is None:
                continue
            slot[0] += 1
            if func in ("sum", "avg"):
                slot[1] += value
            elif func == "min":
                if slot[2] is None or value < slot[2]:
                    slot[2] = value
            elif func == "max":
                if slot[2] is None or value > slot[2]:
                    slot[2] = value

    if not group_by and not groups:
        groups[()] = fresh_state()

    rows_out = []
    for key in sorted(groups, key=_null_last_key):
        state = groups[key]
        values = list(key)
        for slot, (func, arg), is_f in zip(state, aggregates, float_sum):
            count, total, extreme = slot
            if func == "count":
                values.append(count)
            elif count == 0:
                values.append(None)
            elif func == "sum":
                if not is_f and arg is not None and not (_INT64_MIN <= total <= _INT64_MAX):
                    raise Int64OverflowError(f"SUM overflows INT64: {total}")
                values.append(total)
            elif func == "avg":
                values.append(total / count)
            else:
                values.append(extreme)
        rows_out.append(tuple(values))

    labels = list(group_by) + [
        f"{func}({arg if arg is not None else '*'})" for func, arg in aggregates
    ]
    counters = stream.counters
    counters.wall_time_ms = (time.perf_counter() - started) * 1000.0
    return labels, rows_out, counters
