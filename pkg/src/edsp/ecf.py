"""ECF v1: the self-described columnar data-file codec.

Byte layout (little-endian throughout):

    magic "ECF1"
    u32 schema_len, then schema JSON
        {"schema_id": N, "fields": [{"name", "type", "nullable"}, ...]}
    u64 row_count
    per column in schema order:
        presence bitmap, ceil(rows/8) bytes, LSB-first   (nullable only)
        values:
            INT64   rows x 8 bytes two's-complement
            FLOAT64 rows x 8 bytes IEEE-754
            BOOL    ceil(rows/8) bytes, LSB-first
            STRING  (rows+1) u32 byte offsets, then concatenated UTF-8
        null slots encode as zero / empty
    footer JSON
        {"row_count": N, "crc32": C, "columns": {name: {"min", "max", "null_count"}}}
        (min/max omitted when a column has no non-null values)
    u32 footer_len
    magic "ECF1"

The crc32 covers every byte before the footer JSON; a fully verifying
read additionally recomputes per-column statistics, so any single-byte
corruption surfaces as an error rather than a silently wrong answer.
No compression: files must be bit-exact across independent readers.
"""

from __future__ import annotations

import json
import math
import re
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    FooterMismatchError,
    QueryTypeError,
    TruncatedFileError,
    TypeMismatchError,
    UnknownColumnError,
)
from .predicates import And, Comparison, NullCheck, Or, Predicate, columns_of

MAGIC = b"ECF1"
TYPES = ("INT64", "FLOAT64", "BOOL", "STRING")
FILE_EXTENSION = ".ecf"

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class Field:
    name: str
    type: str
    nullable: bool = False


@dataclass(frozen=True)
class Schema:
    fields: tuple[Field, ...]
    schema_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if self.schema_id < 0:
            raise ValueError("schema_id must be non-negative")
        seen = set()
        for f in self.fields:
            if not _IDENT_RE.match(f.name):
                raise ValueError(f"bad field name: {f.name!r}")
            if f.type not in TYPES:
                raise ValueError(f"unknown field type: {f.type!r}")
            if f.name in seen:
                raise ValueError(f"duplicate field name: {f.name!r}")
            seen.add(f.name)

    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def field(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise UnknownColumnError(name)

    def has(self, name: str) -> bool:
        return any(f.name == name for f in self.fields)

    def to_json_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "fields": [
                {"name": f.name, "type": f.type, "nullable": f.nullable}
                for f in self.fields
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Schema":
        fields = tuple(
            Field(f["name"], f["type"], bool(f["nullable"])) for f in obj["fields"]
        )
        return cls(fields, int(obj["schema_id"]))


@dataclass
class ColumnStats:
    min: object = None
    max: object = None
    null_count: int = 0

    def to_json_dict(self) -> dict:
        out: dict = {"null_count": self.null_count}
        if self.min is not None:
            out["min"] = self.min
            out["max"] = self.max
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ColumnStats":
        return cls(obj.get("min"), obj.get("max"), int(obj["null_count"]))


@dataclass
class ReadCounters:
    bytes_read: int = 0
    rows_scanned: int = 0


# ---------------------------------------------------------------------------
# write path
# ---------------------------------------------------------------------------


def _check_value(value, ftype: str, col: str):
    if ftype == "INT64":
        if type(value) is not int:
            raise TypeMismatchError(f"column {col}: expected INT64, got {value!r}")
        if not (_INT64_MIN <= value <= _INT64_MAX):
            raise TypeMismatchError(f"column {col}: {value} out of INT64 range")
    elif ftype == "FLOAT64":
        if type(value) is int:
            value = float(value)
        if type(value) is not float:
            raise TypeMismatchError(f"column {col}: expected FLOAT64, got {value!r}")
        if not math.isfinite(value):
            raise TypeMismatchError(f"column {col}: non-finite FLOAT64 rejected")
    elif ftype == "BOOL":
        if type(value) is not bool:
            raise TypeMismatchError(f"column {col}: expected BOOL, got {value!r}")
    elif ftype == "STRING":
        if type(value) is not str:
            raise TypeMismatchError(f"column {col}: expected STRING, got {value!r}")
    return value


def _encode_column(values: list, f: Field) -> tuple[bytes, ColumnStats]:
    rows = len(values)
    null_count = 0
    present = None
    if f.nullable:
        mask = np.ones(rows, dtype=np.uint8)
        for i, v in enumerate(values):
            if v is None:
                mask[i] = 0
        null_count = int(rows - mask.sum())
        present = mask
    else:
        for v in values:
            if v is None:
                raise TypeMismatchError(f"column {f.name}: null in non-nullable column")

    non_null = [v for v in values if v is not None]
    stats = ColumnStats(null_count=null_count)
    if non_null:
        stats.min = min(non_null)
        stats.max = max(non_null)
        if f.type == "FLOAT64":
            stats.min = float(stats.min)
            stats.max = float(stats.max)

    parts = []
    if present is not None:
        parts.append(np.packbits(present, bitorder="little").tobytes())

    if f.type == "INT64":
        arr = np.fromiter(
            (0 if v is None else v for v in values), dtype=np.int64, count=rows
        )
        parts.append(arr.tobytes())
    elif f.type == "FLOAT64":
        arr = np.fromiter(
            (0.0 if v is None else v for v in values), dtype=np.float64, count=rows
        )
        parts.append(arr.tobytes())
    elif f.type == "BOOL":
        bits = np.fromiter(
            (0 if not v else 1 for v in values), dtype=np.uint8, count=rows
        )
        parts.append(np.packbits(bits, bitorder="little").tobytes())
    else:  # STRING
        try:
            blobs = [b"" if v is None else v.encode("utf-8") for v in values]
        except UnicodeEncodeError as exc:
            raise TypeMismatchError(f"column {f.name}: non-UTF-8 string") from exc
        offsets = np.zeros(rows + 1, dtype=np.uint32)
        total = 0
        for i, b in enumerate(blobs):
            total += len(b)
            offsets[i + 1] = total
        parts.append(offsets.tobytes())
        parts.append(b"".join(blobs))

    return b"".join(parts), stats


def write_file(schema: Schema, rows) -> tuple[bytes, dict[str, ColumnStats], int]:
    """Encode rows (sequences in schema field order) into ECF v1 bytes.

    Returns the file bytes, per-column stats identical to the footer,
    and the row count.
    """
    rows = list(rows)
    ncols = len(schema.fields)
    columns: list[list] = [[] for _ in range(ncols)]
    for r, row in enumerate(rows):
        if len(row) != ncols:
            raise TypeMismatchError(f"row {r}: expected {ncols} values, got {len(row)}")
        for c, f in enumerate(schema.fields):
            v = row[c]
            if v is not None:
                v = _check_value(v, f.type, f.name)
            columns[c].append(v)

    out = bytearray()
    out += MAGIC
    schema_json = json.dumps(
        schema.to_json_dict(), separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    out += struct.pack("<I", len(schema_json))
    out += schema_json
    out += struct.pack("<Q", len(rows))

    stats: dict[str, ColumnStats] = {}
    for c, f in enumerate(schema.fields):
        block, col_stats = _encode_column(columns[c], f)
        out += block
        stats[f.name] = col_stats

    footer = {
        "row_count": len(rows),
        "crc32": zlib.crc32(bytes(out)),
        "columns": {name: s.to_json_dict() for name, s in stats.items()},
    }
    footer_json = json.dumps(
        footer, separators=(",", ":"), ensure_ascii=False, sort_keys=True
    ).encode("utf-8")
    out += footer_json
    out += struct.pack("<I", len(footer_json))
    out += MAGIC
    return bytes(out), stats, len(rows)


# ---------------------------------------------------------------------------
# read path
# ---------------------------------------------------------------------------


def _parse_header(data: bytes) -> tuple[Schema, int, int]:
    """Returns (schema, row_count, offset of first column block)."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("missing ECF1 header magic")
    if len(data) < 8:
        raise TruncatedFileError("file too short for schema block")
    (schema_len,) = struct.unpack_from("<I", data, 4)
    pos = 8 + schema_len
    if pos + 8 > len(data):
        raise TruncatedFileError("schema block extends past end of file")
    try:
        schema_obj = json.loads(data[8:pos].decode("utf-8"))
        schema = Schema.from_json_dict(schema_obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise TruncatedFileError(f"bad schema block: {exc}") from exc
    (row_count,) = struct.unpack_from("<Q", data, pos)
    return schema, row_count, pos + 8


def _parse_footer(data: bytes) -> tuple[dict, int]:
    """Returns (footer dict, offset where footer JSON starts)."""
    if len(data) < 8 or data[-4:] != MAGIC:
        raise BadMagicError("missing ECF1 trailer magic")
    (footer_len,) = struct.unpack_from("<I", data, len(data) - 8)
    footer_start = len(data) - 8 - footer_len
    if footer_start < 16:
        raise TruncatedFileError("footer length exceeds file size")
    try:
        footer = json.loads(data[footer_start : len(data) - 8].decode("utf-8"))
    except ValueError as exc:
        raise FooterMismatchError(f"unparseable footer: {exc}") from exc
    if (
        not isinstance(footer, dict)
        or "row_count" not in footer
        or "columns" not in footer
    ):
        raise FooterMismatchError("footer missing required keys")
    if type(footer["row_count"]) is not int or footer["row_count"] < 0:
        raise FooterMismatchError("footer row_count is not a count")
    cols = footer["columns"]
    if not isinstance(cols, dict) or not all(
        isinstance(v, dict) and type(v.get("null_count")) is int for v in cols.values()
    ):
        raise FooterMismatchError("footer column stats malformed")
    return footer, footer_start


def read_footer(data: bytes) -> tuple[int, dict[str, ColumnStats]]:
    """Statistics without a full decode (fixed tail: end-8 magic + length)."""
    footer, _ = _parse_footer(data)
    stats = {
        name: ColumnStats.from_json_dict(obj)
        for name, obj in footer["columns"].items()
    }
    return int(footer["row_count"]), stats


class _Cursor:
    """Sequential column-block walker over one file's bytes."""

    def __init__(self, data: bytes, schema: Schema, row_count: int, start: int, end: int):
        self.data = data
        self.schema = schema
        self.rows = row_count
        self.pos = start
        self.end = end
        self.bitmap_len = (row_count + 7) // 8
        self.bytes_read = 0

    def _take(self, n: int, count: bool) -> memoryview:
        if self.pos + n > self.end:
            raise TruncatedFileError("column block extends past footer")
        view = memoryview(self.data)[self.pos : self.pos + n]
        self.pos += n
        if count:
            self.bytes_read += n
        return view

    def _string_data_len(self) -> int:
        # Final offset is the last u32 of the offsets array.
        off = self.pos + self.rows * 4
        if off + 4 > self.end:
            raise TruncatedFileError("string offsets extend past footer")
        (total,) = struct.unpack_from("<I", self.data, off)
        return total

    def skip_column(self, f: Field) -> None:
        if f.nullable:
            self._take(self.bitmap_len, count=False)
        if f.type in ("INT64", "FLOAT64"):
            self._take(self.rows * 8, count=False)
        elif f.type == "BOOL":
            self._take(self.bitmap_len, count=False)
        else:
            total = self._string_data_len()
            self.bytes_read += 4  # the probe of the final offset
            self._take((self.rows + 1) * 4 + total, count=False)

    def decode_column(self, f: Field) -> list:
        present = None
        if f.nullable:
            bitmap = self._take(self.bitmap_len, count=True)
            present = np.unpackbits(
                np.frombuffer(bitmap, dtype=np.uint8), bitorder="little"
            )[: self.rows].astype(bool)

        if f.type in ("INT64", "FLOAT64"):
            dtype = np.int64 if f.type == "INT64" else np.float64
            raw = self._take(self.rows * 8, count=True)
            values = np.frombuffer(raw, dtype=dtype).tolist()
        elif f.type == "BOOL":
            raw = self._take(self.bitmap_len, count=True)
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
            values = [bool(b) for b in bits[: self.rows]]
        else:
            raw_offsets = self._take((self.rows + 1) * 4, count=True)
            offsets = np.frombuffer(raw_offsets, dtype=np.uint32)
            if self.rows and np.any(np.diff(offsets.astype(np.int64)) < 0):
                raise TruncatedFileError(f"column {f.name}: descending string offsets")
            total = int(offsets[-1]) if len(offsets) else 0
            blob = self._take(total, count=True).tobytes()
            try:
                offs = offsets.tolist()
                values = [
                    blob[offs[i] : offs[i + 1]].decode("utf-8")
                    for i in range(self.rows)
                ]
            except UnicodeDecodeError as exc:
                raise TruncatedFileError(f"column {f.name}: invalid UTF-8") from exc

        if present is not None:
            values = [v if ok else None for v, ok in zip(values, present)]
        return values


def _decode_selected(
    data: bytes, wanted: set[str] | None, reader_schema: Schema | None
) -> tuple[Schema, dict[str, list], int, int]:
    """Decode the wanted columns (all when None). Returns
    (file schema, column values, row_count, bytes_read)."""
    schema, row_count, start = _parse_header(data)
    footer, footer_start = _parse_footer(data)
    if int(footer["row_count"]) != row_count:
        raise FooterMismatchError(
            f"footer row_count {footer['row_count']} != header {row_count}"
        )
    if reader_schema is not None:
        for f in schema.fields:
            if reader_schema.has(f.name) and reader_schema.field(f.name).type != f.type:
                raise TypeMismatchError(
                    f"column {f.name}: reader schema type disagrees with file"
                )

    cur = _Cursor(data, schema, row_count, start, footer_start)
    cur.bytes_read += start  # header + schema block are always read
    columns: dict[str, list] = {}
    for f in schema.fields:
        if wanted is None or f.name in wanted:
            columns[f.name] = cur.decode_column(f)
        else:
            cur.skip_column(f)
    if cur.pos != footer_start:
        raise FooterMismatchError(
            "column blocks do not line up with the footer "
            f"(ended at {cur.pos}, footer at {footer_start})"
        )
    return schema, columns, row_count, cur.bytes_read


def read_file(data: bytes):
    """Fully verifying decode.

    Checks both magics, block extents, the crc32 of everything before
    the footer, the footer/header row-count agreement, and that footer
    statistics equal statistics recomputed from the decoded values.
    Returns (schema, rows, stats, row_count).
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("missing ECF1 header magic")
    footer, footer_start = _parse_footer(data)
    if "crc32" not in footer:
        raise FooterMismatchError("footer missing crc32")
    actual_crc = zlib.crc32(data[:footer_start])
    if actual_crc != footer["crc32"]:
        raise FooterMismatchError(
            f"crc32 mismatch: stored {footer['crc32']}, computed {actual_crc}"
        )

    schema, columns, row_count, _ = _decode_selected(data, None, None)

    stats: dict[str, ColumnStats] = {}
    declared = footer["columns"]
    if set(declared) != set(schema.names()):
        raise FooterMismatchError("footer column set disagrees with schema")
    for f in schema.fields:
        values = columns[f.name]
        non_null = [v for v in values if v is not None]
        recomputed = ColumnStats(
            min=min(non_null) if non_null else None,
            max=max(non_null) if non_null else None,
            null_count=len(values) - len(non_null),
        )
        stored = ColumnStats.from_json_dict(declared[f.name])
        if (
            stored.min != recomputed.min
            or stored.max != recomputed.max
            or stored.null_count != recomputed.null_count
        ):
            raise FooterMismatchError(f"column {f.name}: footer stats disagree")
        stats[f.name] = stored

    names = schema.names()
    rows = list(zip(*(columns[n] for n in names))) if names else [() for _ in range(row_count)]
    return schema, rows, stats, row_count


# ---------------------------------------------------------------------------
# projection + pushdown
# ---------------------------------------------------------------------------


def _compare(a, b, op: str, col: str):
    """Three-valued comparison; None propagates as unknown."""
    if a is None or b is None:
        return None
    ta, tb = type(a), type(b)
    if ta is bool or tb is bool:
        if ta is not bool or tb is not bool:
            raise QueryTypeError(f"column {col}: cannot compare BOOL with {b!r}")
    elif ta is str or tb is str:
        if ta is not str or tb is not str:
            raise QueryTypeError(f"column {col}: cannot compare STRING with {b!r}")
    # remaining: numeric vs numeric
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def eval_predicate(pred: Predicate, get) -> bool | None:
    """Evaluate with SQL three-valued logic; ``get(column)`` yields the value."""
    if isinstance(pred, Comparison):
        return _compare(get(pred.column), pred.value, pred.op, pred.column)
    if isinstance(pred, NullCheck):
        value = get(pred.column)
        return (value is not None) if pred.negate else (value is None)
    if isinstance(pred, And):
        saw_unknown = False
        for part in pred.parts:
            r = eval_predicate(part, get)
            if r is False:
                return False
            if r is None:
                saw_unknown = True
        return None if saw_unknown else True
    if isinstance(pred, Or):
        saw_unknown = False
        for part in pred.parts:
            r = eval_predicate(part, get)
            if r is True:
                return True
            if r is None:
                saw_unknown = True
        return None if saw_unknown else False
    raise TypeError(f"not a predicate: {pred!r}")


def read_columns(
    data: bytes,
    columns: list[str] | None = None,
    reader_schema: Schema | None = None,
) -> tuple[dict[str, list], int, int]:
    """Decode only the named columns (all when None).

    Columns present in ``reader_schema`` but missing from the file are
    served as all-null (additive schema evolution). Returns
    (columns, row_count, bytes_read).
    """
    schema, _, _ = _parse_header(data)
    wanted: set[str] | None = None
    missing: list[str] = []
    if columns is not None:
        wanted = set()
        for name in columns:
            if schema.has(name):
                wanted.add(name)
            elif reader_schema is not None and reader_schema.has(name):
                if not reader_schema.field(name).nullable:
                    raise TypeMismatchError(
                        f"column {name}: absent from file but not nullable"
                    )
                missing.append(name)
            else:
                raise UnknownColumnError(name)
    decoded_schema, cols, row_count, bytes_read = _decode_selected(
        data, wanted, reader_schema
    )
    for name in missing:
        cols[name] = [None] * row_count
    return cols, row_count, bytes_read


def project_read(
    data: bytes,
    columns: list[str] | None = None,
    predicate: Predicate | None = None,
    reader_schema: Schema | None = None,
) -> tuple[list[tuple], ReadCounters]:
    """Project + filter in one pass, decoding only the blocks needed.

    ``columns=None`` selects the full file schema (in schema order).
    Rows where the predicate is not true are dropped.
    """
    schema, _, _ = _parse_header(data)
    out_names = list(columns) if columns is not None else schema.names()
    needed = list(out_names)
    if predicate is not None:
        for name in sorted(columns_of(predicate)):
            if name not in needed:
                needed.append(name)
    cols, row_count, bytes_read = read_columns(data, needed, reader_schema)
    counters = ReadCounters(bytes_read=bytes_read, rows_scanned=row_count)

    out_cols = [cols[n] for n in out_names]
    if predicate is None:
        return list(zip(*out_cols)) if out_cols else [() for _ in range(row_count)], counters

    rows: list[tuple] = []
    for i in range(row_count):
        if eval_predicate(predicate, lambda c, _i=i: cols[c][_i]) is True:
            rows.append(tuple(col[i] for col in out_cols))
    return rows, counters
