"""Data preparation: CSV ingestion and the synthetic POI workload generator.

CSV dialect is pinned so parse errors are testable: comma separators,
double-quote quoting with doubled-quote escape, first line is the
header, UTF-8, LF or CRLF line endings.
"""

from __future__ import annotations

import csv
import math
import random
import time
from dataclasses import dataclass, field

from . import table as tbl
from .ecf import Field, Schema, write_file
from .errors import CsvParseError, SchemaMismatchError, TableExistsError, TableNotFoundError
from .store import ObjectStore

CREATE = "CREATE"
APPEND = "APPEND"
OVERWRITE = "OVERWRITE"

DEFAULT_ROWS_PER_FILE = 100_000

_CSV_KW = dict(quotechar='"', doublequote=True, delimiter=",")


@dataclass
class IngestSpec:
    source: str  # CSV path
    target: str  # table location (store key prefix)
    mode: str = CREATE
    schema: Schema | None = None  # inferred when absent
    rows_per_file: int = DEFAULT_ROWS_PER_FILE

    def __post_init__(self):
        if self.mode not in (CREATE, APPEND, OVERWRITE):
            raise ValueError(f"bad ingest mode: {self.mode!r}")
        if self.rows_per_file < 1:
            raise ValueError("rows_per_file must be positive")


@dataclass
class PoiGenSpec:
    rows: int
    seed: int = 0
    target_prefecture_share: float = 0.021
    target_prefecture: str = "P31"
    cluster_by_prefecture: bool = True
    prefectures: tuple[str, ...] = field(
        default_factory=lambda: tuple(f"P{i:02d}" for i in range(1, 48))
    )
    categories: tuple[str, ...] = field(
        default_factory=lambda: tuple(f"C{i:03d}" for i in range(100))
    )

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        if not 0 < self.target_prefecture_share < 1:
            raise ValueError("share must be a fraction")
        if self.target_prefecture not in self.prefectures:
            raise ValueError("target prefecture not among labels")


POI_SCHEMA = Schema(
    (
        Field("id", "INT64"),
        Field("name", "STRING"),
        Field("prefecture", "STRING"),
        Field("category", "STRING"),
        Field("lat", "FLOAT64"),
        Field("lon", "FLOAT64"),
        Field("rating", "FLOAT64", nullable=True),
        Field("created_ms", "INT64"),
    )
)


# ---------------------------------------------------------------------------
# POI generator
# ---------------------------------------------------------------------------


def _poi_name(rng: random.Random, poi_id: int) -> str:
    # A few shapes that exercise CSV quoting and multi-byte UTF-8.
    if poi_id % 211 == 0:
        return f"poi {poi_id} 食堂"
    if poi_id % 97 == 0:
        return f"poi {poi_id}, annex"
    if poi_id % 53 == 0:
        return f'cafe "{poi_id}"'
    return f"poi_{poi_id:08d}"


def generate_poi(spec: PoiGenSpec, out_path: str) -> int:
    """Write a deterministic POI-shaped CSV; returns the row count.

    Exactly round(rows x share) rows carry the target prefecture; the
    remainder is spread as evenly as possible over the other labels.
    With clustering on, output is sorted by prefecture, which is what
    gives per-file min/max statistics their pruning power.
    """
    rng = random.Random(spec.seed)
    target_count = round(spec.rows * spec.target_prefecture_share)
    others = [p for p in spec.prefectures if p != spec.target_prefecture]
    remaining = spec.rows - target_count
    base, extra = divmod(remaining, len(others))
    counts = {spec.target_prefecture: target_count}
    for i, p in enumerate(others):
        counts[p] = base + (1 if i < extra else 0)

    prefecture_column: list[str] = []
    for p in sorted(spec.prefectures):
        prefecture_column.extend([p] * counts[p])
    if not spec.cluster_by_prefecture:
        rng.shuffle(prefecture_column)

    written = 0
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n", **_CSV_KW)
        writer.writerow([f.name for f in POI_SCHEMA.fields])
        for i, prefecture in enumerate(prefecture_column):
            poi_id = i + 1
            rating = "" if rng.random() < 0.05 else repr(rng.uniform(0.0, 5.0))
            writer.writerow(
                [
                    poi_id,
                    _poi_name(rng, poi_id),
                    prefecture,
                    spec.categories[rng.randrange(len(spec.categories))],
                    repr(rng.uniform(24.0, 46.0)),
                    repr(rng.uniform(123.0, 146.0)),
                    rating,
                    rng.randrange(1_500_000_000_000, 1_700_000_000_000),
                ]
            )
            written += 1
    return written


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------

_BOOL_WORDS = {"true": True, "false": False}


def _is_int(text: str) -> bool:
    if text and text[0] in "+-":
        text = text[1:]
    return text.isdigit()


def _is_float(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return math.isfinite(value)  # "nan"/"inf" stay STRING


def infer_schema(csv_path: str) -> Schema:
    """One pass over the file: INT64 if every non-empty field parses as an
    integer, else FLOAT64 if numeric, else BOOL if all true/false, else
    STRING; a column is nullable iff any field is empty."""
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, **_CSV_KW)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file: no header", 1) from None
        could_int = [True] * len(header)
        could_float = [True] * len(header)
        could_bool = [True] * len(header)
        nullable = [False] * len(header)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvParseError(
                    f"expected {len(header)} fields, found {len(row)}", line_no
                )
            for i, text in enumerate(row):
                if text == "":
                    nullable[i] = True
                    continue
                if could_int[i] and not _is_int(text):
                    could_int[i] = False
                if could_float[i] and not _is_float(text):
                    could_float[i] = False
                if could_bool[i] and text not in _BOOL_WORDS:
                    could_bool[i] = False
    fields = []
    for i, name in enumerate(header):
        if could_int[i]:
            ftype = "INT64"
        elif could_float[i]:
            ftype = "FLOAT64"
        elif could_bool[i]:
            ftype = "BOOL"
        else:
            ftype = "STRING"
        fields.append(Field(name, ftype, nullable[i]))
    try:
        return Schema(tuple(fields))
    except ValueError as exc:
        raise CsvParseError(f"bad header: {exc}", 1) from exc


def _parse_cell(text: str, f: Field, line_no: int):
    if text == "":
        if not f.nullable:
            raise CsvParseError(
                f"column {f.name}: empty field in non-nullable column", line_no
            )
        return None
    try:
        if f.type == "INT64":
            return int(text)
        if f.type == "FLOAT64":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
        if f.type == "BOOL":
            return _BOOL_WORDS[text]
        return text
    except (ValueError, KeyError):
        raise CsvParseError(
            f"column {f.name}: cannot parse {text!r} as {f.type}", line_no
        ) from None


def parse_csv(csv_path: str, schema: Schema):
    """Yield typed rows; raises CsvParseError with the 1-based line number."""
    names = schema.names()
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, **_CSV_KW)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file: no header", 1) from None
        if header != names:
            raise CsvParseError(
                f"header {header!r} does not match schema columns {names!r}", 1
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise CsvParseError(
                    f"expected {len(names)} fields, found {len(row)}", line_no
                )
            yield tuple(
                _parse_cell(text, f, line_no) for text, f in zip(row, schema.fields)
            )


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def _chunks(iterable, size):
    chunk = []
    for item in iterable:
        chunk.append(item)
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def ingest(store: ObjectStore, spec: IngestSpec) -> tbl.Snapshot | None:
    """Load a CSV into a table as one commit of <= rows_per_file chunks.

    CREATE makes the table (error if present); APPEND / OVERWRITE
    require it. A zero-row CSV creates the table but commits no
    snapshot in CREATE mode and is a no-op in APPEND mode.
    """
    location = spec.target.rstrip("/")
    exists = store.exists(tbl.pointer_key(location))
    if spec.mode == CREATE and exists:
        raise TableExistsError(location)
    if spec.mode in (APPEND, OVERWRITE) and not exists:
        raise TableNotFoundError(location)

    if spec.mode == CREATE:
        schema = spec.schema if spec.schema is not None else infer_schema(spec.source)
        tbl.create_table(store, location, schema)
        meta, _ = tbl.load_table(store, location)
        schema = meta.schema()
    else:
        meta, _ = tbl.load_table(store, location)
        schema = meta.schema()
        if spec.schema is not None and spec.schema.fields != schema.fields:
            raise SchemaMismatchError(
                "provided schema does not match the table's current schema"
            )

    # Sortable names: the deterministic scan order (sorted by data path)
    # then replays ingest order.
    stamp = f"{time.time_ns() // 1_000_000:013d}"
    entries = []
    for index, chunk in enumerate(_chunks(parse_csv(spec.source, schema), spec.rows_per_file)):
        data, stats, count = write_file(schema, chunk)
        path = f"{location}/data/{stamp}-{index:06d}-{random.getrandbits(32):08x}.ecf"
        store.put(path, data)
        entries.append(
            tbl.ManifestEntry(
                data_path=path,
                row_count=count,
                file_size=len(data),
                schema_id=schema.schema_id,
                stats=stats,
            )
        )

    if not entries:
        _, snap = tbl.load_table(store, location)
        return snap  # zero-row ingest: no snapshot committed

    operation = tbl.OVERWRITE if spec.mode == OVERWRITE else tbl.APPEND
    return tbl.commit(store, location, operation, entries, schema.schema_id)
