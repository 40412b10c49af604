"""Table format: snapshots, manifests, and ACID commits through a
fixed-name pointer file.

Metadata filenames change with every commit, so readers resolve state
exclusively through ``<location>/metadata/latest.metadata.json``, which
is swapped with a compare-and-swap on each commit. Store layout:

    <location>/metadata/latest.metadata.json      pointer (fixed name)
    <location>/metadata/v<seq>-<uuid>.metadata.json
    <location>/metadata/snap-<id>.manifest.json   manifest (entry array)
    <location>/data/<uuid>.ecf                    data files

The pointer sequence is the metadata version: table creation writes
version 1 with zero snapshots, the first data commit writes version 2
carrying snapshot sequence 1. JSON field names here are normative for
independent readers.
"""

from __future__ import annotations

import json
import random
import threading
import time
import uuid as uuidlib
from dataclasses import dataclass, field, replace

from .ecf import ColumnStats, Schema
from .errors import (
    BlobNotFoundError,
    CommitConflictError,
    DuplicateColumnError,
    NoSnapshotBeforeTimestampError,
    PreconditionFailedError,
    SchemaMismatchError,
    TableExistsError,
    TableNotFoundError,
    UnknownColumnError,
    UnknownSnapshotError,
)
from .predicates import Comparison, NullCheck, Predicate, columns_of, conjuncts
from .store import ObjectStore, validate_key

POINTER_NAME = "latest.metadata.json"
APPEND = "APPEND"
OVERWRITE = "OVERWRITE"
DEFAULT_MAX_RETRIES = 10


def pointer_key(location: str) -> str:
    return f"{location}/metadata/{POINTER_NAME}"


@dataclass(frozen=True)
class ManifestEntry:
    data_path: str
    row_count: int
    file_size: int
    schema_id: int
    stats: dict[str, ColumnStats]

    def to_json_dict(self) -> dict:
        return {
            "data-path": self.data_path,
            "row-count": self.row_count,
            "file-size": self.file_size,
            "schema-id": self.schema_id,
            "stats": {name: s.to_json_dict() for name, s in self.stats.items()},
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ManifestEntry":
        return cls(
            data_path=obj["data-path"],
            row_count=int(obj["row-count"]),
            file_size=int(obj["file-size"]),
            schema_id=int(obj["schema-id"]),
            stats={
                name: ColumnStats.from_json_dict(s)
                for name, s in obj["stats"].items()
            },
        )


@dataclass(frozen=True)
class Snapshot:
    snapshot_id: int
    parent_id: int | None
    sequence: int
    timestamp_ms: int
    operation: str
    manifest_path: str
    schema_id: int

    def to_json_dict(self) -> dict:
        return {
            "snapshot-id": self.snapshot_id,
            "parent-id": self.parent_id,
            "sequence": self.sequence,
            "timestamp-ms": self.timestamp_ms,
            "operation": self.operation,
            "manifest-path": self.manifest_path,
            "schema-id": self.schema_id,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Snapshot":
        return cls(
            snapshot_id=int(obj["snapshot-id"]),
            parent_id=None if obj["parent-id"] is None else int(obj["parent-id"]),
            sequence=int(obj["sequence"]),
            timestamp_ms=int(obj["timestamp-ms"]),
            operation=obj["operation"],
            manifest_path=obj["manifest-path"],
            schema_id=int(obj["schema-id"]),
        )


@dataclass(frozen=True)
class TableMetadata:
    table_uuid: str
    location: str
    sequence: int  # metadata version; equals the pointer sequence
    schemas: tuple[Schema, ...]
    current_schema_id: int
    snapshots: tuple[Snapshot, ...]
    current_snapshot_id: int | None
    format_version: int = 1

    def schema(self, schema_id: int | None = None) -> Schema:
        wanted = self.current_schema_id if schema_id is None else schema_id
        for s in self.schemas:
            if s.schema_id == wanted:
                return s
        raise SchemaMismatchError(f"no schema with id {wanted}")

    def snapshot(self, snapshot_id: int) -> Snapshot:
        for s in self.snapshots:
            if s.snapshot_id == snapshot_id:
                return s
        raise UnknownSnapshotError(str(snapshot_id))

    @property
    def current_snapshot(self) -> Snapshot | None:
        if self.current_snapshot_id is None:
            return None
        return self.snapshot(self.current_snapshot_id)

    def to_json_dict(self) -> dict:
        return {
            "format-version": self.format_version,
            "table-uuid": self.table_uuid,
            "location": self.location,
            "sequence": self.sequence,
            "schemas": [s.to_json_dict() for s in self.schemas],
            "current-schema-id": self.current_schema_id,
            "snapshots": [s.to_json_dict() for s in self.snapshots],
            "current-snapshot-id": self.current_snapshot_id,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TableMetadata":
        return cls(
            table_uuid=obj["table-uuid"],
            location=obj["location"],
            sequence=int(obj["sequence"]),
            schemas=tuple(Schema.from_json_dict(s) for s in obj["schemas"]),
            current_schema_id=int(obj["current-schema-id"]),
            snapshots=tuple(Snapshot.from_json_dict(s) for s in obj["snapshots"]),
            current_snapshot_id=(
                None
                if obj["current-snapshot-id"] is None
                else int(obj["current-snapshot-id"])
            ),
            format_version=int(obj["format-version"]),
        )


@dataclass(frozen=True)
class PointerFile:
    metadata_file: str
    sequence: int
    table_uuid: str

    def to_json_dict(self) -> dict:
        return {
            "metadata-file": self.metadata_file,
            "sequence": self.sequence,
            "table-uuid": self.table_uuid,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PointerFile":
        return cls(obj["metadata-file"], int(obj["sequence"]), obj["table-uuid"])


def _dump(obj: dict | list) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _metadata_key(location: str, sequence: int) -> str:
    return f"{location}/metadata/v{sequence}-{uuidlib.uuid4().hex}.metadata.json"


def _write_metadata(store: ObjectStore, meta: TableMetadata) -> str:
    key = _metadata_key(meta.location, meta.sequence)
    store.put(key, _dump(meta.to_json_dict()))
    return key


# ---------------------------------------------------------------------------
# create / load
# ---------------------------------------------------------------------------


def create_table(store: ObjectStore, location: str, schema: Schema) -> TableMetadata:
    """Create an empty table: metadata version 1 plus the pointer file."""
    location = validate_key(location).rstrip("/")
    ptr_key = pointer_key(location)
    if store.exists(ptr_key):
        raise TableExistsError(location)
    schema = replace(schema, schema_id=0) if schema.schema_id != 0 else schema
    meta = TableMetadata(
        table_uuid=str(uuidlib.uuid4()),
        location=location,
        sequence=1,
        schemas=(schema,),
        current_schema_id=0,
        snapshots=(),
        current_snapshot_id=None,
    )
    meta_key = _write_metadata(store, meta)
    pointer = PointerFile(meta_key, 1, meta.table_uuid)
    try:
        store.put_if_matches(ptr_key, _dump(pointer.to_json_dict()), None)
    except PreconditionFailedError:
        raise TableExistsError(location) from None
    return meta


def read_pointer(store: ObjectStore, location: str) -> tuple[PointerFile, str]:
    """Resolve the pointer; returns (pointer, conditional token)."""
    try:
        raw, token = store.get_with_token(pointer_key(location))
    except BlobNotFoundError:
        raise TableNotFoundError(location) from None
    return PointerFile.from_json_dict(json.loads(raw)), token


def load_table(
    store: ObjectStore,
    location: str,
    snapshot_id: int | None = None,
    as_of_ms: int | None = None,
) -> tuple[TableMetadata, Snapshot | None]:
    """Load table state, resolving only through the fixed-name pointer.

    ``snapshot_id`` selects that snapshot; ``as_of_ms`` selects the
    greatest snapshot with timestamp_ms <= the bound; neither selects
    the current snapshot (absent on a fresh table).
    """
    location = location.rstrip("/")
    pointer, _ = read_pointer(store, location)
    meta = TableMetadata.from_json_dict(json.loads(store.get(pointer.metadata_file)))
    if snapshot_id is not None and as_of_ms is not None:
        raise ValueError("pass at most one of snapshot_id / as_of_ms")
    if snapshot_id is not None:
        return meta, meta.snapshot(snapshot_id)
    if as_of_ms is not None:
        eligible = [s for s in meta.snapshots if s.timestamp_ms <= as_of_ms]
        if not eligible:
            raise NoSnapshotBeforeTimestampError(str(as_of_ms))
        return meta, max(eligible, key=lambda s: s.sequence)
    return meta, meta.current_snapshot


def read_manifest(store: ObjectStore, snapshot: Snapshot) -> list[ManifestEntry]:
    entries = json.loads(store.get(snapshot.manifest_path))
    return [ManifestEntry.from_json_dict(e) for e in entries]


# ---------------------------------------------------------------------------
# commit
# ---------------------------------------------------------------------------


def _fresh_snapshot_id(existing: tuple[Snapshot, ...]) -> int:
    # Random within the 53-bit safe-integer range: snapshot ids travel
    # through JSON and must parse losslessly in any reader language.
    taken = {s.snapshot_id for s in existing}
    while True:
        sid = random.getrandbits(53)
        if sid and sid not in taken:
            return sid


# Same-process commit attempts serialize through an advisory mutex so
# thread herds make steady progress instead of re-colliding on the CAS.
# The pointer CAS stays the only commit point: writers in other
# processes still conflict and rebase through the retry loop.
_COMMIT_MUTEXES: dict[tuple[str, str], threading.Lock] = {}
_COMMIT_MUTEXES_GUARD = threading.Lock()


def _commit_mutex(store: ObjectStore, location: str) -> threading.Lock:
    scope = str(getattr(store, "root", id(store)))
    key = (scope, location)
    with _COMMIT_MUTEXES_GUARD:
        lock = _COMMIT_MUTEXES.get(key)
        if lock is None:
            lock = _COMMIT_MUTEXES[key] = threading.Lock()
        return lock


def commit(
    store: ObjectStore,
    location: str,
    operation: str,
    new_entries: list[ManifestEntry],
    expected_schema_id: int,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> Snapshot:
    """Commit a batch of already-durable data files.

    APPEND unions the parent manifest with the new entries; OVERWRITE
    replaces it. The only commit point is the pointer CAS; on conflict
    the commit rebases off the fresh pointer and retries. Data files
    are never rewritten on retry.
    """
    if operation not in (APPEND, OVERWRITE):
        raise ValueError(f"bad operation: {operation!r}")
    location = location.rstrip("/")
    for entry in new_entries:
        if entry.schema_id != expected_schema_id:
            raise SchemaMismatchError(
                f"entry {entry.data_path} has schema_id {entry.schema_id}, "
                f"expected {expected_schema_id}"
            )
        if not store.exists(entry.data_path):
            raise BlobNotFoundError(entry.data_path)

    mutex = _commit_mutex(store, location)
    for attempt in range(max_retries + 1):
        began = time.perf_counter()
        with mutex:
            pointer, token = read_pointer(store, location)
            meta = TableMetadata.from_json_dict(
                json.loads(store.get(pointer.metadata_file))
            )
            if meta.current_schema_id != expected_schema_id:
                raise SchemaMismatchError(
                    f"table is at schema {meta.current_schema_id}, "
                    f"commit built against {expected_schema_id}"
                )
            parent = meta.current_snapshot
            if operation == APPEND and parent is not None:
                manifest = read_manifest(store, parent) + list(new_entries)
            else:
                manifest = list(new_entries)

            snapshot_id = _fresh_snapshot_id(meta.snapshots)
            manifest_key = f"{location}/metadata/snap-{snapshot_id}.manifest.json"
            store.put(manifest_key, _dump([e.to_json_dict() for e in manifest]))

            snapshot = Snapshot(
                snapshot_id=snapshot_id,
                parent_id=parent.snapshot_id if parent else None,
                sequence=(parent.sequence if parent else 0) + 1,
                timestamp_ms=max(_now_ms(), parent.timestamp_ms if parent else 0),
                operation=operation,
                manifest_path=manifest_key,
                schema_id=expected_schema_id,
            )
            new_meta = replace(
                meta,
                sequence=meta.sequence + 1,
                snapshots=meta.snapshots + (snapshot,),
                current_snapshot_id=snapshot_id,
            )
            meta_key = _write_metadata(store, new_meta)
            new_pointer = PointerFile(meta_key, new_meta.sequence, meta.table_uuid)
            try:
                store.put_if_matches(
                    pointer_key(location), _dump(new_pointer.to_json_dict()), token
                )
                return snapshot
            except PreconditionFailedError:
                pass  # a writer in another process won; rebase below
        # Jittered backoff scaled to this attempt's duration: sleeps must
        # exceed the race window or herds of writers re-collide forever.
        _conflict_backoff(attempt, time.perf_counter() - began)
    raise CommitConflictError(
        f"gave up after {max_retries} retries on {location}"
    )


def _conflict_backoff(attempt: int, attempt_seconds: float) -> None:
    base = max(attempt_seconds, 0.0005)
    time.sleep(random.uniform(0, min(0.25, base * (1 << attempt))))


def evolve_schema(
    store: ObjectStore,
    location: str,
    name: str,
    col_type: str,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> Schema:
    """Add a column (forced nullable) through the same pointer-CAS path.

    Older data files are later read with the new column as all-null.
    """
    from .ecf import TYPES, Field  # local to keep module top uncluttered

    if col_type not in TYPES:
        raise SchemaMismatchError(f"unknown column type: {col_type!r}")
    location = location.rstrip("/")
    mutex = _commit_mutex(store, location)
    for attempt in range(max_retries + 1):
        began = time.perf_counter()
        with mutex:
            pointer, token = read_pointer(store, location)
            meta = TableMetadata.from_json_dict(
                json.loads(store.get(pointer.metadata_file))
            )
            current = meta.schema()
            if current.has(name):
                raise DuplicateColumnError(name)
            try:
                new_schema = Schema(
                    current.fields + (Field(name, col_type, nullable=True),),
                    schema_id=current.schema_id + 1,
                )
            except ValueError as exc:
                raise SchemaMismatchError(str(exc)) from exc
            new_meta = replace(
                meta,
                sequence=meta.sequence + 1,
                schemas=meta.schemas + (new_schema,),
                current_schema_id=new_schema.schema_id,
            )
            meta_key = _write_metadata(store, new_meta)
            new_pointer = PointerFile(meta_key, new_meta.sequence, meta.table_uuid)
            try:
                store.put_if_matches(
                    pointer_key(location), _dump(new_pointer.to_json_dict()), token
                )
                return new_schema
            except PreconditionFailedError:
                pass
        _conflict_backoff(attempt, time.perf_counter() - began)
    raise CommitConflictError(f"gave up after {max_retries} retries on {location}")


# ---------------------------------------------------------------------------
# scan planning (zone-map pruning)
# ---------------------------------------------------------------------------


@dataclass
class PruneReport:
    files_considered: int = 0
    files_pruned: int = 0


def _interval_excludes(stats: ColumnStats, row_count: int, pred) -> bool:
    """True when the file's [min, max] / null counts prove no row matches."""
    if isinstance(pred, NullCheck):
        if pred.negate:  # IS NOT NULL
            return stats.null_count == row_count
        return stats.null_count == 0
    if not isinstance(pred, Comparison):
        return False
    if stats.min is None:  # all null (or empty): no comparison can be true
        return True
    lo, hi, v = stats.min, stats.max, pred.value
    if isinstance(v, bool) != isinstance(lo, bool) or isinstance(v, str) != isinstance(
        lo, str
    ):
        return False  # mixed types: leave to the executor's type check
    op = pred.op
    if op == "=":
        return v < lo or v > hi
    if op == "!=":
        return lo == hi == v  # every non-null value equals v; nulls never match
    if op == "<":
        return lo >= v
    if op == "<=":
        return lo > v
    if op == ">":
        return hi <= v
    return hi < v  # >=


def plan_scan(
    store: ObjectStore,
    meta: TableMetadata,
    snapshot: Snapshot | None,
    predicate: Predicate | None = None,
    prune: bool = True,
    schema: Schema | None = None,
) -> tuple[list[ManifestEntry], PruneReport]:
    """Select the manifest entries a scan must read.

    A file is pruned when, for some top-level AND-conjunct on a single
    column, its statistics prove the conjunct can match no row. Entries
    come back sorted by data path: the deterministic scan order.
    ``schema`` is the caller's effective read schema (defaults to the
    snapshot's recorded one).
    """
    report = PruneReport()
    if snapshot is None:
        return [], report
    if schema is None:
        schema = meta.schema(snapshot.schema_id)
    if predicate is not None:
        for col in sorted(columns_of(predicate)):
            if not schema.has(col):
                raise UnknownColumnError(col)
    entries = sorted(read_manifest(store, snapshot), key=lambda e: e.data_path)
    report.files_considered = len(entries)
    if predicate is None or not prune:
        return entries, report

    simple = [
        p for p in conjuncts(predicate) if isinstance(p, (Comparison, NullCheck))
    ]
    kept: list[ManifestEntry] = []
    for entry in entries:
        pruned = False
        for p in simple:
            stats = entry.stats.get(p.column)
            if stats is None:
                # Column added after this file was written: every value null.
                stats = ColumnStats(None, None, entry.row_count)
            if _interval_excludes(stats, entry.row_count, p):
                pruned = True
                break
        if pruned:
            report.files_pruned += 1
        else:
            kept.append(entry)
    return kept, report


# ---------------------------------------------------------------------------
# replica audit
# ---------------------------------------------------------------------------


@dataclass
class ByteCensus:
    """Point-in-time byte counts: the whole store plus declared scratch areas."""

    store_bytes: int
    store_objects: int
    scratch_bytes: dict[str, int] = field(default_factory=dict)

    @classmethod
    def take(cls, store: ObjectStore, scratch_dirs: dict[str, str] | None = None):
        total = objects = 0
        for key in store.list(""):
            total += store.size(key)
            objects += 1
        scratch = {}
        for engine, path in (scratch_dirs or {}).items():
            scratch[engine] = _dir_bytes(path)
        return cls(total, objects, scratch)


def _dir_bytes(path: str) -> int:
    import os

    total = 0
    for dirpath, _dirnames, filenames in os.walk(path):
        for name in filenames:
            total += os.path.getsize(os.path.join(dirpath, name))
    return total


@dataclass
class ReplicaReport:
    roots_per_dataset: dict[str, list[str]]
    scratch_deltas: dict[str, int]
    store_delta_bytes: int | None
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def find_table_roots(store: ObjectStore) -> dict[str, str]:
    """Map of table root prefix -> table uuid, discovered via pointer files."""
    suffix = f"/metadata/{POINTER_NAME}"
    roots = {}
    for key in store.list(""):
        if key.endswith(suffix):
            pointer = PointerFile.from_json_dict(json.loads(store.get(key)))
            roots[key[: -len(suffix)]] = pointer.table_uuid
    return roots


def audit_replicas(
    store: ObjectStore,
    datasets: dict[str, str],
    scratch_dirs: dict[str, str] | None = None,
    baseline: ByteCensus | None = None,
) -> ReplicaReport:
    """Verify the single-durable-replica property.

    ``datasets`` maps dataset name -> registered table root. A dataset
    with more than one root carrying its table uuid, or any scratch
    area that grew since ``baseline``, is a violation.
    """
    violations: list[str] = []
    roots = find_table_roots(store)
    per_dataset: dict[str, list[str]] = {}
    for name, location in datasets.items():
        location = location.rstrip("/")
        uuid = roots.get(location)
        if uuid is None:
            violations.append(f"dataset {name}: no table at {location}")
            per_dataset[name] = []
            continue
        matching = sorted(root for root, u in roots.items() if u == uuid)
        per_dataset[name] = matching
        if len(matching) != 1:
            violations.append(
                f"dataset {name}: {len(matching)} roots share table uuid ({matching})"
            )

    current = ByteCensus.take(store, scratch_dirs)
    deltas: dict[str, int] = {}
    store_delta = None
    if baseline is not None:
        store_delta = current.store_bytes - baseline.store_bytes
        for engine, after in current.scratch_bytes.items():
            before = baseline.scratch_bytes.get(engine, 0)
            deltas[engine] = after - before
            if after - before != 0:
                violations.append(
                    f"engine {engine}: scratch area changed by {after - before} bytes"
                )
    else:
        for engine, after in current.scratch_bytes.items():
            deltas[engine] = after
            if after != 0:
                violations.append(f"engine {engine}: scratch area holds {after} bytes")

    return ReplicaReport(per_dataset, deltas, store_delta, violations)
