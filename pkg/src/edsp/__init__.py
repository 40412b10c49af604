"""edsp: write-once, read-anywhere tables on a pluggable object store.

One canonical table per dataset; every commit swaps a fixed-name
pointer file through a compare-and-swap, so independent engines (the
SQL executor, the programmatic scanner, and any external reader that
speaks the documented formats) read the same bytes in place.
"""

from . import predicates
from .catalog import Catalog
from .ecf import ColumnStats, Field, Schema, project_read, read_file, read_footer, write_file
from .errors import EdspError
from .prep import IngestSpec, PoiGenSpec, generate_poi, infer_schema, ingest
from .scanapi import ScanStream, aggregate, scan
from .sqlexec import EngineSession, QueryResult, execute
from .sqlparser import parse
from .store import LocalStore, MemoryStore, ObjectStore, open_store
from .table import (
    ManifestEntry,
    PointerFile,
    Snapshot,
    TableMetadata,
    commit,
    create_table,
    evolve_schema,
    load_table,
    plan_scan,
)

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "ColumnStats",
    "EdspError",
    "EngineSession",
    "Field",
    "IngestSpec",
    "LocalStore",
    "ManifestEntry",
    "MemoryStore",
    "ObjectStore",
    "PointerFile",
    "PoiGenSpec",
    "QueryResult",
    "ScanStream",
    "Schema",
    "Snapshot",
    "TableMetadata",
    "aggregate",
    "commit",
    "create_table",
    "evolve_schema",
    "execute",
    "generate_poi",
    "infer_schema",
    "ingest",
    "load_table",
    "open_store",
    "parse",
    "plan_scan",
    "predicates",
    "project_read",
    "read_file",
    "read_footer",
    "scan",
    "write_file",
]
