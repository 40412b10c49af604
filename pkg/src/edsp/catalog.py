"""Dataset registry, per-engine access snippets, and a read-only HTTP facade.

The catalog is one JSON file (``catalog.json``) at the store root,
updated through the store's compare-and-swap primitive. Registering a
dataset is metadata-only: nothing under any table root is touched,
which is exactly what makes onboarding a configuration-only change.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import table as tbl
from .errors import (
    BlobNotFoundError,
    DuplicateNameError,
    InvalidTableError,
    PreconditionFailedError,
    TableNotFoundError,
    UnknownEngineError,
    UnknownEntryError,
)
from .store import ObjectStore

CATALOG_KEY = "catalog.json"

# Engine id -> one-line access snippet. Data-driven on purpose: adding
# an engine means adding a template, not code.
SNIPPET_TEMPLATES: dict[str, str] = {
    "sql": "CREATE EXTERNAL TABLE {name} LOCATION '{location}' FORMAT EDSP_ICE_V1;",
    "scan": "edsp scan --table-root '{location}' --limit 10",
    "reader": "edsp-reader --table-root '{location}' --pattern q1 --format json",
}


@dataclass
class CatalogEntry:
    name: str
    location: str
    description: str = ""
    update_cadence: str = ""
    owner: str = ""
    registered_engines: tuple[str, ...] = ("sql", "scan", "reader")
    created_ms: int = 0

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "location": self.location,
            "description": self.description,
            "update-cadence": self.update_cadence,
            "owner": self.owner,
            "registered-engines": list(self.registered_engines),
            "created-ms": self.created_ms,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CatalogEntry":
        return cls(
            name=obj["name"],
            location=obj["location"],
            description=obj.get("description", ""),
            update_cadence=obj.get("update-cadence", ""),
            owner=obj.get("owner", ""),
            registered_engines=tuple(obj.get("registered-engines", ())),
            created_ms=int(obj.get("created-ms", 0)),
        )


class Catalog:
    def __init__(self, store: ObjectStore):
        self.store = store

    # -- persistence ------------------------------------------------------

    def _load(self) -> tuple[list[CatalogEntry], str | None]:
        try:
            raw, token = self.store.get_with_token(CATALOG_KEY)
        except BlobNotFoundError:
            return [], None
        entries = [CatalogEntry.from_json_dict(e) for e in json.loads(raw)["entries"]]
        return entries, token

    def _save(self, entries: list[CatalogEntry], token: str | None):
        payload = json.dumps(
            {"entries": [e.to_json_dict() for e in entries]},
            separators=(",", ":"),
            ensure_ascii=False,
        ).encode("utf-8")
        self.store.put_if_matches(CATALOG_KEY, payload, token)

    # -- operations -------------------------------------------------------

    def register(
        self,
        name: str,
        location: str,
        description: str = "",
        update_cadence: str = "",
        owner: str = "",
        engines: tuple[str, ...] = ("sql", "scan", "reader"),
    ) -> CatalogEntry:
        location = location.rstrip("/")
        for engine in engines:
            if engine not in SNIPPET_TEMPLATES:
                raise UnknownEngineError(engine)
        try:
            tbl.read_pointer(self.store, location)
        except (TableNotFoundError, ValueError, KeyError) as exc:
            raise InvalidTableError(f"{location}: {exc}") from exc
        while True:
            entries, token = self._load()
            if any(e.name == name for e in entries):
                raise DuplicateNameError(name)
            entry = CatalogEntry(
                name=name,
                location=location,
                description=description,
                update_cadence=update_cadence,
                owner=owner,
                registered_engines=tuple(engines),
                created_ms=time.time_ns() // 1_000_000,
            )
            try:
                self._save(entries + [entry], token)
                return entry
            except PreconditionFailedError:
                continue  # racing registration; reload and retry

    def list(self) -> list[CatalogEntry]:
        entries, _ = self._load()
        return sorted(entries, key=lambda e: e.name)

    def get(self, name: str) -> CatalogEntry:
        for entry in self.list():
            if entry.name == name:
                return entry
        raise UnknownEntryError(name)

    def resolve(self, name: str) -> str | None:
        """Resolver hook for the SQL engine: name -> location or None."""
        try:
            return self.get(name).location
        except UnknownEntryError:
            return None

    def snippet(self, name: str, engine: str) -> str:
        entry = self.get(name)
        key = engine.lower()
        if key not in SNIPPET_TEMPLATES:
            raise UnknownEngineError(engine)
        return SNIPPET_TEMPLATES[key].format(name=entry.name, location=entry.location)

    def snippets(self, name: str) -> dict[str, str]:
        entry = self.get(name)
        return {
            engine: self.snippet(name, engine) for engine in entry.registered_engines
        }

    def describe(self, name: str) -> dict:
        """Entry plus live table state: schema, snapshot summary, snippets."""
        entry = self.get(name)
        meta, snapshot = tbl.load_table(self.store, entry.location)
        desc = entry.to_json_dict()
        desc["schema"] = meta.schema().to_json_dict()
        if snapshot is not None:
            manifest = tbl.read_manifest(self.store, snapshot)
            desc["snapshot"] = {
                "snapshot-id": snapshot.snapshot_id,
                "sequence": snapshot.sequence,
                "timestamp-ms": snapshot.timestamp_ms,
                "operation": snapshot.operation,
                "data-files": len(manifest),
                "row-count": sum(e.row_count for e in manifest),
            }
        else:
            desc["snapshot"] = None
        desc["snippets"] = self.snippets(name)
        return desc


def table_roots_digest(store: ObjectStore, locations: list[str]) -> str:
    """Order-independent digest of every byte under the given table roots.

    The oracle for "registration touches no table bytes".
    """
    digest = hashlib.sha256()
    for location in sorted(set(loc.rstrip("/") for loc in locations)):
        for key in store.list(location + "/"):
            digest.update(key.encode("utf-8"))
            digest.update(hashlib.sha256(store.get(key)).digest())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# HTTP facade (read-only)
# ---------------------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    catalog: Catalog = None  # set per server

    def _send(self, code: int, payload):
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        path = self.path.rstrip("/") or "/"
        try:
            if path == "/tables":
                self._send(200, [e.to_json_dict() for e in self.catalog.list()])
            elif path.startswith("/tables/") and path.count("/") == 2:
                name = path.split("/")[2]
                try:
                    self._send(200, self.catalog.describe(name))
                except UnknownEntryError:
                    self._send(404, {"error": f"unknown table {name!r}"})
            else:
                self._send(404, {"error": "not found"})
        except Exception as exc:  # defensive: a facade must not crash
            self._send(500, {"error": str(exc)})

    def _reject(self):
        self._send(405, {"error": "read-only catalog: GET only"})

    do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = _reject

    def log_message(self, *args):  # quiet by default
        pass


def serve(catalog: Catalog, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Start the read-only facade on a daemon thread; returns the server
    (``server.server_address`` carries the bound port; call
    ``shutdown()`` to stop)."""
    handler = type("BoundHandler", (_Handler,), {"catalog": catalog})
    server = ThreadingHTTPServer((host, port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
