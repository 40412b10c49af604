"""Evaluation harness: latency percentiles, cross-engine consistency,
Write-Once audits.

Absolute latencies of the paper's cloud engines are not reproduction
targets; the harness reproduces the methodology (30 cold runs, p50/p95,
Table-shaped report) and the ordering/consistency properties. A result
set must pass the consistency matrix before its timings are reported:
never time a wrong answer.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import subprocess
import sys
from dataclasses import dataclass, field

from . import table as tbl
from .patterns import PATTERNS, pattern_sql, run_pattern_scan, with_defaults
from .sqlexec import EngineSession
from .store import LocalStore, ObjectStore

DEFAULT_RUNS = 30
FLOAT_REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# canonicalization
# ---------------------------------------------------------------------------


def _sort_key(row: tuple):
    key = []
    for v in row:
        if v is None:
            key.append((1, 0, 0))  # nulls last
        elif isinstance(v, bool):
            key.append((0, 0, v))
        elif isinstance(v, (int, float)):
            key.append((0, 1, v))
        else:
            key.append((0, 2, v))
    return tuple(key)


def canonicalize(rows: list[tuple]) -> list[tuple]:
    """Total order over rows: type-tagged values, nulls last."""
    return sorted(rows, key=_sort_key)


def _value_repr(v) -> str:
    if v is None:
        return "n"
    if isinstance(v, bool):
        return "b:" + ("1" if v else "0")
    if isinstance(v, int):
        return f"i:{v}"
    if isinstance(v, float):
        return f"f:{v!r}"
    return "s:" + v


def canonical_digest(columns: list[str], rows: list[tuple]) -> str:
    h = hashlib.sha256()
    h.update("\x1e".join(columns).encode("utf-8"))
    for row in canonicalize(rows):
        h.update(b"\x1d")
        h.update("\x1f".join(_value_repr(v) for v in row).encode("utf-8"))
    return h.hexdigest()


def _values_match(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, float) or isinstance(b, float):
        if not isinstance(a, (int, float)) or not isinstance(b, (int, float)):
            return False
        return math.isclose(a, b, rel_tol=FLOAT_REL_TOL, abs_tol=0.0)
    return type(a) is type(b) and a == b


def rows_equal(rows_a: list[tuple], rows_b: list[tuple]) -> str | None:
    """None when canonically equal; otherwise a human-readable mismatch."""
    if len(rows_a) != len(rows_b):
        return f"row count {len(rows_a)} != {len(rows_b)}"
    for i, (ra, rb) in enumerate(zip(canonicalize(rows_a), canonicalize(rows_b))):
        if len(ra) != len(rb):
            return f"row {i}: width {len(ra)} != {len(rb)}"
        for j, (va, vb) in enumerate(zip(ra, rb)):
            if not _values_match(va, vb):
                return f"row {i} col {j}: {va!r} != {vb!r}"
    return None


def percentile(values: list[float], q: float) -> float:
    """Linear interpolation between closest ranks (numpy's default)."""
    if not values:
        raise ValueError("no values")
    xs = sorted(values)
    if len(xs) == 1:
        return xs[0]
    rank = (len(xs) - 1) * q / 100.0
    lo = int(math.floor(rank))
    hi = min(lo + 1, len(xs) - 1)
    frac = rank - lo
    return xs[lo] + (xs[hi] - xs[lo]) * frac


# ---------------------------------------------------------------------------
# engine adapters
# ---------------------------------------------------------------------------


@dataclass
class RunOutcome:
    columns: list[str]
    rows: list[tuple] | None  # None when only a digest travelled
    digest: str
    counters: dict
    wall_time_ms: float


class EngineAdapter:
    """One query engine as seen by the harness."""

    name: str

    def run(self, store_root, location, pattern, params, prune=True) -> RunOutcome:
        raise NotImplementedError


class SqlEngine(EngineAdapter):
    name = "sql"

    def run(self, store_root, location, pattern, params, prune=True) -> RunOutcome:
        store = _open(store_root)
        session = EngineSession(store)
        session.register("bench_target", location)
        sql = pattern_sql(pattern, "bench_target", params)
        result = session.sql(sql, prune=prune)
        return RunOutcome(
            columns=result.columns,
            rows=result.rows,
            digest=canonical_digest(result.columns, result.rows),
            counters=result.counters.to_json_dict(),
            wall_time_ms=result.counters.wall_time_ms,
        )


class ScanEngine(EngineAdapter):
    name = "scan"

    def run(self, store_root, location, pattern, params, prune=True) -> RunOutcome:
        store = _open(store_root)
        columns, rows, counters = run_pattern_scan(
            store, location, pattern, params, prune=prune
        )
        return RunOutcome(
            columns=columns,
            rows=rows,
            digest=canonical_digest(columns, rows),
            counters=counters.to_json_dict(),
            wall_time_ms=counters.wall_time_ms,
        )


class SubprocessEngine(EngineAdapter):
    """An engine invoked as a fresh process per run (the cold path).

    The child must print one JSON object on stdout:
    {"columns": [...], "rows": [[...]] | null, "digest": str | null,
     "counters": {...}, "wall_time_ms": float}
    Rows or digest must be present; typed row values survive JSON.
    """

    def __init__(self, name: str, argv_template: list[str]):
        self.name = name
        self.argv_template = argv_template

    def argv(self, store_root, location, pattern, params, prune):
        mapping = {
            "store": _store_path(store_root),
            "location": location,
            "pattern": pattern,
            "params": json.dumps(params or {}),
            "prune": "1" if prune else "0",
        }
        return [a.format(**mapping) for a in self.argv_template]

    def run(self, store_root, location, pattern, params, prune=True) -> RunOutcome:
        argv = self.argv(store_root, location, pattern, params, prune)
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
        if proc.returncode != 0:
            raise RuntimeError(
                f"engine {self.name} failed ({proc.returncode}): {proc.stderr.strip()[:500]}"
            )
        payload = json.loads(proc.stdout)
        rows = payload.get("rows")
        if rows is not None:
            rows = [tuple(r) for r in rows]
        digest = payload.get("digest") or canonical_digest(payload["columns"], rows or [])
        return RunOutcome(
            columns=payload["columns"],
            rows=rows,
            digest=digest,
            counters=payload.get("counters", {}),
            wall_time_ms=float(payload["wall_time_ms"]),
        )


def _open(store_root) -> ObjectStore:
    if isinstance(store_root, ObjectStore):
        return store_root
    return LocalStore(store_root)


def _store_path(store_root) -> str:
    if isinstance(store_root, LocalStore):
        return str(store_root.root)
    if isinstance(store_root, ObjectStore):
        raise ValueError("cold subprocess runs need a filesystem-backed store")
    return str(store_root)


def _cold_adapter(engine: str, warm: dict[str, EngineAdapter]) -> EngineAdapter:
    if engine in ("sql", "scan"):
        return SubprocessEngine(
            engine,
            [
                sys.executable,
                "-m",
                "edsp._benchrun",
                "--store", "{store}",
                "--location", "{location}",
                "--engine", engine,
                "--pattern", "{pattern}",
                "--params", "{params}",
                "--prune", "{prune}",
            ],
        )
    return warm[engine]  # external engines are already process-per-run


def builtin_engines() -> dict[str, EngineAdapter]:
    return {"sql": SqlEngine(), "scan": ScanEngine()}


class ReaderEngine(SubprocessEngine):
    """The independent reader client, driven through its CLI.

    Resolved from $EDSP_READER_CMD (a shell-split command prefix) or
    plain ``edsp-reader`` on PATH. Always process-per-run.
    """

    def __init__(self):
        super().__init__("reader", [])

    def argv(self, store_root, location, pattern, params, prune):
        import os
        import shlex
        from pathlib import Path

        cmd = shlex.split(os.environ.get("EDSP_READER_CMD", "edsp-reader"))
        table_root = str(Path(_store_path(store_root)) / location)
        argv = cmd + [
            "--table-root", table_root,
            "--pattern", pattern,
            "--params", json.dumps(params or {}),
            "--format", "json",
        ]
        if not prune:
            argv.append("--no-prune")
        return argv


def make_engines(names: list[str]) -> dict[str, EngineAdapter]:
    adapters: dict[str, EngineAdapter] = {}
    for name in names:
        if name == "sql":
            adapters[name] = SqlEngine()
        elif name == "scan":
            adapters[name] = ScanEngine()
        elif name == "reader":
            adapters[name] = ReaderEngine()
        else:
            raise ValueError(f"unknown engine {name!r} (expected sql, scan, reader)")
    return adapters


# ---------------------------------------------------------------------------
# consistency matrix
# ---------------------------------------------------------------------------


@dataclass
class MatrixReport:
    reference: str
    cells: dict  # engine -> query -> {"pass": bool, "detail": str|None}
    digests: dict  # query -> reference digest

    @property
    def all_pass(self) -> bool:
        return all(c["pass"] for per in self.cells.values() for c in per.values())

    def to_json_dict(self) -> dict:
        return {
            "reference": self.reference,
            "all-pass": self.all_pass,
            "cells": self.cells,
            "digests": self.digests,
        }


def consistency_matrix(
    store_root,
    location: str,
    queries: list[str] | None = None,
    engines: dict[str, EngineAdapter] | None = None,
    params: dict[str, dict] | None = None,
) -> MatrixReport:
    """Run each engine against each query pattern and compare canonically
    against the first engine (exact; FLOAT64 within 1e-9 relative)."""
    queries = list(queries or PATTERNS)
    engines = engines or builtin_engines()
    params = params or {}
    names = list(engines)
    reference = names[0]
    cells: dict = {name: {} for name in names}
    digests: dict = {}

    for pattern in queries:
        p = with_defaults(pattern, params.get(pattern))
        ref_outcome = engines[reference].run(store_root, location, pattern, p)
        digests[pattern] = ref_outcome.digest
        cells[reference][pattern] = {"pass": True, "detail": None}
        for name in names[1:]:
            try:
                outcome = engines[name].run(store_root, location, pattern, p)
                if outcome.columns != ref_outcome.columns:
                    detail = f"columns {outcome.columns} != {ref_outcome.columns}"
                elif outcome.rows is None or ref_outcome.rows is None:
                    detail = (
                        None if outcome.digest == ref_outcome.digest
                        else "digest mismatch"
                    )
                else:
                    detail = rows_equal(ref_outcome.rows, outcome.rows)
            except Exception as exc:
                detail = f"engine failure: {exc}"
            cells[name][pattern] = {"pass": detail is None, "detail": detail}
    return MatrixReport(reference, cells, digests)


# ---------------------------------------------------------------------------
# latency bench
# ---------------------------------------------------------------------------


@dataclass
class BenchReport:
    table: dict
    environment: dict
    runs: int
    cold: bool
    queries: list[str]
    engines: list[str]
    cells: dict  # engine -> query -> cell dict
    matrix: dict

    def to_json_dict(self) -> dict:
        return {
            "table": self.table,
            "environment": self.environment,
            "runs": self.runs,
            "cold": self.cold,
            "queries": self.queries,
            "engines": self.engines,
            "cells": self.cells,
            "matrix": self.matrix,
        }


def _table_fingerprint(store, location: str, name: str | None) -> dict:
    meta, snapshot = tbl.load_table(store, location)
    rows = 0
    files = 0
    if snapshot is not None:
        manifest = tbl.read_manifest(store, snapshot)
        rows = sum(e.row_count for e in manifest)
        files = len(manifest)
    return {
        "name": name or location,
        "location": location,
        "uuid": meta.table_uuid,
        "metadata-version": meta.sequence,
        "snapshot-id": meta.current_snapshot_id,
        "row-count": rows,
        "data-files": files,
    }


def _environment_note() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "note": (
            "desk-scale local run; cold runs use one fresh process per "
            "execution and the system keeps no engine-level caches"
        ),
    }


def run_bench(
    store_root,
    location: str,
    engines: dict[str, EngineAdapter] | None = None,
    queries: list[str] | None = None,
    runs: int = DEFAULT_RUNS,
    cold: bool = True,
    table_name: str | None = None,
    params: dict[str, dict] | None = None,
    parallel: int = 1,
    progress=None,
) -> BenchReport:
    """Time each (engine, query) cell over ``runs`` executions.

    cold=True launches one fresh process per run so nothing is reused
    between executions. Each run's result digest must match the
    consistency matrix's reference digest before its timing counts.
    ``parallel`` exists only for concurrency stress; it muddies timings.
    """
    queries = list(queries or PATTERNS)
    engines = engines or builtin_engines()
    params = params or {}
    store = _open(store_root)

    matrix = consistency_matrix(store_root, location, queries, engines, params)
    if not matrix.all_pass:
        raise RuntimeError(
            "consistency matrix failed; refusing to time inconsistent engines: "
            + json.dumps(matrix.cells)
        )

    cells: dict = {}
    for name, adapter in engines.items():
        runner = _cold_adapter(name, engines) if cold else adapter
        cells[name] = {}
        for pattern in queries:
            p = with_defaults(pattern, params.get(pattern))
            timings: list[float] = []
            errors: list[str] = []
            counters = None

            def one_run():
                outcome = runner.run(store_root, location, pattern, p)
                if outcome.digest != matrix.digests[pattern]:
                    raise RuntimeError("result drifted from consistency reference")
                return outcome

            if parallel > 1:
                from concurrent.futures import ThreadPoolExecutor

                with ThreadPoolExecutor(max_workers=parallel) as pool:
                    futures = [pool.submit(one_run) for _ in range(runs)]
                    for f in futures:
                        try:
                            outcome = f.result()
                            timings.append(outcome.wall_time_ms)
                            counters = counters or outcome.counters
                        except Exception as exc:
                            errors.append(str(exc))
            else:
                for _ in range(runs):
                    try:
                        outcome = one_run()
                        timings.append(outcome.wall_time_ms)
                        counters = counters or outcome.counters
                    except Exception as exc:
                        errors.append(str(exc))
                    if progress is not None:
                        progress(name, pattern)

            cell = {
                "runs": len(timings),
                "errors": errors,
                "counters": counters,
                "digest": matrix.digests[pattern],
            }
            if timings:
                cell["p50_ms"] = percentile(timings, 50)
                cell["p95_ms"] = percentile(timings, 95)
                cell["timings_ms"] = timings
            cells[name][pattern] = cell

    return BenchReport(
        table=_table_fingerprint(store, location, table_name),
        environment=_environment_note(),
        runs=runs,
        cold=cold,
        queries=queries,
        engines=list(engines),
        cells=cells,
        matrix=matrix.to_json_dict(),
    )


# ---------------------------------------------------------------------------
# write-once audit
# ---------------------------------------------------------------------------


@dataclass
class WriteOnceReport:
    dataset: str
    location: str
    commits: list[dict]  # per update: {"metadata-version", "snapshot-sequence"}
    query_runs: int
    replica: dict
    store_delta_bytes: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "location": self.location,
            "commits": self.commits,
            "query-runs": self.query_runs,
            "replica": self.replica,
            "store-delta-bytes": self.store_delta_bytes,
            "violations": self.violations,
            "ok": self.ok,
        }


def verify_write_once(
    store_root,
    dataset: str,
    location: str,
    update_csvs: list[str],
    engines: dict[str, EngineAdapter] | None = None,
    queries_per_engine: int = 30,
    scratch_dirs: dict[str, str] | None = None,
    rows_per_file: int = 20_833,
) -> WriteOnceReport:
    """Scripted updates plus a mixed query batch, then the replica audit.

    The first CSV creates the table; the rest append. Afterwards every
    engine runs ``queries_per_engine`` queries cycling q1/q2/q3, and the
    audit asserts: exactly one table root, zero scratch growth, zero
    store growth during the query batch, and a strictly increasing
    snapshot sequence 1..k (metadata versions 1..k+1).
    """
    from . import prep

    store = _open(store_root)
    engines = engines or builtin_engines()
    violations: list[str] = []

    commits: list[dict] = []
    for i, csv_path in enumerate(update_csvs):
        mode = prep.CREATE if i == 0 else prep.APPEND
        snapshot = prep.ingest(
            store,
            prep.IngestSpec(
                source=csv_path, target=location, mode=mode, rows_per_file=rows_per_file
            ),
        )
        pointer, _ = tbl.read_pointer(store, location)
        commits.append(
            {
                "metadata-version": pointer.sequence,
                "snapshot-sequence": snapshot.sequence if snapshot else None,
            }
        )

    seqs = [c["snapshot-sequence"] for c in commits if c["snapshot-sequence"]]
    if seqs != list(range(1, len(seqs) + 1)):
        violations.append(f"snapshot sequences not 1..k: {seqs}")
    versions = [c["metadata-version"] for c in commits]
    if versions != sorted(set(versions)) or (versions and versions[-1] != len(seqs) + 1):
        violations.append(f"metadata versions not strictly increasing 1..k+1: {versions}")

    baseline = tbl.ByteCensus.take(store, scratch_dirs)
    ran = 0
    for name, adapter in engines.items():
        for i in range(queries_per_engine):
            pattern = PATTERNS[i % len(PATTERNS)]
            adapter.run(store_root, location, pattern, None)
            ran += 1

    replica = tbl.audit_replicas(store, {dataset: location}, scratch_dirs, baseline)
    violations.extend(replica.violations)
    if replica.store_delta_bytes != 0:
        violations.append(
            f"store changed by {replica.store_delta_bytes} bytes during query batch"
        )

    return WriteOnceReport(
        dataset=dataset,
        location=location,
        commits=commits,
        query_runs=ran,
        replica={
            "roots-per-dataset": replica.roots_per_dataset,
            "scratch-deltas": replica.scratch_deltas,
        },
        store_delta_bytes=replica.store_delta_bytes or 0,
        violations=violations,
    )
