"""Blob storage with an atomic conditional-write primitive.

Two backends share one contract: an in-memory store for deterministic
tests and a local-filesystem store that is safe across threads *and*
processes. The conditional write (compare-and-swap on an opaque
per-key token) is the only primitive the commit protocol needs.

Local layout: a key maps directly to ``<root>/<key>`` so external
readers can resolve keys without this library. Lock files and token
sidecars live under ``<root>/.cas/``; key segments starting with a dot
are rejected, which keeps bookkeeping invisible to ``list``.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import threading
from pathlib import Path

from .errors import (
    BlobNotFoundError,
    InvalidKeyError,
    PreconditionFailedError,
    StoreIOError,
)

MAX_KEY_BYTES = 1024
MAX_BLOB_BYTES = 1 << 30

ENV_STORE = "EDSP_STORE"


def validate_key(key: str) -> str:
    if not isinstance(key, str) or not key:
        raise InvalidKeyError("key must be a nonempty string")
    if len(key.encode("utf-8")) > MAX_KEY_BYTES:
        raise InvalidKeyError(f"key longer than {MAX_KEY_BYTES} bytes")
    if key.startswith("/") or "\\" in key:
        raise InvalidKeyError(f"key must be a relative slash-separated path: {key!r}")
    for seg in key.split("/"):
        if seg in ("", ".", ".."):
            raise InvalidKeyError(f"bad path segment in key: {key!r}")
        if seg.startswith("."):
            raise InvalidKeyError(f"dot-prefixed segments are reserved: {key!r}")
    return key


def _check_blob(data: bytes) -> bytes:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise TypeError("blob must be bytes-like")
    data = bytes(data)
    if len(data) > MAX_BLOB_BYTES:
        raise StoreIOError(f"blob larger than {MAX_BLOB_BYTES} bytes")
    return data


def _make_token(counter: int, data: bytes) -> str:
    return f"{counter}-{hashlib.sha256(data).hexdigest()[:16]}"


class ObjectStore:
    """Contract shared by all backends.

    All operations are individually atomic; no operation holds locks
    across calls. ``put_if_matches`` succeeds iff the key's current
    token equals ``expected`` (``None`` meaning "create only").
    """

    def put(self, key: str, data: bytes) -> None:
        raise NotImplementedError

    def get(self, key: str) -> bytes:
        raise NotImplementedError

    def get_with_token(self, key: str) -> tuple[bytes, str]:
        """Read a blob together with its current conditional-write token."""
        raise NotImplementedError

    def list(self, prefix: str = "") -> list[str]:
        """All keys with the given string prefix, lexicographically sorted."""
        raise NotImplementedError

    def delete(self, key: str) -> None:
        raise NotImplementedError

    def size(self, key: str) -> int:
        raise NotImplementedError

    def exists(self, key: str) -> bool:
        try:
            self.size(key)
            return True
        except BlobNotFoundError:
            return False

    def put_if_matches(self, key: str, data: bytes, expected: str | None) -> str:
        raise NotImplementedError


class MemoryStore(ObjectStore):
    """In-memory backend with the identical contract, for tests."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._blobs: dict[str, bytes] = {}
        self._tokens: dict[str, str] = {}
        self._counters: dict[str, int] = {}

    def _bump(self, key: str, data: bytes) -> str:
        counter = self._counters.get(key, 0) + 1
        self._counters[key] = counter
        token = _make_token(counter, data)
        self._tokens[key] = token
        return token

    def put(self, key: str, data: bytes) -> None:
        validate_key(key)
        data = _check_blob(data)
        with self._lock:
            self._blobs[key] = data
            self._bump(key, data)

    def get(self, key: str) -> bytes:
        validate_key(key)
        with self._lock:
            try:
                return self._blobs[key]
            except KeyError:
                raise BlobNotFoundError(key) from None

    def get_with_token(self, key: str) -> tuple[bytes, str]:
        validate_key(key)
        with self._lock:
            if key not in self._blobs:
                raise BlobNotFoundError(key)
            return self._blobs[key], self._tokens[key]

    def list(self, prefix: str = "") -> list[str]:
        with self._lock:
            return sorted(k for k in self._blobs if k.startswith(prefix))

    def delete(self, key: str) -> None:
        # Counters survive deletion so a recreated key never reuses a token.
        validate_key(key)
        with self._lock:
            if key not in self._blobs:
                raise BlobNotFoundError(key)
            del self._blobs[key]
            del self._tokens[key]
            self._counters[key] = self._counters.get(key, 0)

    def size(self, key: str) -> int:
        validate_key(key)
        with self._lock:
            try:
                return len(self._blobs[key])
            except KeyError:
                raise BlobNotFoundError(key) from None

    def put_if_matches(self, key: str, data: bytes, expected: str | None) -> str:
        validate_key(key)
        data = _check_blob(data)
        with self._lock:
            current = self._tokens.get(key) if key in self._blobs else None
            if current != expected:
                raise PreconditionFailedError(
                    f"token mismatch on {key!r}: expected {expected!r}, found {current!r}"
                )
            self._blobs[key] = data
            return self._bump(key, data)


class LocalStore(ObjectStore):
    """Filesystem backend; multi-process correct.

    Conditional writes take a per-key ``flock`` and write
    temp-then-atomic-rename. Tokens (a monotone counter plus a content
    hash) are persisted in sidecar files under ``.cas/`` so independent
    processes agree on the current token.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        if not self.root.is_dir():
            raise StoreIOError(f"store root does not exist: {self.root}")
        self._cas = self.root / ".cas"

    # -- path helpers --------------------------------------------------

    def _path(self, key: str) -> Path:
        validate_key(key)
        return self.root / key

    def _sidecar(self, key: str, kind: str) -> Path:
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
        return self._cas / kind / f"{digest}.{kind}"

    def _read_token(self, key: str) -> tuple[int, str] | None:
        try:
            raw = self._sidecar(key, "token").read_bytes()
        except FileNotFoundError:
            return None
        rec = json.loads(raw)
        return rec["counter"], rec["token"]

    def _write_token(self, key: str, counter: int, data: bytes) -> str:
        token = _make_token(counter, data)
        side = self._sidecar(key, "token")
        side.parent.mkdir(parents=True, exist_ok=True)
        tmp = side.with_suffix(".tmp")
        tmp.write_bytes(
            json.dumps({"key": key, "counter": counter, "token": token}).encode()
        )
        os.replace(tmp, side)
        return token

    def _locked(self, key: str):
        lock_path = self._sidecar(key, "lock")
        lock_path.parent.mkdir(parents=True, exist_ok=True)
        return _FileLock(lock_path)

    def _write_blob(self, path: Path, data: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc

    # -- contract --------------------------------------------------------

    def put(self, key: str, data: bytes) -> None:
        path = self._path(key)
        data = _check_blob(data)
        with self._locked(key):
            prev = self._read_token(key)
            self._write_blob(path, data)
            self._write_token(key, (prev[0] if prev else 0) + 1, data)

    def get(self, key: str) -> bytes:
        path = self._path(key)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise BlobNotFoundError(key) from None
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc

    def get_with_token(self, key: str) -> tuple[bytes, str]:
        with self._locked(key):
            data = self.get(key)
            rec = self._read_token(key)
            if rec is None:
                # Blob placed out of band (e.g. fixture checkout): adopt it.
                token = self._write_token(key, 1, data)
            else:
                token = rec[1]
            return data, token

    def list(self, prefix: str = "") -> list[str]:
        keys: list[str] = []
        for dirpath, dirnames, filenames in os.walk(self.root):
            dirnames[:] = [d for d in dirnames if not d.startswith(".")]
            rel = Path(dirpath).relative_to(self.root)
            for name in filenames:
                if name.startswith(".") or name.endswith(".tmp"):
                    continue
                key = name if rel == Path(".") else (rel / name).as_posix()
                if key.startswith(prefix):
                    keys.append(key)
        return sorted(keys)

    def delete(self, key: str) -> None:
        # Token sidecar is kept: its counter must stay monotone across
        # delete/recreate so tokens are never reused.
        path = self._path(key)
        with self._locked(key):
            try:
                os.remove(path)
            except FileNotFoundError:
                raise BlobNotFoundError(key) from None
            except OSError as exc:
                raise StoreIOError(str(exc)) from exc

    def size(self, key: str) -> int:
        path = self._path(key)
        try:
            return path.stat().st_size
        except FileNotFoundError:
            raise BlobNotFoundError(key) from None
        except OSError as exc:
            raise StoreIOError(str(exc)) from exc

    def put_if_matches(self, key: str, data: bytes, expected: str | None) -> str:
        path = self._path(key)
        data = _check_blob(data)
        with self._locked(key):
            exists = path.exists()
            rec = self._read_token(key)
            if exists and rec is None:
                # Blob placed out of band: adopt it before comparing.
                rec = (1, self._write_token(key, 1, path.read_bytes()))
            current = rec[1] if (rec and exists) else None
            if current != expected:
                raise PreconditionFailedError(
                    f"token mismatch on {key!r}: expected {expected!r}, found {current!r}"
                )
            self._write_blob(path, data)
            return self._write_token(key, (rec[0] if rec else 0) + 1, data)


class _FileLock:
    """Exclusive advisory lock; blocks until acquired."""

    def __init__(self, path: Path):
        self._path = path
        self._fh = None

    def __enter__(self):
        self._fh = open(self._path, "a+b")
        fcntl.flock(self._fh.fileno(), fcntl.LOCK_EX)
        return self

    def __exit__(self, *exc):
        fcntl.flock(self._fh.fileno(), fcntl.LOCK_UN)
        self._fh.close()
        self._fh = None
        return False


def open_store(root: str | Path | None = None, create: bool = False) -> LocalStore:
    """Open the local store selected by argument or the EDSP_STORE env var."""
    if root is None:
        root = os.environ.get(ENV_STORE)
    if not root:
        raise StoreIOError("no store root: pass --store or set EDSP_STORE")
    root = Path(root)
    if create:
        root.mkdir(parents=True, exist_ok=True)
    return LocalStore(root)
