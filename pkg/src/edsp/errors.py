"""Exception hierarchy.

Every error raised on purpose derives from EdspError so the CLI can map
user-level failures to exit code 2 and keep tracebacks for real bugs.
"""

from __future__ import annotations


class EdspError(Exception):
    """Base class for all expected failures."""


# --- object store ---------------------------------------------------------


class StoreError(EdspError):
    pass


class InvalidKeyError(StoreError):
    pass


class BlobNotFoundError(StoreError):
    pass


class PreconditionFailedError(StoreError):
    """Conditional write lost: token mismatch or key already exists."""


class StoreIOError(StoreError):
    pass


# --- columnar file codec ---------------------------------------------------


class CodecError(EdspError):
    pass


class BadMagicError(CodecError):
    pass


class TruncatedFileError(CodecError):
    pass


class FooterMismatchError(CodecError):
    """Footer disagrees with file contents (row count, stats, checksum)."""


class TypeMismatchError(CodecError):
    pass


class UnknownColumnError(CodecError):
    pass


# --- table format ----------------------------------------------------------


class TableError(EdspError):
    pass


class TableExistsError(TableError):
    pass


class TableNotFoundError(TableError):
    pass


class UnknownSnapshotError(TableError):
    pass


class NoSnapshotBeforeTimestampError(TableError):
    pass


class CommitConflictError(TableError):
    """Optimistic commit retries exhausted."""


class SchemaMismatchError(TableError):
    pass


class DuplicateColumnError(TableError):
    pass


# --- ingest ----------------------------------------------------------------


class IngestError(EdspError):
    pass


class CsvParseError(IngestError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# --- query engines ---------------------------------------------------------


class QueryError(EdspError):
    pass


class SqlSyntaxError(QueryError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnsupportedFeatureError(QueryError):
    def __init__(self, feature: str, position: int = -1):
        super().__init__(f"unsupported feature: {feature}")
        self.feature = feature
        self.position = position


class UnknownTableError(QueryError):
    pass


class QueryTypeError(QueryError):
    pass


class Int64OverflowError(QueryError):
    pass


# --- catalog ----------------------------------------------------------------


class CatalogError(EdspError):
    pass


class DuplicateNameError(CatalogError):
    pass


class UnknownEntryError(CatalogError):
    pass


class UnknownEngineError(CatalogError):
    pass


class InvalidTableError(CatalogError):
    pass
