export { open, ReaderTable, OpenOptions } from './table.js'
export { query, PatternName, QueryParams, QueryResult } from './query.js'
export { decodeColumns, readFooter, readHeader, verifyFile } from './ecf.js'
export { readManifest, readPointer, readTableMetadata, selectSnapshot } from './metadata.js'
export { codePointCompare, compareValues, evalPredicate, statsExclude } from './predicate.js'
export { crc32 } from './crc32.js'
export {
  ColType,
  ColumnStats,
  CorruptFileError,
  FieldDef,
  MissingPointerError,
  ReadCounters,
  ReaderError,
  Schema,
  UnknownColumnError,
  UnknownSnapshotError,
  Value,
} from './types.js'
