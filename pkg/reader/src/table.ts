/**
 * ReaderTable: a resolved view of one table at one snapshot.
 */

import * as path from 'node:path'

import {
  ManifestEntryInfo,
  Pointer,
  SnapshotInfo,
  TableFiles,
  TableMetadataInfo,
  readManifest,
  readPointer,
  readTableMetadata,
  schemaById,
  selectSnapshot,
} from './metadata.js'
import { Schema } from './types.js'

export interface OpenOptions {
  snapshotId?: number
  asOfMs?: number
}

export class ReaderTable {
  constructor(
    readonly files: TableFiles,
    readonly pointer: Pointer,
    readonly meta: TableMetadataInfo,
    readonly snapshot: SnapshotInfo | null,
    readonly schema: Schema,
  ) {}

  manifest(): ManifestEntryInfo[] {
    if (this.snapshot === null) return []
    return readManifest(this.files, this.snapshot)
  }
}

/**
 * Resolve a table purely through its fixed-name pointer file.
 *
 * Current reads serve the current schema (columns added later read as
 * null from older files); explicit time travel serves the schema the
 * chosen snapshot recorded.
 */
export function open(tableRoot: string, at?: OpenOptions): ReaderTable {
  const root = path.resolve(tableRoot)
  const pointer = readPointer(root)
  // The metadata file key starts with the table's location prefix;
  // learn the location from the key's "/metadata/" split.
  const key = pointer.metadataFile
  const cut = key.lastIndexOf('/metadata/')
  const location = cut > 0 ? key.slice(0, cut) : ''
  const files = new TableFiles(root, location)
  const meta = readTableMetadata(files, pointer)
  const snapshot = selectSnapshot(meta, at)
  const timeTravel = at?.snapshotId !== undefined || at?.asOfMs !== undefined
  const schema =
    snapshot && timeTravel ? schemaById(meta, snapshot.schemaId) : schemaById(meta, meta.currentSchemaId)
  return new ReaderTable(files, pointer, meta, snapshot, schema)
}
