/**
 * Pointer, table metadata, and manifest parsing.
 *
 * Resolution starts at the fixed-name pointer and nowhere else:
 * metadata filenames change with every commit, so directory scanning
 * for the newest file is exactly the failure mode the pointer exists
 * to prevent.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { parseSchemaJson } from './ecf.js'
import {
  ColumnStats,
  MissingPointerError,
  ReaderError,
  Schema,
  UnknownSnapshotError,
  Value,
} from './types.js'

export const POINTER_NAME = 'latest.metadata.json'

export interface Pointer {
  metadataFile: string // store key
  sequence: number
  tableUuid: string
}

export interface SnapshotInfo {
  snapshotId: number
  parentId: number | null
  sequence: number
  timestampMs: number
  operation: string
  manifestPath: string // store key
  schemaId: number
}

export interface TableMetadataInfo {
  tableUuid: string
  location: string
  sequence: number
  schemas: Schema[]
  currentSchemaId: number
  snapshots: SnapshotInfo[]
  currentSnapshotId: number | null
}

export interface ManifestEntryInfo {
  dataPath: string // store key
  rowCount: number
  fileSize: number
  schemaId: number
  stats: Map<string, ColumnStats>
}

/** Maps store keys under the table's location to local filesystem paths. */
export class TableFiles {
  constructor(
    readonly tableRoot: string,
    readonly location: string,
  ) {}

  resolve(storeKey: string): string {
    const prefix = this.location === '' ? '' : this.location + '/'
    if (!storeKey.startsWith(prefix)) {
      throw new ReaderError(`store key ${storeKey} is outside table location ${this.location}`)
    }
    return path.join(this.tableRoot, storeKey.slice(prefix.length))
  }

  read(storeKey: string): Uint8Array {
    return fs.readFileSync(this.resolve(storeKey))
  }
}

export function readPointer(tableRoot: string): Pointer {
  const pointerPath = path.join(tableRoot, 'metadata', POINTER_NAME)
  let raw: string
  try {
    raw = fs.readFileSync(pointerPath, 'utf-8')
  } catch {
    throw new MissingPointerError(`no pointer file at ${pointerPath}`)
  }
  const obj = JSON.parse(raw) as Record<string, unknown>
  const metadataFile = obj['metadata-file']
  const sequence = obj['sequence']
  const tableUuid = obj['table-uuid']
  if (typeof metadataFile !== 'string' || typeof sequence !== 'number' || typeof tableUuid !== 'string') {
    throw new ReaderError('malformed pointer file')
  }
  return { metadataFile, sequence, tableUuid }
}

function parseSnapshot(obj: Record<string, unknown>): SnapshotInfo {
  return {
    snapshotId: obj['snapshot-id'] as number,
    parentId: (obj['parent-id'] as number | null) ?? null,
    sequence: obj['sequence'] as number,
    timestampMs: obj['timestamp-ms'] as number,
    operation: obj['operation'] as string,
    manifestPath: obj['manifest-path'] as string,
    schemaId: obj['schema-id'] as number,
  }
}

export function readTableMetadata(files: TableFiles, pointer: Pointer): TableMetadataInfo {
  const obj = JSON.parse(Buffer.from(files.read(pointer.metadataFile)).toString('utf-8')) as Record<
    string,
    unknown
  >
  const meta: TableMetadataInfo = {
    tableUuid: obj['table-uuid'] as string,
    location: obj['location'] as string,
    sequence: obj['sequence'] as number,
    schemas: (obj['schemas'] as unknown[]).map(parseSchemaJson),
    currentSchemaId: obj['current-schema-id'] as number,
    snapshots: (obj['snapshots'] as Array<Record<string, unknown>>).map(parseSnapshot),
    currentSnapshotId: (obj['current-snapshot-id'] as number | null) ?? null,
  }
  if (meta.tableUuid !== pointer.tableUuid || meta.sequence !== pointer.sequence) {
    throw new ReaderError('pointer and metadata disagree on uuid/sequence')
  }
  return meta
}

export function schemaById(meta: TableMetadataInfo, schemaId: number): Schema {
  const schema = meta.schemas.find((s) => s.schemaId === schemaId)
  if (!schema) throw new ReaderError(`no schema with id ${schemaId}`)
  return schema
}

export function selectSnapshot(
  meta: TableMetadataInfo,
  at?: { snapshotId?: number; asOfMs?: number },
): SnapshotInfo | null {
  if (at?.snapshotId !== undefined && at?.asOfMs !== undefined) {
    throw new ReaderError('pass at most one of snapshotId / asOfMs')
  }
  if (at?.snapshotId !== undefined) {
    const snap = meta.snapshots.find((s) => s.snapshotId === at.snapshotId)
    if (!snap) throw new UnknownSnapshotError(`unknown snapshot ${at.snapshotId}`)
    return snap
  }
  if (at?.asOfMs !== undefined) {
    const eligible = meta.snapshots.filter((s) => s.timestampMs <= at.asOfMs!)
    if (eligible.length === 0) {
      throw new UnknownSnapshotError(`no snapshot at or before ${at.asOfMs}`)
    }
    return eligible.reduce((a, b) => (a.sequence >= b.sequence ? a : b))
  }
  if (meta.currentSnapshotId === null) return null
  const snap = meta.snapshots.find((s) => s.snapshotId === meta.currentSnapshotId)
  if (!snap) throw new ReaderError('current-snapshot-id names a missing snapshot')
  return snap
}

function parseStats(obj: Record<string, Record<string, unknown>>): Map<string, ColumnStats> {
  const stats = new Map<string, ColumnStats>()
  for (const [name, s] of Object.entries(obj)) {
    stats.set(name, {
      min: (s['min'] as Value) ?? null,
      max: (s['max'] as Value) ?? null,
      nullCount: s['null_count'] as number,
    })
  }
  return stats
}

export function readManifest(files: TableFiles, snapshot: SnapshotInfo): ManifestEntryInfo[] {
  const arr = JSON.parse(Buffer.from(files.read(snapshot.manifestPath)).toString('utf-8')) as Array<
    Record<string, unknown>
  >
  const entries = arr.map((e) => ({
    dataPath: e['data-path'] as string,
    rowCount: e['row-count'] as number,
    fileSize: e['file-size'] as number,
    schemaId: e['schema-id'] as number,
    stats: parseStats(e['stats'] as Record<string, Record<string, unknown>>),
  }))
  // Deterministic scan order: manifest sorted by data path.
  entries.sort((a, b) => (a.dataPath < b.dataPath ? -1 : a.dataPath > b.dataPath ? 1 : 0))
  return entries
}
