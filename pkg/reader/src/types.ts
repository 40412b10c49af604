/**
 * Shared value and schema types.
 *
 * INT64 values decode as `number` while they fit the 53-bit safe
 * range and as `bigint` beyond it; writers in this ecosystem keep ids
 * and counters inside the safe range so JSON stays lossless.
 */

export type ColType = 'INT64' | 'FLOAT64' | 'BOOL' | 'STRING'

export type Value = number | bigint | boolean | string | null

export interface FieldDef {
  name: string
  type: ColType
  nullable: boolean
}

export interface Schema {
  schemaId: number
  fields: FieldDef[]
}

export interface ColumnStats {
  min: Value
  max: Value
  nullCount: number
}

export interface ReadCounters {
  files_considered: number
  files_pruned: number
  data_bytes_read: number
  rows_scanned: number
  wall_time_ms: number
}

export class ReaderError extends Error {}

/** Missing or unresolvable pointer file. */
export class MissingPointerError extends ReaderError {}

/** Snapshot id / timestamp did not resolve. */
export class UnknownSnapshotError extends ReaderError {}

/** Structurally broken or corrupted data file. */
export class CorruptFileError extends ReaderError {}

/** Pattern parameters reference something the schema lacks. */
export class UnknownColumnError extends ReaderError {}

export function fieldByName(schema: Schema, name: string): FieldDef {
  const field = schema.fields.find((f) => f.name === name)
  if (!field) throw new UnknownColumnError(`unknown column ${name}`)
  return field
}
