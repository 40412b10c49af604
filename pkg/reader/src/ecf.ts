/**
 * ECF v1 parser, written against the published byte layout only.
 *
 * Layout (little-endian):
 *   "ECF1" | u32 schema_len | schema JSON | u64 row_count
 *   per column in schema order:
 *     presence bitmap ceil(R/8), LSB-first   (nullable columns only)
 *     INT64/FLOAT64: R x 8 bytes | BOOL: ceil(R/8) | STRING: (R+1) u32
 *     offsets then concatenated UTF-8
 *   footer JSON | u32 footer_len | "ECF1"
 *
 * The footer's crc32 covers bytes [0, footer_start); `verifyFile`
 * checks it together with recomputed per-column statistics.
 */

import { crc32 } from './crc32.js'
import {
  ColType,
  ColumnStats,
  CorruptFileError,
  FieldDef,
  Schema,
  UnknownColumnError,
  Value,
} from './types.js'

const MAGIC = 0x31464345 // "ECF1" as LE u32
const MAX_SAFE = BigInt(Number.MAX_SAFE_INTEGER)
const MIN_SAFE = -MAX_SAFE

const utf8 = new TextDecoder('utf-8', { fatal: true })

interface Header {
  schema: Schema
  rowCount: number
  dataStart: number
}

interface Footer {
  rowCount: number
  crc: number | null
  columns: Record<string, { min?: unknown; max?: unknown; null_count: number }>
  footerStart: number
}

function u32(buf: Uint8Array, off: number): number {
  if (off + 4 > buf.length) throw new CorruptFileError('unexpected end of file')
  return new DataView(buf.buffer, buf.byteOffset + off, 4).getUint32(0, true)
}

export function parseSchemaJson(obj: unknown): Schema {
  const o = obj as { schema_id: number; fields: Array<Record<string, unknown>> }
  if (typeof o?.schema_id !== 'number' || !Array.isArray(o.fields)) {
    throw new CorruptFileError('malformed schema object')
  }
  const fields: FieldDef[] = o.fields.map((f) => {
    const name = f.name
    const type = f.type
    if (typeof name !== 'string' || !/^[A-Za-z_][A-Za-z0-9_]*$/.test(name)) {
      throw new CorruptFileError(`bad field name ${String(name)}`)
    }
    if (type !== 'INT64' && type !== 'FLOAT64' && type !== 'BOOL' && type !== 'STRING') {
      throw new CorruptFileError(`bad field type ${String(type)}`)
    }
    return { name, type: type as ColType, nullable: Boolean(f.nullable) }
  })
  const names = new Set(fields.map((f) => f.name))
  if (names.size !== fields.length) throw new CorruptFileError('duplicate field names')
  return { schemaId: o.schema_id, fields }
}

export function readHeader(buf: Uint8Array): Header {
  if (buf.length < 4 || u32(buf, 0) !== MAGIC) {
    throw new CorruptFileError('missing ECF1 header magic')
  }
  const schemaLen = u32(buf, 4)
  const jsonEnd = 8 + schemaLen
  if (jsonEnd + 8 > buf.length) throw new CorruptFileError('schema block past end of file')
  let schema: Schema
  try {
    schema = parseSchemaJson(JSON.parse(utf8.decode(buf.subarray(8, jsonEnd))))
  } catch (err) {
    if (err instanceof CorruptFileError) throw err
    throw new CorruptFileError(`bad schema block: ${String(err)}`)
  }
  const rowsBig = new DataView(buf.buffer, buf.byteOffset + jsonEnd, 8).getBigUint64(0, true)
  if (rowsBig > MAX_SAFE) throw new CorruptFileError('row count out of range')
  return { schema, rowCount: Number(rowsBig), dataStart: jsonEnd + 8 }
}

export function readFooter(buf: Uint8Array): Footer {
  if (buf.length < 8 || u32(buf, buf.length - 4) !== MAGIC) {
    throw new CorruptFileError('missing ECF1 trailer magic')
  }
  const footerLen = u32(buf, buf.length - 8)
  const footerStart = buf.length - 8 - footerLen
  if (footerStart < 16) throw new CorruptFileError('footer length exceeds file size')
  let footer: Record<string, unknown>
  try {
    footer = JSON.parse(utf8.decode(buf.subarray(footerStart, buf.length - 8)))
  } catch (err) {
    throw new CorruptFileError(`unparseable footer: ${String(err)}`)
  }
  const rowCount = footer.row_count
  const columns = footer.columns
  if (typeof rowCount !== 'number' || rowCount < 0 || typeof columns !== 'object' || !columns) {
    throw new CorruptFileError('footer missing required keys')
  }
  return {
    rowCount,
    crc: typeof footer.crc32 === 'number' ? footer.crc32 : null,
    columns: columns as Footer['columns'],
    footerStart,
  }
}

function bitmapLen(rows: number): number {
  return (rows + 7) >> 3
}

function bitSet(bytes: Uint8Array, i: number): boolean {
  return (bytes[i >> 3] & (1 << (i & 7))) !== 0
}

function int64Value(v: bigint): number | bigint {
  return v <= MAX_SAFE && v >= MIN_SAFE ? Number(v) : v
}

/** Walks the column blocks sequentially; tracks logically read bytes. */
class Cursor {
  pos: number
  bytesRead = 0

  constructor(
    private buf: Uint8Array,
    private rows: number,
    start: number,
    private end: number,
  ) {
    this.pos = start
  }

  private take(n: number, counted: boolean): Uint8Array {
    if (this.pos + n > this.end) {
      throw new CorruptFileError('column block extends past footer')
    }
    const view = this.buf.subarray(this.pos, this.pos + n)
    this.pos += n
    if (counted) this.bytesRead += n
    return view
  }

  private stringDataLen(): number {
    const off = this.pos + this.rows * 4
    if (off + 4 > this.end) throw new CorruptFileError('string offsets past footer')
    return u32(this.buf, off)
  }

  skip(field: FieldDef): void {
    if (field.nullable) this.take(bitmapLen(this.rows), false)
    if (field.type === 'INT64' || field.type === 'FLOAT64') {
      this.take(this.rows * 8, false)
    } else if (field.type === 'BOOL') {
      this.take(bitmapLen(this.rows), false)
    } else {
      const total = this.stringDataLen()
      this.bytesRead += 4 // the final-offset probe
      this.take((this.rows + 1) * 4 + total, false)
    }
  }

  decode(field: FieldDef): Value[] {
    let present: Uint8Array | null = null
    if (field.nullable) present = this.take(bitmapLen(this.rows), true)

    const out: Value[] = new Array(this.rows)
    if (field.type === 'INT64' || field.type === 'FLOAT64') {
      const raw = this.take(this.rows * 8, true)
      const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength)
      for (let i = 0; i < this.rows; i++) {
        out[i] =
          field.type === 'INT64'
            ? int64Value(view.getBigInt64(i * 8, true))
            : view.getFloat64(i * 8, true)
      }
    } else if (field.type === 'BOOL') {
      const raw = this.take(bitmapLen(this.rows), true)
      for (let i = 0; i < this.rows; i++) out[i] = bitSet(raw, i)
    } else {
      const rawOffsets = this.take((this.rows + 1) * 4, true)
      const offView = new DataView(rawOffsets.buffer, rawOffsets.byteOffset, rawOffsets.byteLength)
      const offsets = new Array<number>(this.rows + 1)
      for (let i = 0; i <= this.rows; i++) offsets[i] = offView.getUint32(i * 4, true)
      for (let i = 0; i < this.rows; i++) {
        if (offsets[i + 1] < offsets[i]) {
          throw new CorruptFileError(`column ${field.name}: descending string offsets`)
        }
      }
      const blob = this.take(offsets[this.rows] ?? 0, true)
      for (let i = 0; i < this.rows; i++) {
        try {
          out[i] = utf8.decode(blob.subarray(offsets[i], offsets[i + 1]))
        } catch {
          throw new CorruptFileError(`column ${field.name}: invalid UTF-8`)
        }
      }
    }

    if (present) {
      for (let i = 0; i < this.rows; i++) {
        if (!bitSet(present, i)) out[i] = null
      }
    }
    return out
  }
}

export interface DecodeResult {
  schema: Schema
  columns: Map<string, Value[]>
  rowCount: number
  bytesRead: number
}

/**
 * Decode only the wanted columns (all when null). Columns present in
 * `readerSchema` but absent from the file decode as all-null
 * (additive schema evolution).
 */
export function decodeColumns(
  buf: Uint8Array,
  wanted: string[] | null,
  readerSchema?: Schema,
): DecodeResult {
  const { schema, rowCount, dataStart } = readHeader(buf)
  const footer = readFooter(buf)
  if (footer.rowCount !== rowCount) {
    throw new CorruptFileError(`footer row_count ${footer.rowCount} != header ${rowCount}`)
  }
  const fileNames = new Set(schema.fields.map((f) => f.name))
  const missing: string[] = []
  let wantedSet: Set<string> | null = null
  if (wanted !== null) {
    wantedSet = new Set()
    for (const name of wanted) {
      if (fileNames.has(name)) {
        wantedSet.add(name)
      } else if (readerSchema?.fields.some((f) => f.name === name)) {
        missing.push(name)
      } else {
        throw new UnknownColumnError(`unknown column ${name}`)
      }
    }
  }

  const cursor = new Cursor(buf, rowCount, dataStart, footer.footerStart)
  cursor.bytesRead += dataStart // header + schema block always read
  const columns = new Map<string, Value[]>()
  for (const field of schema.fields) {
    if (wantedSet === null || wantedSet.has(field.name)) {
      columns.set(field.name, cursor.decode(field))
    } else {
      cursor.skip(field)
    }
  }
  if (cursor.pos !== footer.footerStart) {
    throw new CorruptFileError('column blocks do not line up with the footer')
  }
  for (const name of missing) {
    columns.set(name, new Array(rowCount).fill(null))
  }
  return { schema, columns, rowCount, bytesRead: cursor.bytesRead }
}

function statsEqual(a: Value, b: unknown): boolean {
  if (a === null || a === undefined) return b === undefined || b === null
  if (typeof a === 'bigint') return typeof b === 'number' && BigInt(b) === a
  return a === b
}

/**
 * Fully verifying decode: both magics, extents, crc32, row-count
 * agreement, and footer stats vs recomputed stats. Returns rows.
 */
export function verifyFile(buf: Uint8Array): {
  schema: Schema
  rows: Value[][]
  stats: Map<string, ColumnStats>
} {
  const footer = readFooter(buf)
  if (footer.crc === null) throw new CorruptFileError('footer missing crc32')
  const actual = crc32(buf.subarray(0, footer.footerStart))
  if (actual !== footer.crc) {
    throw new CorruptFileError(`crc32 mismatch: stored ${footer.crc}, computed ${actual}`)
  }
  const { schema, columns, rowCount } = decodeColumns(buf, null)
  const declared = new Set(Object.keys(footer.columns))
  if (
    declared.size !== schema.fields.length ||
    !schema.fields.every((f) => declared.has(f.name))
  ) {
    throw new CorruptFileError('footer column set disagrees with schema')
  }

  const stats = new Map<string, ColumnStats>()
  for (const field of schema.fields) {
    const values = columns.get(field.name)!
    let min: Value = null
    let max: Value = null
    let nulls = 0
    for (const v of values) {
      if (v === null) {
        nulls++
        continue
      }
      if (min === null || (v as never) < (min as never)) min = v
      if (max === null || (v as never) > (max as never)) max = v
    }
    const stored = footer.columns[field.name]
    if (
      stored.null_count !== nulls ||
      !statsEqual(min, stored.min) ||
      !statsEqual(max, stored.max)
    ) {
      throw new CorruptFileError(`column ${field.name}: footer stats disagree`)
    }
    stats.set(field.name, { min, max, nullCount: nulls })
  }

  const rows: Value[][] = new Array(rowCount)
  const cols = schema.fields.map((f) => columns.get(f.name)!)
  for (let i = 0; i < rowCount; i++) {
    rows[i] = cols.map((c) => c[i])
  }
  return { schema, rows, stats }
}
