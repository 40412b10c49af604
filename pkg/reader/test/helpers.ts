/** Test helpers: a byte-level ECF builder and canonical row comparison. */

import { crc32 } from '../src/crc32.js'
import { ColType, Value } from '../src/types.js'

const enc = new TextEncoder()

export interface BuildField {
  name: string
  type: ColType
  nullable?: boolean
}

/** Builds ECF v1 bytes from scratch (independent of any writer code). */
export function buildEcf(
  fields: BuildField[],
  rows: Value[][],
  tweak?: { crc?: number; footerRowCount?: number },
): Uint8Array {
  const parts: Uint8Array[] = []
  const push = (b: Uint8Array) => parts.push(b)
  const u32 = (v: number) => {
    const b = new Uint8Array(4)
    new DataView(b.buffer).setUint32(0, v, true)
    return b
  }
  const u64 = (v: number) => {
    const b = new Uint8Array(8)
    new DataView(b.buffer).setBigUint64(0, BigInt(v), true)
    return b
  }

  push(enc.encode('ECF1'))
  const schemaJson = enc.encode(
    JSON.stringify({
      schema_id: 0,
      fields: fields.map((f) => ({ name: f.name, type: f.type, nullable: Boolean(f.nullable) })),
    }),
  )
  push(u32(schemaJson.length))
  push(schemaJson)
  push(u64(rows.length))

  const stats: Record<string, Record<string, unknown>> = {}
  fields.forEach((field, col) => {
    const values = rows.map((r) => r[col])
    const bitmapLen = (rows.length + 7) >> 3
    if (field.nullable) {
      const bitmap = new Uint8Array(bitmapLen)
      values.forEach((v, i) => {
        if (v !== null) bitmap[i >> 3] |= 1 << (i & 7)
      })
      push(bitmap)
    }
    if (field.type === 'INT64' || field.type === 'FLOAT64') {
      const b = new Uint8Array(rows.length * 8)
      const view = new DataView(b.buffer)
      values.forEach((v, i) => {
        if (field.type === 'INT64') view.setBigInt64(i * 8, BigInt((v as number) ?? 0), true)
        else view.setFloat64(i * 8, (v as number) ?? 0, true)
      })
      push(b)
    } else if (field.type === 'BOOL') {
      const bitmap = new Uint8Array(bitmapLen)
      values.forEach((v, i) => {
        if (v) bitmap[i >> 3] |= 1 << (i & 7)
      })
      push(bitmap)
    } else {
      const blobs = values.map((v) => enc.encode((v as string) ?? ''))
      const offsets = new Uint8Array((rows.length + 1) * 4)
      const view = new DataView(offsets.buffer)
      let total = 0
      blobs.forEach((b, i) => {
        total += b.length
        view.setUint32((i + 1) * 4, total, true)
      })
      push(offsets)
      for (const b of blobs) push(b)
    }
    const nonNull = values.filter((v) => v !== null)
    const colStats: Record<string, unknown> = {
      null_count: values.length - nonNull.length,
    }
    if (nonNull.length > 0) {
      colStats.min = nonNull.reduce((a, b) => ((a as never) <= (b as never) ? a : b))
      colStats.max = nonNull.reduce((a, b) => ((a as never) >= (b as never) ? a : b))
    }
    stats[field.name] = colStats
  })

  const body = concat(parts)
  const footerJson = enc.encode(
    JSON.stringify({
      row_count: tweak?.footerRowCount ?? rows.length,
      crc32: tweak?.crc ?? crc32(body),
      columns: stats,
    }),
  )
  return concat([body, footerJson, u32(footerJson.length), enc.encode('ECF1')])
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0)
  const out = new Uint8Array(total)
  let off = 0
  for (const p of parts) {
    out.set(p, off)
    off += p.length
  }
  return out
}

// --- canonical comparison (mirrors the harness's rules) ---------------------

function tag(v: Value): number {
  if (v === null) return 3
  if (typeof v === 'boolean') return 0
  if (typeof v === 'number' || typeof v === 'bigint') return 1
  return 2
}

function sortCompare(a: Value, b: Value): number {
  const ta = tag(a)
  const tb = tag(b)
  if (ta !== tb) return ta - tb
  if (a === null) return 0
  if (a === b) return 0
  return (a as never) < (b as never) ? -1 : 1
}

export function canonicalize(rows: Value[][]): Value[][] {
  return [...rows].sort((ra, rb) => {
    for (let i = 0; i < Math.min(ra.length, rb.length); i++) {
      const c = sortCompare(ra[i], rb[i])
      if (c !== 0) return c
    }
    return ra.length - rb.length
  })
}

export function valuesMatch(a: Value, b: Value): boolean {
  if (a === null || b === null) return a === null && b === null
  if (typeof a === 'boolean' || typeof b === 'boolean') return a === b
  if (typeof a === 'bigint' || typeof b === 'bigint') return BigInt(a as never) === BigInt(b as never)
  if (typeof a === 'number' && typeof b === 'number') {
    if (a === b) return true
    return Math.abs(a - b) <= 1e-9 * Math.max(Math.abs(a), Math.abs(b))
  }
  return a === b
}

/** null when canonically equal, else a description of the first mismatch. */
export function rowsEqual(want: Value[][], got: Value[][]): string | null {
  if (want.length !== got.length) return `row count ${want.length} != ${got.length}`
  const a = canonicalize(want)
  const b = canonicalize(got)
  for (let i = 0; i < a.length; i++) {
    if (a[i].length !== b[i].length) return `row ${i}: width ${a[i].length} != ${b[i].length}`
    for (let j = 0; j < a[i].length; j++) {
      if (!valuesMatch(a[i][j], b[i][j])) {
        return `row ${i} col ${j}: ${String(a[i][j])} != ${String(b[i][j])}`
      }
    }
  }
  return null
}
