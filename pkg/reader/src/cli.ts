#!/usr/bin/env node
/**
 * edsp-reader: query a table in place, straight from its bytes.
 *
 *   edsp-reader --table-root /store/tables/poi --pattern q2 \
 *       --param prefecture=P31 --format json
 *
 * Results go to stdout, counters to stderr. Exit codes: 0 ok,
 * 2 user error, 1 internal error.
 */

import { parseArgs } from 'node:util'
import process from 'node:process'

import { query, PatternName, QueryParams, QueryResult } from './query.js'
import { open } from './table.js'
import { ColType, ReaderError, Value } from './types.js'

const RESERVED_PARAMS = new Set(['limit', 'column', 'value', 'group_by', 'agg'])

function parseParamValue(text: string): number | boolean | string | null {
  if (text === 'null' || text === 'none') return null
  if (text === 'true') return true
  if (text === 'false') return false
  if (/^[+-]?\d+$/.test(text)) return Number(text)
  if (/^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$/.test(text) && /[.eE]/.test(text)) {
    return Number(text)
  }
  return text
}

function collectParams(pairs: string[], json: string | undefined, pattern: PatternName): QueryParams {
  const params: Record<string, unknown> = json ? JSON.parse(json) : {}
  for (const pair of pairs) {
    const eq = pair.indexOf('=')
    if (eq < 0) throw new ReaderError(`--param takes key=value, got ${pair}`)
    const key = pair.slice(0, eq)
    const value = parseParamValue(pair.slice(eq + 1))
    if (RESERVED_PARAMS.has(key)) {
      params[key] = value
    } else if (pattern === 'q2') {
      // Convenience spelling: --param prefecture=P31 filters that column.
      params.column = key
      params.value = value
    } else if (pattern === 'q3' && params.group_by === undefined) {
      params.group_by = key
      params.agg = value
    } else {
      throw new ReaderError(`unknown parameter ${key} for pattern ${pattern}`)
    }
  }
  return params as QueryParams
}

/**
 * Rows serialize by column type so doubles keep their type across
 * languages: an integral FLOAT64 is written as "4.0", never "4".
 */
function encodeValue(v: Value, t: ColType | 'COUNT'): string {
  if (v === null) return 'null'
  if (t === 'FLOAT64') {
    const s = String(v)
    return /[.eE]/.test(s) ? s : s + '.0'
  }
  if (t === 'BOOL') return v ? 'true' : 'false'
  if (t === 'STRING') return JSON.stringify(v)
  // INT64 / COUNT
  if (typeof v === 'bigint') {
    // Beyond 2^53 JSON numbers round; a decimal string stays exact.
    return v <= BigInt(Number.MAX_SAFE_INTEGER) && v >= -BigInt(Number.MAX_SAFE_INTEGER)
      ? String(v)
      : JSON.stringify(String(v))
  }
  return String(v)
}

function emitJson(result: QueryResult): string {
  const rows = result.rows
    .map((row) => '[' + row.map((v, i) => encodeValue(v, result.columnTypes[i])).join(',') + ']')
    .join(',')
  return (
    '{"columns":' +
    JSON.stringify(result.columns) +
    ',"rows":[' +
    rows +
    '],"counters":' +
    JSON.stringify(result.counters) +
    ',"wall_time_ms":' +
    String(result.counters.wall_time_ms) +
    '}'
  )
}

function emitCsv(result: QueryResult): string {
  const quote = (s: string) => (/[",\n]/.test(s) ? '"' + s.replaceAll('"', '""') + '"' : s)
  const lines = [result.columns.map(quote).join(',')]
  for (const row of result.rows) {
    lines.push(
      row
        .map((v, i) =>
          v === null ? '' : typeof v === 'string' ? quote(v) : encodeValue(v, result.columnTypes[i]),
        )
        .join(','),
    )
  }
  return lines.join('\n') + '\n'
}

export function main(argv: string[]): number {
  let parsed
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        'table-root': { type: 'string' },
        pattern: { type: 'string' },
        param: { type: 'string', multiple: true },
        params: { type: 'string' },
        at: { type: 'string' },
        'at-ts': { type: 'string' },
        format: { type: 'string', default: 'json' },
        'no-prune': { type: 'boolean', default: false },
        help: { type: 'boolean', default: false },
      },
    })
  } catch (err) {
    process.stderr.write(`error: ${String(err)}\n`)
    return 2
  }
  const opts = parsed.values
  if (opts.help) {
    process.stderr.write(
      'usage: edsp-reader --table-root DIR --pattern q1|q2|q3 ' +
        '[--param k=v ...] [--params JSON] [--at SNAPSHOT_ID | --at-ts MS] ' +
        '[--format json|csv] [--no-prune]\n',
    )
    return 0
  }

  try {
    const tableRoot = opts['table-root']
    const pattern = opts.pattern as PatternName | undefined
    if (!tableRoot || !pattern) throw new ReaderError('--table-root and --pattern are required')
    if (pattern !== 'q1' && pattern !== 'q2' && pattern !== 'q3') {
      throw new ReaderError(`unknown pattern ${String(pattern)}`)
    }
    const params = collectParams(opts.param ?? [], opts.params, pattern)
    const at =
      opts.at !== undefined
        ? { snapshotId: Number(opts.at) }
        : opts['at-ts'] !== undefined
          ? { asOfMs: Number(opts['at-ts']) }
          : undefined

    const table = open(tableRoot, at)
    const result = query(table, pattern, params, { prune: !opts['no-prune'] })

    process.stdout.write(opts.format === 'csv' ? emitCsv(result) : emitJson(result) + '\n')
    const c = result.counters
    process.stderr.write(
      `counters: files_considered=${c.files_considered} files_pruned=${c.files_pruned} ` +
        `data_bytes_read=${c.data_bytes_read} rows_scanned=${c.rows_scanned} ` +
        `wall_time_ms=${c.wall_time_ms.toFixed(3)}\n`,
    )
    return 0
  } catch (err) {
    if (err instanceof ReaderError) {
      process.stderr.write(`error: ${err.message}\n`)
      return 2
    }
    process.stderr.write(`internal error: ${String(err)}\n`)
    return 1
  }
}

// process.exit() would truncate stdout past the pipe buffer; setting the
// exit code lets pending writes drain before the process ends.
process.exitCode = main(process.argv.slice(2))
