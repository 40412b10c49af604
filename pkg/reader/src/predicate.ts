/**
 * Predicate evaluation (SQL three-valued logic) and manifest-level
 * pruning against per-file min/max statistics.
 *
 * String order is by Unicode code point (equivalently, UTF-8 bytes) —
 * NOT JavaScript's default UTF-16 code-unit order, which disagrees
 * beyond the basic plane.
 */

import { ColumnStats, ReaderError, Value } from './types.js'

export type CompareOp = '=' | '!=' | '<' | '<=' | '>' | '>='

export interface Comparison {
  kind: 'cmp'
  column: string
  op: CompareOp
  value: number | boolean | string
}

export interface NullCheck {
  kind: 'null'
  column: string
  negate: boolean
}

export type Predicate = Comparison | NullCheck

export class TypeMismatchError extends ReaderError {}

export function codePointCompare(a: string, b: string): number {
  let i = 0
  let j = 0
  while (i < a.length && j < b.length) {
    const ca = a.codePointAt(i)!
    const cb = b.codePointAt(j)!
    if (ca !== cb) return ca < cb ? -1 : 1
    i += ca > 0xffff ? 2 : 1
    j += cb > 0xffff ? 2 : 1
  }
  const ra = a.length - i
  const rb = b.length - j
  return ra === rb ? 0 : ra < rb ? -1 : 1
}

/** Total-order comparison for two non-null values of one column type. */
export function compareValues(a: Exclude<Value, null>, b: Exclude<Value, null>): number {
  if (typeof a === 'string' && typeof b === 'string') return codePointCompare(a, b)
  if (typeof a === 'boolean' && typeof b === 'boolean') {
    return a === b ? 0 : a ? 1 : -1
  }
  if (typeof a === 'boolean' || typeof b === 'boolean') {
    throw new TypeMismatchError('cannot compare BOOL with non-BOOL')
  }
  if (typeof a === 'string' || typeof b === 'string') {
    throw new TypeMismatchError('cannot compare STRING with non-STRING')
  }
  // number/bigint in any combination
  if (a === b) return 0
  return (a as never) < (b as never) ? -1 : 1
}

/** Three-valued truth: null operands make comparisons unknown (null). */
export function evalPredicate(pred: Predicate, get: (column: string) => Value): boolean | null {
  if (pred.kind === 'null') {
    const v = get(pred.column)
    return pred.negate ? v !== null : v === null
  }
  const v = get(pred.column)
  if (v === null) return null
  const c = compareValues(v, pred.value)
  switch (pred.op) {
    case '=':
      return c === 0
    case '!=':
      return c !== 0
    case '<':
      return c < 0
    case '<=':
      return c <= 0
    case '>':
      return c > 0
    case '>=':
      return c >= 0
  }
}

/**
 * True when the file's statistics prove the predicate matches no row.
 * Mirrors the table layer's pruning rules from the format spec.
 */
export function statsExclude(stats: ColumnStats | undefined, rowCount: number, pred: Predicate): boolean {
  if (pred.kind === 'null') {
    // Column missing from an old file: every value reads as null.
    const nulls = stats ? stats.nullCount : rowCount
    return pred.negate ? nulls === rowCount : nulls === 0
  }
  if (!stats || stats.min === null) return true // all null: no comparison matches
  const { min, max } = stats
  const v = pred.value
  const sameKind =
    typeof v === 'string'
      ? typeof min === 'string'
      : typeof v === 'boolean'
        ? typeof min === 'boolean'
        : typeof min !== 'string' && typeof min !== 'boolean'
  if (!sameKind) return false // leave mixed types to the executor's error
  const lo = compareValues(v, min as Exclude<Value, null>)
  const hi = compareValues(v, max as Exclude<Value, null>)
  switch (pred.op) {
    case '=':
      return lo < 0 || hi > 0
    case '!=':
      return compareValues(min as Exclude<Value, null>, max as Exclude<Value, null>) === 0 && lo === 0
    case '<':
      return lo <= 0 // min >= v
    case '<=':
      return lo < 0 // min > v
    case '>':
      return hi >= 0 // max <= v
    case '>=':
      return hi > 0 // max < v
  }
}
