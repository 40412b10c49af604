"""Predicate AST shared by the planner and both query engines.

Only the *representation* lives here. Evaluation is intentionally
duplicated per engine (agreement between independent implementations
is the system's central consistency oracle), and file-level pruning
interprets conjuncts against min/max statistics in the table layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")

Literal = Union[int, float, str, bool]


@dataclass(frozen=True)
class Comparison:
    column: str
    op: str  # one of COMPARE_OPS
    value: Literal

    def __post_init__(self):
        if self.op not in COMPARE_OPS:
            raise ValueError(f"bad comparison operator: {self.op!r}")


@dataclass(frozen=True)
class NullCheck:
    column: str
    negate: bool = False  # False: IS NULL, True: IS NOT NULL


@dataclass(frozen=True)
class And:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


@dataclass(frozen=True)
class Or:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


Predicate = Union[Comparison, NullCheck, And, Or]


def eq(column: str, value: Literal) -> Comparison:
    return Comparison(column, "=", value)


def ne(column: str, value: Literal) -> Comparison:
    return Comparison(column, "!=", value)


def lt(column: str, value: Literal) -> Comparison:
    return Comparison(column, "<", value)


def le(column: str, value: Literal) -> Comparison:
    return Comparison(column, "<=", value)


def gt(column: str, value: Literal) -> Comparison:
    return Comparison(column, ">", value)


def ge(column: str, value: Literal) -> Comparison:
    return Comparison(column, ">=", value)


def is_null(column: str) -> NullCheck:
    return NullCheck(column, negate=False)


def is_not_null(column: str) -> NullCheck:
    return NullCheck(column, negate=True)


def and_(*parts: Predicate) -> Predicate:
    return parts[0] if len(parts) == 1 else And(parts)


def or_(*parts: Predicate) -> Predicate:
    return parts[0] if len(parts) == 1 else Or(parts)


def columns_of(pred: Predicate) -> set[str]:
    if isinstance(pred, (Comparison, NullCheck)):
        return {pred.column}
    cols: set[str] = set()
    for part in pred.parts:
        cols |= columns_of(part)
    return cols


def conjuncts(pred: Predicate) -> list[Predicate]:
    """Flatten nested top-level ANDs into a conjunct list."""
    if isinstance(pred, And):
        out: list[Predicate] = []
        for part in pred.parts:
            out.extend(conjuncts(part))
        return out
    return [pred]
