"""SQL-subset parser.

Grammar (keywords case-insensitive, strings single-quoted with doubled
quote escape):

    statement  : select | register
    select     : SELECT items FROM ident [WHERE pred]
                 [GROUP BY ident ("," ident)*] [LIMIT uint]
    items      : "*" | item ("," item)*
    item       : ident | (COUNT|SUM|AVG|MIN|MAX) "(" (ident|"*") ")"
    pred       : or ; or : and (OR and)* ; and : unit (AND unit)*
    unit       : "(" pred ")" | ident IS [NOT] NULL | ident cmp literal
    cmp        : = | != | < | <= | > | >=
    literal    : number | string | TRUE | FALSE
    register   : CREATE EXTERNAL TABLE ident LOCATION string
                 FORMAT EDSP_ICE_V1 [";"]

JOIN, ORDER BY, HAVING and friends are recognized and rejected as
unsupported rather than producing a confusing syntax error.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SqlSyntaxError, UnsupportedFeatureError
from .predicates import And, Comparison, NullCheck, Or, Predicate

AGG_FUNCS = ("count", "sum", "avg", "min", "max")

_UNSUPPORTED = {
    "join", "order", "having", "distinct", "union", "offset", "inner",
    "outer", "left", "right", "cross", "between", "in", "like", "not",
    "case", "as",
}

_KEYWORDS = {
    "select", "from", "where", "group", "by", "limit", "and", "or", "is",
    "null", "true", "false", "create", "external", "table", "location",
    "format",
} | _UNSUPPORTED


@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class Aggregate:
    func: str  # count / sum / avg / min / max
    arg: str | None  # None means COUNT(*)

    @property
    def label(self) -> str:
        return f"{self.func}({self.arg if self.arg is not None else '*'})"


@dataclass
class Query:
    table: str
    projections: tuple = ()  # ColumnRef | Aggregate
    select_star: bool = False
    predicate: Predicate | None = None
    group_by: tuple[str, ...] = ()
    limit: int | None = None
    # Time travel is selected out of band (CLI flags), not by grammar.
    as_of_snapshot_id: int | None = None
    as_of_ms: int | None = None


@dataclass
class RegisterExternalTable:
    name: str
    location: str


@dataclass
class _Token:
    kind: str  # ident, number, string, op, eof
    text: str
    pos: int
    value: object = None


_OPS = ("<=", ">=", "!=", "<", ">", "=", "(", ")", ",", "*", ";")


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "'":
            j = i + 1
            parts = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string literal", i)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        parts.append("'")
                        j += 2
                        continue
                    break
                parts.append(text[j])
                j += 1
            tokens.append(_Token("string", text[i : j + 1], i, "".join(parts)))
            i = j + 1
            continue
        if ch.isdigit() or (
            ch in "+-" and i + 1 < n and (text[i + 1].isdigit() or text[i + 1] == ".")
        ) or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1 if ch in "+-" else i
            k = j
            seen_dot = seen_exp = False
            while k < n:
                c = text[k]
                if c.isdigit():
                    k += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    k += 1
                elif c in "eE" and not seen_exp and k > j:
                    seen_exp = True
                    k += 1
                    if k < n and text[k] in "+-":
                        k += 1
                else:
                    break
            raw = text[i:k]
            try:
                value = float(raw) if (seen_dot or seen_exp) else int(raw)
            except ValueError:
                raise SqlSyntaxError(f"bad numeric literal {raw!r}", i) from None
            tokens.append(_Token("number", raw, i, value))
            i = k
            continue
        matched = False
        for op in _OPS:
            if text.startswith(op, i):
                tokens.append(_Token("op", op, i))
                i += len(op)
                matched = True
                break
        if matched:
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
            continue
        raise SqlSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    # -- token helpers ------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.lower() == word

    def eat_keyword(self, word: str) -> _Token:
        tok = self.peek()
        if not self.at_keyword(word):
            raise SqlSyntaxError(f"expected {word.upper()}, found {tok.text!r}", tok.pos)
        return self.next()

    def at_op(self, op: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text == op

    def eat_op(self, op: str) -> _Token:
        tok = self.peek()
        if not self.at_op(op):
            raise SqlSyntaxError(f"expected {op!r}, found {tok.text!r}", tok.pos)
        return self.next()

    def ident(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            raise SqlSyntaxError(f"expected {what}, found {tok.text!r}", tok.pos)
        lower = tok.text.lower()
        if lower in _UNSUPPORTED:
            raise UnsupportedFeatureError(tok.text.upper(), tok.pos)
        if lower in _KEYWORDS:
            raise SqlSyntaxError(f"expected {what}, found keyword {tok.text!r}", tok.pos)
        return self.next().text

    def reject_unsupported(self):
        tok = self.peek()
        if tok.kind == "ident" and tok.text.lower() in _UNSUPPORTED:
            raise UnsupportedFeatureError(tok.text.upper(), tok.pos)

    # -- grammar --------------------------------------------------------

    def statement(self):
        if self.at_keyword("create"):
            stmt = self.register()
        elif self.at_keyword("select"):
            stmt = self.select()
        else:
            tok = self.peek()
            raise SqlSyntaxError(f"expected SELECT or CREATE, found {tok.text!r}", tok.pos)
        if self.at_op(";"):
            self.next()
        tok = self.peek()
        if tok.kind != "eof":
            self.reject_unsupported()
            raise SqlSyntaxError(f"trailing input {tok.text!r}", tok.pos)
        return stmt

    def register(self) -> RegisterExternalTable:
        self.eat_keyword("create")
        self.eat_keyword("external")
        self.eat_keyword("table")
        name = self.ident("table name")
        self.eat_keyword("location")
        loc = self.peek()
        if loc.kind != "string":
            raise SqlSyntaxError("expected quoted location", loc.pos)
        self.next()
        self.eat_keyword("format")
        fmt = self.peek()
        if fmt.kind != "ident" or fmt.text.upper() != "EDSP_ICE_V1":
            raise SqlSyntaxError(f"unknown format {fmt.text!r}", fmt.pos)
        self.next()
        return RegisterExternalTable(name, loc.value)

    def select(self) -> Query:
        self.eat_keyword("select")
        self.reject_unsupported()
        star = False
        projections: list = []
        if self.at_op("*"):
            self.next()
            star = True
        else:
            projections.append(self.item())
            while self.at_op(","):
                self.next()
                projections.append(self.item())
        self.eat_keyword("from")
        table = self.ident("table name")
        query = Query(table=table, projections=tuple(projections), select_star=star)

        self.reject_unsupported()
        if self.at_keyword("where"):
            self.next()
            query.predicate = self.pred()
        self.reject_unsupported()
        if self.at_keyword("group"):
            self.next()
            self.eat_keyword("by")
            cols = [self.ident("group column")]
            while self.at_op(","):
                self.next()
                cols.append(self.ident("group column"))
            query.group_by = tuple(cols)
        self.reject_unsupported()
        if self.at_keyword("limit"):
            self.next()
            tok = self.peek()
            if tok.kind != "number" or not isinstance(tok.value, int) or tok.value < 0:
                raise SqlSyntaxError("LIMIT takes an unsigned integer", tok.pos)
            self.next()
            query.limit = tok.value
        self.reject_unsupported()
        return query

    def item(self):
        tok = self.peek()
        if tok.kind == "ident" and tok.text.lower() in AGG_FUNCS:
            ahead = self.tokens[self.i + 1]
            if ahead.kind == "op" and ahead.text == "(":
                func = self.next().text.lower()
                self.eat_op("(")
                if self.at_op("*"):
                    self.next()
                    if func != "count":
                        raise SqlSyntaxError(f"{func.upper()}(*) is not defined", tok.pos)
                    arg = None
                else:
                    arg = self.ident("aggregate argument")
                self.eat_op(")")
                return Aggregate(func, arg)
        return ColumnRef(self.ident("column name"))

    def pred(self) -> Predicate:
        left = self.and_expr()
        parts = [left]
        while self.at_keyword("or"):
            self.next()
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self) -> Predicate:
        parts = [self.unit()]
        while self.at_keyword("and"):
            self.next()
            parts.append(self.unit())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unit(self) -> Predicate:
        if self.at_op("("):
            self.next()
            inner = self.pred()
            self.eat_op(")")
            return inner
        self.reject_unsupported()
        column = self.ident("column name")
        if self.at_keyword("is"):
            self.next()
            negate = False
            if self.at_keyword("not"):
                # NOT is only unsupported as a bare operator; IS NOT NULL is fine.
                self.next()
                negate = True
            self.eat_keyword("null")
            return NullCheck(column, negate)
        self.reject_unsupported()  # IN / LIKE / BETWEEN / NOT read better as such
        tok = self.peek()
        if tok.kind != "op" or tok.text not in ("=", "!=", "<", "<=", ">", ">="):
            raise SqlSyntaxError(f"expected comparison, found {tok.text!r}", tok.pos)
        self.next()
        lit = self.literal()
        return Comparison(column, tok.text, lit)

    def literal(self):
        tok = self.peek()
        if tok.kind in ("number", "string"):
            self.next()
            return tok.value
        if tok.kind == "ident" and tok.text.lower() in ("true", "false"):
            self.next()
            return tok.text.lower() == "true"
        if tok.kind == "ident" and tok.text.lower() == "null":
            raise SqlSyntaxError("compare with IS [NOT] NULL, not = NULL", tok.pos)
        raise SqlSyntaxError(f"expected literal, found {tok.text!r}", tok.pos)


def parse(text: str) -> Query | RegisterExternalTable:
    """Parse one statement; no semantic checks beyond the grammar."""
    return _Parser(text).statement()


def parse_predicate(text: str) -> Predicate:
    """Parse a bare predicate expression (the scan CLI's --where)."""
    parser = _Parser(text)
    pred = parser.pred()
    tok = parser.peek()
    if tok.kind != "eof":
        raise SqlSyntaxError(f"trailing input {tok.text!r}", tok.pos)
    return pred
