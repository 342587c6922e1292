"""Verification predicates over a profile store.

Grammar::

    pred      := assertion
    assertion := "count" "(" table [where] ")" cmp INT
               | "field" "(" table "." field [where] ")" cmp literal
    where     := "where" cond { "and" cond }
    cond      := field cmp literal
    cmp       := ">=" | "<=" | "=" | ">" | "<"
    literal   := 'string' | "string" | number | true | false | {{template}} | <param>
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Any, Mapping

from .store import ProfileStore
from .templates import parse_template, resolve_expr

OPS = {">=": operator.ge, "<=": operator.le, "=": operator.eq, ">": operator.gt, "<": operator.lt}

_TOKEN_SPEC = [
    ("TEMPLATE", r"\{\{[^{}]*\}\}"),
    ("PARAM", r"<[A-Za-z_][A-Za-z0-9_]*>"),
    ("NUMBER", r"-?\d+(?:\.\d+)?"),
    ("STRING", r"'[^']*'|\"[^\"]*\""),
    ("CMP", r">=|<=|=|>|<"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"[().]"),
    ("WS", r"\s+"),
]
_LEXER = re.compile("|".join(f"(?P<{name}>{pat})" for name, pat in _TOKEN_SPEC))


class PredicateError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True)
class Literal:
    kind: str  # number | string | bool | template | param
    value: Any


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: Literal


@dataclass(frozen=True)
class PredicateAST:
    kind: str  # count | field
    table: str
    conditions: tuple[Condition, ...]
    op: str
    value: Literal
    field: str | None = None


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _LEXER.match(text, pos)
        if not m:
            raise PredicateError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "WS":
            out.append((m.lastgroup, m.group(0), pos))
        pos = m.end()
    out.append(("EOF", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise PredicateError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def literal(self) -> Literal:
        kind, text, pos = self.peek()
        self.i += 1
        if kind == "NUMBER":
            return Literal("number", float(text) if "." in text else int(text))
        if kind == "STRING":
            return Literal("string", text[1:-1])
        if kind == "TEMPLATE":
            try:
                return Literal("template", parse_template(text))
            except ValueError as exc:
                raise PredicateError(str(exc), pos) from None
        if kind == "PARAM":
            return Literal("param", text[1:-1])
        if kind == "IDENT" and text in ("true", "false"):
            return Literal("bool", text == "true")
        raise PredicateError(f"expected a literal, found {text or 'end of input'!r}", pos)

    def conditions(self) -> tuple[Condition, ...]:
        conds = []
        if self.peek()[:2] == ("IDENT", "where"):
            self.take()
            while True:
                fld = self.take("IDENT")[1]
                op = self.take("CMP")[1]
                conds.append(Condition(fld, op, self.literal()))
                if self.peek()[:2] != ("IDENT", "and"):
                    break
                self.take()
        return tuple(conds)

    def parse(self) -> PredicateAST:
        kind, text, pos = self.take("IDENT")
        if text not in ("count", "field"):
            raise PredicateError(f"expected 'count' or 'field', found {text!r}", pos)
        self.take("PUNCT", "(")
        table = self.take("IDENT")[1]
        fld = None
        if text == "field":
            self.take("PUNCT", ".")
            fld = self.take("IDENT")[1]
        conds = self.conditions()
        self.take("PUNCT", ")")
        op = self.take("CMP")[1]
        if text == "count":
            k, v, p = self.take("NUMBER")
            if "." in v or v.startswith("-"):
                raise PredicateError("count must be compared with a non-negative integer", p)
            value = Literal("number", int(v))
        else:
            value = self.literal()
        self.take("EOF")
        return PredicateAST(text, table, conds, op, value, fld)


def parse_predicate(text: str) -> PredicateAST:
    return _Parser(text).parse()


def resolve_literal(lit: Literal, store: ProfileStore, params: Mapping | None = None):
    if lit.kind == "template":
        return resolve_expr(lit.value, store)
    if lit.kind == "param":
        params = params or {}
        if lit.value not in params:
            raise KeyError(f"instance parameter {lit.value!r} is not set")
        return params[lit.value]
    return lit.value


def _num(x):
    if isinstance(x, bool):
        return None
    if isinstance(x, (int, float)):
        return x
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def compare(lhs, op: str, rhs) -> bool:
    """Numeric comparison when both sides read as numbers, else string comparison."""
    if lhs is None:
        return False
    a, b = _num(lhs), _num(rhs)
    if a is not None and b is not None:
        return OPS[op](a, b)
    if isinstance(lhs, bool) or isinstance(rhs, bool):
        return OPS[op](str(lhs).lower(), str(rhs).lower())
    return OPS[op](str(lhs), str(rhs))


def filter_rows(rows, conditions, store: ProfileStore, params: Mapping | None = None):
    resolved = [(c.field, c.op, resolve_literal(c.value, store, params)) for c in conditions]
    return [r for r in rows if all(compare(r.get(f), op, v) for f, op, v in resolved)]


def evaluate_predicate(ast: PredicateAST, store: ProfileStore, params: Mapping | None = None) -> bool:
    """A missing table counts as zero rows."""
    rows = filter_rows(store.tables.get(ast.table, []), ast.conditions, store, params)
    if ast.kind == "count":
        return OPS[ast.op](len(rows), ast.value.value)
    target = resolve_literal(ast.value, store, params)
    return any(compare(r.get(ast.field), ast.op, target) for r in rows)
