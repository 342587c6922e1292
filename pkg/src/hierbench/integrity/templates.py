"""``{{placeholder}}`` tokens resolved against a profile store.

Three kinds are understood:

* identity: ``current_user_email``, ``current_user_id``, ``current_user_name``
* relational: ``first_<entity>_<field>`` / ``last_<entity>_<field>``, with an
  optional ``:field=value[,field=value]`` filter
* positioning: ``beginning_<entity>_time``, ``middle_<entity>_time``,
  ``end_<entity>_time``

``<entity>`` maps to its plural table name (``room`` -> ``rooms``).
``<name>`` placeholders are filled from instance parameters when present.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Mapping

from .store import ProfileStore, StoreError, parse_timestamp, timestamp_field

IDENTITY = "identity"
RELATIONAL = "relational"
POSITIONING = "positioning"

TOKEN_RE = re.compile(r"\{\{\s*([^{}]*?)\s*\}\}")
PARAM_RE = re.compile(r"<([A-Za-z_][A-Za-z0-9_]*)>")
_IDENT = r"[a-z][a-z0-9]*(?:_[a-z0-9]+)*"
_IDENTITY_RE = re.compile(r"current_user_(email|id|name)")
_RELATIONAL_RE = re.compile(rf"(first|last)_({_IDENT})_([a-z0-9]+)(?::(.+))?")
_POSITIONING_RE = re.compile(rf"(beginning|middle|end)_({_IDENT})_time")


class TemplateError(ValueError):
    pass


class ResolutionError(TemplateError):
    pass


@dataclass(frozen=True)
class TemplateExpr:
    raw: str
    kind: str
    name: str
    table: str | None = None
    field: str | None = None
    selector: str | None = None
    strategy: str | None = None
    filter: tuple[tuple[str, str], ...] = ()


def pluralize(entity: str) -> str:
    if re.search(r"[^aeiou]y$", entity):
        return entity[:-1] + "ies"
    if re.search(r"(s|x|z|ch|sh)$", entity):
        return entity + "es"
    return entity + "s"


def parse_template(token: str) -> TemplateExpr:
    m = TOKEN_RE.fullmatch(token.strip())
    if not m:
        raise TemplateError(f"not a template token: {token!r}")
    body = m.group(1)
    if mi := _IDENTITY_RE.fullmatch(body):
        return TemplateExpr(token, IDENTITY, body, field=mi.group(1))
    if mp := _POSITIONING_RE.fullmatch(body):
        strategy, entity = mp.groups()
        return TemplateExpr(token, POSITIONING, body, table=pluralize(entity), strategy=strategy)
    if mr := _RELATIONAL_RE.fullmatch(body):
        selector, entity, fld, filt = mr.groups()
        conds = ()
        if filt:
            try:
                conds = tuple(tuple(p.strip() for p in part.split("=", 1)) for part in filt.split(","))
            except ValueError:
                raise TemplateError(f"bad filter in {token!r}") from None
            if any(len(c) != 2 or not c[0] for c in conds):
                raise TemplateError(f"bad filter in {token!r}")
        return TemplateExpr(token, RELATIONAL, body, table=pluralize(entity), field=fld, selector=selector, filter=conds)
    raise TemplateError(f"unknown template {token!r}")


def find_templates(value) -> list[TemplateExpr]:
    """Every template token inside a nested structure, in walk order."""
    out = []
    if isinstance(value, str):
        out.extend(parse_template(m.group(0)) for m in TOKEN_RE.finditer(value))
    elif isinstance(value, Mapping):
        for k in value:
            out.extend(find_templates(k))
            out.extend(find_templates(value[k]))
    elif isinstance(value, (list, tuple)):
        for v in value:
            out.extend(find_templates(v))
    return out


def _matches(row: Mapping, conds) -> bool:
    return all(str(row.get(f)) == str(v) for f, v in conds)


def resolve_expr(expr: TemplateExpr, store: ProfileStore) -> Any:
    if expr.kind == IDENTITY:
        if expr.field not in store.user_meta:
            raise ResolutionError(f"{expr.raw}: user_meta has no {expr.field!r}")
        return store.user_meta[expr.field]
    if not store.has_table(expr.table):
        raise ResolutionError(f"{expr.raw}: profile {store.profile_id!r} has no table {expr.table!r}")
    rows = store.rows(expr.table)
    if expr.kind == RELATIONAL:
        rows = [r for r in rows if _matches(r, expr.filter)]
        if not rows:
            raise ResolutionError(f"{expr.raw}: table {expr.table!r} has no matching rows")
        row = rows[0] if expr.selector == "first" else rows[-1]
        if expr.field not in row:
            raise ResolutionError(f"{expr.raw}: table {expr.table!r} has no field {expr.field!r}")
        return row[expr.field]
    if not rows:
        raise ResolutionError(f"{expr.raw}: table {expr.table!r} is empty")
    try:
        ts_field = timestamp_field(rows)
        stamps = sorted((parse_timestamp(r[ts_field]), r[ts_field]) for r in rows)
    except StoreError as exc:
        raise ResolutionError(f"{expr.raw}: {exc}") from None
    if expr.strategy == "beginning":
        return stamps[0][1]
    if expr.strategy == "end":
        return stamps[-1][1]
    n = len(stamps)
    if n % 2:
        return stamps[n // 2][1]
    lo, hi = stamps[n // 2 - 1][0], stamps[n // 2][0]
    return _format_like((lo + (hi - lo) / 2), stamps[0][1])


def _format_like(ts: datetime, sample) -> str:
    text = ts.isoformat()
    if isinstance(sample, str) and sample.endswith("Z") and text.endswith("+00:00"):
        text = text[:-6] + "Z"
    return text


def resolve_string(text: str, store: ProfileStore, instance_params: Mapping | None = None):
    params = instance_params or {}
    whole = TOKEN_RE.fullmatch(text)
    if whole:
        return resolve_expr(parse_template(text), store)
    pm = PARAM_RE.fullmatch(text)
    if pm and pm.group(1) in params:
        return params[pm.group(1)]
    text = TOKEN_RE.sub(lambda m: str(resolve_expr(parse_template(m.group(0)), store)), text)
    return PARAM_RE.sub(lambda m: str(params[m.group(1)]) if m.group(1) in params else m.group(0), text)


def resolve_templates(mockdata, store: ProfileStore, instance_params: Mapping | None = None):
    """Recursively replace every placeholder; a string that is exactly one token
    takes the resolved value with its own type."""
    if isinstance(mockdata, str):
        return resolve_string(mockdata, store, instance_params)
    if isinstance(mockdata, Mapping):
        return {resolve_templates(k, store, instance_params): resolve_templates(v, store, instance_params)
                for k, v in mockdata.items()}
    if isinstance(mockdata, list):
        return [resolve_templates(v, store, instance_params) for v in mockdata]
    if isinstance(mockdata, tuple):
        return tuple(resolve_templates(v, store, instance_params) for v in mockdata)
    return mockdata
