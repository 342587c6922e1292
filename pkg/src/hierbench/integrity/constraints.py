"""Feasibility constraints, auto-derivation from templates, triviality filtering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .predicate import Condition, Literal, PredicateAST, compare, evaluate_predicate, filter_rows, parse_predicate
from .store import ProfileStore
from .templates import PARAM_RE, POSITIONING, RELATIONAL, TOKEN_RE, find_templates, parse_template

logger = logging.getLogger(__name__)

ENTITY_EXISTS = "EntityExists"
DATA_VOLUME = "DataVolume"
BALANCE = "Balance"
MAX_COUNT = "MaxCount"
KINDS = (ENTITY_EXISTS, DATA_VOLUME, BALANCE, MAX_COUNT)
AGGREGATES = (None, "sum", "min", "max")


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    """A precondition on one table.

    ``EntityExists``/``DataVolume``: at least ``n`` filtered rows.
    ``MaxCount``: at most ``n`` filtered rows.
    ``Balance``: ``field op threshold`` for some filtered row, or for the
    ``aggregate`` of the filtered rows; ``threshold`` may be ``"<param>"``.
    """

    kind: str
    table: str
    filter: tuple[Condition, ...] = ()
    n: int = 1
    field: str | None = None
    op: str = ">="
    threshold: Any = None
    aggregate: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConstraintError(f"unknown constraint kind {self.kind!r}")
        if self.n < 0:
            raise ConstraintError("n must be >= 0")
        if self.kind == BALANCE and (self.field is None or self.threshold is None):
            raise ConstraintError("Balance needs a field and a threshold")
        if self.aggregate not in AGGREGATES:
            raise ConstraintError(f"unknown aggregate {self.aggregate!r}")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Constraint":
        conds = []
        for c in obj.get("filter", []):
            if isinstance(c, Mapping):
                conds.append(Condition(c["field"], c.get("op", "="), _literal(c["value"])))
            else:
                f, op, v = c
                conds.append(Condition(f, op, _literal(v)))
        return cls(
            kind=obj["kind"],
            table=obj["table"],
            filter=tuple(conds),
            n=int(obj.get("n", 1)),
            field=obj.get("field"),
            op=obj.get("op", ">="),
            threshold=obj.get("threshold"),
            aggregate=obj.get("aggregate"),
        )


def _literal(value) -> Literal:
    if isinstance(value, str):
        if TOKEN_RE.fullmatch(value):
            return Literal("template", parse_template(value))
        if m := PARAM_RE.fullmatch(value):
            return Literal("param", m.group(1))
        return Literal("string", value)
    if isinstance(value, bool):
        return Literal("bool", value)
    return Literal("number", value)


def EntityExists(table: str, n: int = 1, filter=()) -> Constraint:
    return Constraint(ENTITY_EXISTS, table, tuple(filter), n)


def DataVolume(table: str, n: int, filter=()) -> Constraint:
    return Constraint(DATA_VOLUME, table, tuple(filter), n)


def MaxCount(table: str, n: int, filter=()) -> Constraint:
    return Constraint(MAX_COUNT, table, tuple(filter), n)


def Balance(table: str, field: str, threshold, op: str = ">=", filter=(), aggregate=None) -> Constraint:
    return Constraint(BALANCE, table, tuple(filter), 1, field, op, threshold, aggregate)


def _threshold(c: Constraint, params: Mapping):
    thr = c.threshold
    if isinstance(thr, str) and (m := PARAM_RE.fullmatch(thr)):
        if m.group(1) not in params:
            raise ConstraintError(f"threshold references unset instance parameter {m.group(1)!r}")
        return params[m.group(1)]
    return thr


def eval_constraint(c: Constraint, store: ProfileStore, instance_params: Mapping | None = None,
                    warnings: list | None = None) -> bool:
    params = instance_params or {}
    if not store.has_table(c.table):
        msg = f"profile {store.profile_id!r} has no table {c.table!r}"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return False
    thr = _threshold(c, params) if c.kind == BALANCE else None
    rows = filter_rows(store.rows(c.table), c.filter, store, params)
    if c.kind in (ENTITY_EXISTS, DATA_VOLUME):
        return len(rows) >= c.n
    if c.kind == MAX_COUNT:
        return len(rows) <= c.n
    values = [r.get(c.field) for r in rows if r.get(c.field) is not None]
    if not values:
        return False
    if c.aggregate is None:
        return any(compare(v, c.op, thr) for v in values)
    nums = [float(v) for v in values]
    agg = {"sum": sum, "min": min, "max": max}[c.aggregate](nums)
    return compare(agg, c.op, thr)


def derive_constraints(mockdata) -> list[Constraint]:
    """One ``EntityExists(table, 1)`` per table referenced by a relational or
    positioning template (filtered relational templates keep their filter)."""
    out, seen = [], set()
    for expr in find_templates(mockdata):
        if expr.kind not in (RELATIONAL, POSITIONING):
            continue
        conds = tuple(Condition(f, "=", Literal("string", v)) for f, v in expr.filter)
        key = (expr.table, conds)
        if key not in seen:
            seen.add(key)
            out.append(EntityExists(expr.table, 1, conds))
    return out


@dataclass(frozen=True)
class Instance:
    instance_id: str
    params: Mapping[str, Any] = field(default_factory=dict)
    constraints: tuple[Constraint, ...] = ()
    mockdata: Any = None
    predicate: str | None = None

    def all_constraints(self) -> list[Constraint]:
        derived = derive_constraints(self.mockdata) if self.mockdata is not None else []
        return list(self.constraints) + [d for d in derived if d not in self.constraints]

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Instance":
        return cls(
            instance_id=str(obj["id"]),
            params=dict(obj.get("params", {})),
            constraints=tuple(Constraint.from_dict(c) for c in obj.get("constraints", [])),
            mockdata=obj.get("mockdata"),
            predicate=obj.get("predicate"),
        )


def _stores(profiles) -> dict[str, ProfileStore]:
    if isinstance(profiles, Mapping):
        return dict(profiles)
    return {p.profile_id: p for p in profiles}


def feasibility_matrix(instances, profiles, constraints: Mapping[str, Sequence[Constraint]] | None = None,
                       warnings: list | None = None) -> dict[str, dict[str, bool]]:
    """``matrix[instance][profile]``: every explicit and derived constraint holds.

    ``instances`` are :class:`Instance` objects (or ids, with ``constraints``
    supplying the per-instance list).
    """
    stores = _stores(profiles)
    matrix = {}
    for inst in instances:
        if not isinstance(inst, Instance):
            inst = Instance(str(inst))
        cons = inst.all_constraints()
        if constraints is not None:
            cons = list(constraints.get(inst.instance_id, ())) + cons
        matrix[inst.instance_id] = {
            pid: all(eval_constraint(c, store, inst.params, warnings) for c in cons)
            for pid, store in stores.items()
        }
    return matrix


def compatible_profiles(matrix: Mapping[str, Mapping[str, bool]]) -> dict[str, list[str]]:
    return {inst: [p for p, ok in row.items() if ok] for inst, row in matrix.items()}


@dataclass(frozen=True)
class TrivialityResult:
    surviving: list
    excluded: list


def triviality_filter(configs: Sequence[Mapping], predicate: str | PredicateAST,
                      stores: Mapping[str, ProfileStore]) -> TrivialityResult:
    """Keep configurations whose verification predicate is still false initially.

    Each config is a mapping with ``profile`` (store id) and optional ``params``.
    """
    ast = parse_predicate(predicate) if isinstance(predicate, str) else predicate
    surviving, excluded = [], []
    for cfg in configs:
        store = stores[cfg["profile"]]
        if evaluate_predicate(ast, store, cfg.get("params", {})):
            logger.info("excluded pre-solved configuration %s", cfg)
            excluded.append(cfg)
        else:
            surviving.append(cfg)
    return TrivialityResult(surviving, excluded)
