"""Hierarchical outcome data: records, the app/scenario/configuration tree, ingestion."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

logger = logging.getLogger(__name__)

AXES = ("instance", "profile", "theme", "ui_state")
DEFAULT = "default"


class DataError(ValueError):
    """Raised for malformed, conflicting or empty outcome data."""


class ParseError(DataError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class IntegrityError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


@dataclass(frozen=True, order=True)
class ConfigKey:
    instance: str = DEFAULT
    profile: str = DEFAULT
    theme: str = DEFAULT
    ui_state: str = DEFAULT

    def __post_init__(self):
        for axis in AXES:
            value = getattr(self, axis)
            if not isinstance(value, str) or not value:
                raise ValueError(f"axis {axis!r} must be a non-empty identifier, got {value!r}")

    def get(self, axis: str) -> str:
        return getattr(self, axis)

    def collapse(self, axis_mask: Iterable[str]) -> "ConfigKey":
        """Replace every axis not in ``axis_mask`` by the ``"default"`` sentinel."""
        mask = set(axis_mask)
        return ConfigKey(*(getattr(self, a) if a in mask else DEFAULT for a in AXES))

    def replace(self, axis: str, value: str) -> "ConfigKey":
        values = {a: getattr(self, a) for a in AXES}
        values[axis] = value
        return ConfigKey(**values)

    def as_dict(self) -> dict:
        return {a: getattr(self, a) for a in AXES}

    @property
    def label(self) -> str:
        return "/".join(getattr(self, a) for a in AXES)


@dataclass(frozen=True)
class OutcomeRecord:
    model: str
    app: str
    scenario: str
    config: ConfigKey
    rollout: int
    success: bool

    def __post_init__(self):
        for name in ("model", "app", "scenario"):
            if not isinstance(getattr(self, name), str) or not getattr(self, name):
                raise ValueError(f"{name} must be a non-empty identifier")
        if isinstance(self.rollout, bool) or not isinstance(self.rollout, (int, np.integer)) or self.rollout < 0:
            raise ValueError(f"rollout must be a non-negative integer, got {self.rollout!r}")
        if not isinstance(self.success, (bool, np.bool_)) and self.success not in (0, 1):
            raise ValueError(f"success must be boolean, got {self.success!r}")

    @property
    def key(self) -> tuple:
        return (self.model, self.app, self.scenario, self.config, self.rollout)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "app": self.app,
            "scenario": self.scenario,
            **self.config.as_dict(),
            "rollout": int(self.rollout),
            "success": bool(self.success),
        }


@dataclass(frozen=True)
class AppArrays:
    """Flat leaf-level view of one app, in canonical (scenario, config) order."""

    scenarios: tuple[str, ...]
    configs: tuple[ConfigKey, ...]
    successes: np.ndarray  # (L,) int
    trials: np.ndarray  # (L,) int
    scenario_index: np.ndarray  # (L,) int into ``scenarios``
    axis_codes: np.ndarray  # (L, 4) int, value index within the leaf's scenario
    axis_sizes: np.ndarray  # (S, 4) int, number of observed values per scenario and axis

    @property
    def rates(self) -> np.ndarray:
        return self.successes / self.trials

    def scenario_slices(self) -> list[slice]:
        bounds = np.searchsorted(self.scenario_index, np.arange(len(self.scenarios) + 1))
        return [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(len(self.scenarios))]


@dataclass(frozen=True, eq=False)
class BenchmarkTree:
    """Nested outcomes ``app -> scenario -> ConfigKey -> rollout vector``.

    Iteration order is sorted by identifier at every level. Trees are treated as
    immutable once built.
    """

    apps: Mapping[str, Mapping[str, Mapping[ConfigKey, tuple[int, ...]]]]
    axis_mask: frozenset = frozenset(AXES)
    model: str = ""

    def __post_init__(self):
        canon = {}
        for app in sorted(self.apps):
            scens = {}
            for scen in sorted(self.apps[app]):
                cfgs = {}
                for cfg in sorted(self.apps[app][scen]):
                    vec = tuple(int(bool(v)) for v in self.apps[app][scen][cfg])
                    if not vec:
                        raise DataError(f"empty rollout vector at {app}/{scen}/{cfg}")
                    cfgs[cfg] = vec
                scens[scen] = cfgs
            canon[app] = scens
        if not canon:
            raise EmptyDatasetError("tree contains no apps")
        object.__setattr__(self, "apps", canon)
        object.__setattr__(self, "axis_mask", frozenset(self.axis_mask))

    def __eq__(self, other):
        if not isinstance(other, BenchmarkTree):
            return NotImplemented
        return self.apps == other.apps and self.axis_mask == other.axis_mask and self.model == other.model

    @property
    def app_names(self) -> list[str]:
        return list(self.apps)

    @property
    def n_apps(self) -> int:
        return len(self.apps)

    def n_scenarios(self, app: str) -> int:
        return len(self.apps[app])

    def n_configs(self, app: str, scenario: str) -> int:
        return len(self.apps[app][scenario])

    def leaves(self) -> Iterator[tuple[str, str, ConfigKey, tuple[int, ...]]]:
        for app, scens in self.apps.items():
            for scen, cfgs in scens.items():
                for cfg, vec in cfgs.items():
                    yield app, scen, cfg, vec

    @property
    def n_leaves(self) -> int:
        return sum(1 for _ in self.leaves())

    @property
    def rollout_counts(self) -> set[int]:
        return {len(vec) for *_, vec in self.leaves()}

    def subtree(self, apps: Iterable[str]) -> "BenchmarkTree":
        apps = list(apps)
        missing = [a for a in apps if a not in self.apps]
        if missing:
            raise KeyError(f"unknown app(s): {missing}")
        return BenchmarkTree({a: self.apps[a] for a in apps}, self.axis_mask, self.model)

    @cached_property
    def arrays(self) -> dict[str, AppArrays]:
        return {app: _compile_app(scens) for app, scens in self.apps.items()}

    def to_records(self) -> list[OutcomeRecord]:
        out = []
        for app, scen, cfg, vec in self.leaves():
            for r, y in enumerate(vec):
                out.append(OutcomeRecord(self.model or DEFAULT, app, scen, cfg, r, bool(y)))
        return out


def _compile_app(scens: Mapping[str, Mapping[ConfigKey, tuple[int, ...]]]) -> AppArrays:
    scenarios = tuple(scens)
    configs, k, n, sidx, codes, sizes = [], [], [], [], [], []
    for s, scen in enumerate(scenarios):
        cfgs = list(scens[scen])
        values = [sorted({c.get(a) for c in cfgs}) for a in AXES]
        sizes.append([len(v) for v in values])
        for cfg in cfgs:
            vec = scens[scen][cfg]
            configs.append(cfg)
            k.append(sum(vec))
            n.append(len(vec))
            sidx.append(s)
            codes.append([values[j].index(cfg.get(a)) for j, a in enumerate(AXES)])
    return AppArrays(
        scenarios=scenarios,
        configs=tuple(configs),
        successes=np.asarray(k, dtype=np.int64),
        trials=np.asarray(n, dtype=np.int64),
        scenario_index=np.asarray(sidx, dtype=np.int64),
        axis_codes=np.asarray(codes, dtype=np.int64).reshape(-1, len(AXES)),
        axis_sizes=np.asarray(sizes, dtype=np.int64).reshape(-1, len(AXES)),
    )


@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)
    is_balanced: bool = True

    @property
    def ok(self) -> bool:
        return not self.errors


# --------------------------------------------------------------------------- parsing

_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce_record(obj: Mapping, lineno: int) -> OutcomeRecord:
    if not isinstance(obj, Mapping):
        raise ParseError(lineno, "expected an object")
    try:
        success = obj["success"]
        if isinstance(success, str):
            success = _BOOL_STRINGS[success.strip().lower()]
        elif not isinstance(success, bool) and success in (0, 1):
            success = bool(success)
        elif not isinstance(success, bool):
            raise ParseError(lineno, f"success must be boolean, got {success!r}")
        rollout = obj["rollout"]
        if isinstance(rollout, str):
            rollout = int(rollout.strip())
        if isinstance(rollout, float) and rollout.is_integer():
            rollout = int(rollout)
        cfg = ConfigKey(*(str(obj.get(a) or DEFAULT) for a in AXES))
        return OutcomeRecord(
            model=str(obj["model"]),
            app=str(obj["app"]),
            scenario=str(obj["scenario"]),
            config=cfg,
            rollout=rollout,
            success=success,
        )
    except ParseError:
        raise
    except KeyError as exc:
        raise ParseError(lineno, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(lineno, str(exc)) from None


def parse_jsonl(lines: Iterable[str]) -> Iterator[OutcomeRecord]:
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
        yield _coerce_record(obj, lineno)


def parse_csv(lines: Iterable[str]) -> Iterator[OutcomeRecord]:
    reader = csv.DictReader(lines)
    for row in reader:
        yield _coerce_record(row, reader.line_num)


def read_records(path: str | Path) -> list[OutcomeRecord]:
    """Read a JSON Lines file, or a CSV file when the suffix is ``.csv``."""
    path = Path(path)
    with path.open(newline="") as fh:
        if path.suffix.lower() == ".csv":
            return list(parse_csv(fh))
        return list(parse_jsonl(fh))


def write_records(records: Iterable[OutcomeRecord], path: str | Path | None = None) -> str:
    text = "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)
    if path is not None:
        Path(path).write_text(text)
    return text


def dump_tree(tree: BenchmarkTree) -> str:
    return write_records(tree.to_records())


# --------------------------------------------------------------------------- ingestion


def ingest_records(
    source: Iterable[OutcomeRecord] | Iterable[Mapping] | str | Path,
    axis_mask: Iterable[str] = AXES,
    warnings: list | None = None,
) -> dict[str, BenchmarkTree]:
    """Build one :class:`BenchmarkTree` per model.

    ``source`` may be a path, an iterable of :class:`OutcomeRecord`, or an
    iterable of plain dicts in the line format. Axes outside ``axis_mask`` are
    collapsed to ``"default"``; configurations merged by the collapse have their
    rollouts concatenated in canonical order.
    """
    axis_mask = frozenset(axis_mask)
    unknown = axis_mask - set(AXES)
    if unknown:
        raise ValueError(f"unknown axes in mask: {sorted(unknown)}")
    if isinstance(source, (str, Path)):
        records = read_records(source)
    else:
        records = [
            r if isinstance(r, OutcomeRecord) else _coerce_record(r, i)
            for i, r in enumerate(source, start=1)
        ]
    if not records:
        raise EmptyDatasetError("no records")
    if warnings is None:
        warnings = []

    seen: dict[tuple, bool] = {}
    for rec in records:
        prev = seen.get(rec.key)
        if prev is None:
            seen[rec.key] = bool(rec.success)
        elif prev != bool(rec.success):
            raise IntegrityError(f"conflicting outcomes for {rec.key}")
        else:
            warnings.append((_loc(rec), "duplicate record ignored"))

    grouped: dict[str, dict] = {}
    collapsed_axes: set[str] = set()
    for (model, app, scen, cfg, rollout), success in sorted(seen.items()):
        key = cfg.collapse(axis_mask)
        for axis in AXES:
            if axis not in axis_mask and cfg.get(axis) != DEFAULT:
                collapsed_axes.add(axis)
        grouped.setdefault(model, {}).setdefault(app, {}).setdefault(scen, {}).setdefault(key, []).append(int(success))
    for axis in sorted(collapsed_axes):
        warnings.append((axis, f"axis {axis!r} disabled; non-default values collapsed to 'default'"))
    for loc, msg in warnings:
        logger.warning("%s: %s", loc, msg)
    return {model: BenchmarkTree(apps, axis_mask, model) for model, apps in sorted(grouped.items())}


def _loc(rec: OutcomeRecord) -> str:
    return f"{rec.model}/{rec.app}/{rec.scenario}/{rec.config}/{rec.rollout}"


def tree_from_nested(nested: Mapping, axis_mask: Iterable[str] = AXES, model: str = "") -> BenchmarkTree:
    """Convenience constructor: ``{app: {scenario: {config: [0/1, ...]}}}``.

    Config keys may be :class:`ConfigKey`, a dict of axis values, a tuple in axis
    order, or a plain string (taken as the instance axis).
    """
    apps = {}
    for app, scens in nested.items():
        apps[app] = {}
        for scen, cfgs in scens.items():
            if not isinstance(cfgs, Mapping):
                cfgs = {ConfigKey(): cfgs}
            apps[app][scen] = {_as_key(c): v for c, v in cfgs.items()}
    return BenchmarkTree(apps, frozenset(axis_mask), model)


def _as_key(c) -> ConfigKey:
    if isinstance(c, ConfigKey):
        return c
    if isinstance(c, Mapping):
        return ConfigKey(**c)
    if isinstance(c, tuple):
        return ConfigKey(*c)
    return ConfigKey(instance=str(c))


# --------------------------------------------------------------------------- queries


@dataclass(frozen=True)
class LeafRate:
    rate: float
    successes: int
    trials: int


def leaf_rate(tree: BenchmarkTree, app: str, scenario: str, config: ConfigKey) -> LeafRate:
    try:
        vec = tree.apps[app][scenario][config]
    except KeyError:
        raise KeyError(f"no leaf {app}/{scenario}/{config}") from None
    k = sum(vec)
    return LeafRate(k / len(vec), k, len(vec))


def validate_tree(tree: BenchmarkTree) -> ValidationReport:
    report = ValidationReport()
    lengths = tree.rollout_counts
    report.is_balanced = len(lengths) <= 1
    if not report.is_balanced:
        counts: dict[int, int] = {}
        for *_, vec in tree.leaves():
            counts[len(vec)] = counts.get(len(vec), 0) + 1
        modal = max(sorted(counts), key=lambda n: counts[n])
        for app, scen, cfg, vec in tree.leaves():
            if len(vec) != modal:
                report.warnings.append((f"{app}/{scen}/{cfg}", f"R={len(vec)} differs from modal R={modal}"))
    for app, scens in tree.apps.items():
        if not scens:
            report.errors.append((app, "app has no scenarios"))
        for scen, cfgs in scens.items():
            if not cfgs:
                report.errors.append((f"{app}/{scen}", "scenario has no configurations"))
            for cfg in cfgs:
                for axis in AXES:
                    if axis not in tree.axis_mask and cfg.get(axis) != DEFAULT:
                        report.errors.append(
                            (f"{app}/{scen}/{cfg}", f"disabled axis {axis!r} has value {cfg.get(axis)!r}")
                        )
    return report


def records_from_text(text: str, fmt: str = "jsonl") -> list[OutcomeRecord]:
    lines = io.StringIO(text)
    return list(parse_csv(lines) if fmt == "csv" else parse_jsonl(lines))
