"""Profile stores: named tables of flat records, loaded from JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

TIMESTAMP_FIELDS = ("timestamp", "time", "created_at", "date", "datetime")


class StoreError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileStore:
    profile_id: str
    tables: Mapping[str, list[dict[str, Any]]] = field(default_factory=dict)
    user_meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name, rows in self.tables.items():
            if not isinstance(rows, list) or any(not isinstance(r, Mapping) for r in rows):
                raise StoreError(f"table {name!r} must be a list of records")
            fieldsets = {frozenset(r) for r in rows}
            if len(fieldsets) > 1:
                raise StoreError(f"table {name!r} has inconsistent field sets")

    def has_table(self, name: str) -> bool:
        return name in self.tables

    def rows(self, name: str) -> list[dict[str, Any]]:
        return self.tables[name]

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ProfileStore":
        try:
            return cls(str(obj["profile_id"]), dict(obj.get("tables", {})), dict(obj.get("user_meta", {})))
        except KeyError as exc:
            raise StoreError(f"profile store missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {"profile_id": self.profile_id, "user_meta": dict(self.user_meta), "tables": dict(self.tables)}


def load_store(path: str | Path) -> ProfileStore:
    return ProfileStore.from_dict(json.loads(Path(path).read_text()))


def load_stores(directory: str | Path) -> dict[str, ProfileStore]:
    """Every ``*.json`` in ``directory``, keyed by profile id (sorted)."""
    stores = [load_store(p) for p in sorted(Path(directory).glob("*.json"))]
    return {s.profile_id: s for s in sorted(stores, key=lambda s: s.profile_id)}


def parse_timestamp(value) -> datetime:
    if isinstance(value, datetime):
        return value
    try:
        return datetime.fromisoformat(str(value).replace("Z", "+00:00"))
    except ValueError:
        raise StoreError(f"not an ISO-8601 timestamp: {value!r}") from None


def _is_timestamp(text: str) -> bool:
    try:
        parse_timestamp(text)
    except StoreError:
        return False
    return True


def timestamp_field(rows: list[Mapping]) -> str:
    if not rows:
        raise StoreError("no rows to locate a timestamp field in")
    names = list(rows[0])
    for cand in TIMESTAMP_FIELDS:
        if cand in names:
            return cand
    for name in names:
        if name.endswith("_at") or name.endswith("_time"):
            return name
    for name in names:
        if all(isinstance(r.get(name), str) and _is_timestamp(r[name]) for r in rows):
            return name
    raise StoreError(f"no timestamp field among {names}")
