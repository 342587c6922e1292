"""Versioned JSON envelopes and plain tables for command output."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

TEXT = "text"
DELIMITED = "delimited"
JSON = "json"
FORMATS = (TEXT, DELIMITED, JSON)


def tool_version() -> str:
    from . import __version__

    return __version__


def _plain(obj):
    """numpy scalars/arrays and tuples to JSON-native values; NaN to null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(obj, Path):
        return str(obj)
    return obj


@dataclass
class Table:
    title: str
    columns: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)


@dataclass
class Report:
    command: str
    seed: int | None
    params: dict
    metrics: dict
    tables: list[Table] = field(default_factory=list)

    def envelope(self) -> dict:
        return {
            "tool_version": tool_version(),
            "command": self.command,
            "seed": self.seed,
            "params": _plain(self.params),
            "metrics": _plain(self.metrics),
        }


def to_json(report: Report) -> str:
    """Sorted keys, fixed separators, trailing newline: byte-stable for equal inputs."""
    return json.dumps(report.envelope(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4f}"
    return str(v)


def render_table(table: Table, fmt: str = TEXT) -> str:
    cells = [[_cell(v) for v in row] for row in table.rows]
    if fmt == DELIMITED:
        lines = ["\t".join(table.columns)] + ["\t".join(r) for r in cells]
        return "\n".join(lines) + "\n"
    widths = [len(c) for c in table.columns]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    out = io.StringIO()
    if table.title:
        out.write(f"# {table.title}\n")
    out.write("  ".join(c.ljust(w) for c, w in zip(table.columns, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in cells:
        out.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")
    return out.getvalue()


def render(report: Report, fmt: str = TEXT) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == JSON:
        return to_json(report)
    sep = "\n" if fmt == TEXT else ""
    parts = [render_table(t, fmt) for t in report.tables]
    if fmt == TEXT and report.seed is not None:
        parts.append(f"seed: {report.seed}\n")
    return sep.join(parts)


def emit_report(report: Report, fmt: str = TEXT, output: str | Path | None = None, stream=None) -> str:
    """Render and write to ``output`` (a file) or ``stream``; returns the text."""
    text = render(report, fmt)
    if output is not None:
        Path(output).write_text(text)
    elif stream is not None:
        stream.write(text)
    return text
