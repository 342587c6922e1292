import itertools
from pathlib import Path

import pytest

from hierbench.data import ConfigKey, tree_from_nested

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "hierbench" / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def results_path():
    return FIXTURES / "results.jsonl"


def factorial_tree(rates, axes=("instance", "theme"), values=3, R=3, model="m"):
    """Tree from ``{app: {scenario: rate_or_callable}}``: every cell of a
    ``values``-per-axis factorial gets ``round(rate * R)`` successes."""
    nested = {}
    for app, scens in rates.items():
        nested[app] = {}
        for scen, rate in scens.items():
            cells = {}
            for combo in itertools.product(range(values), repeat=len(axes)):
                key = ConfigKey(**{a: f"v{v}" for a, v in zip(axes, combo)})
                r = rate(combo) if callable(rate) else rate
                k = int(round(r * R))
                cells[key] = (1,) * k + (0,) * (R - k)
            nested[app][scen] = cells
    return tree_from_nested(nested, model=model)


# verdict lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
