from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from fracgreen.green import EXPLICIT, NUMERIC_INVERSE, build_green
from fracgreen.io import parse_spec
from fracgreen.model import FracParams, Grid


FIXDIR = Path(str(resources.files("fracgreen").joinpath("fixtures")))
FIXDIR_NAMES = sorted(p.name for p in FIXDIR.iterdir() if p.suffix == ".json")


def load_fixture(name: str):
    text = resources.files("fracgreen").joinpath("fixtures", f"{name}.json").read_text(encoding="utf-8")
    return parse_spec(text)


@pytest.fixture(scope="session")
def desk():
    return load_fixture("superlinear_desk")


@pytest.fixture(scope="session")
def desk_sub():
    return load_fixture("sublinear_desk")


@pytest.fixture(scope="session")
def torsion_spec():
    return load_fixture("linear_torsion")


@pytest.fixture(scope="session")
def desk_table(desk):
    return build_green(desk.grid, desk.params, NUMERIC_INVERSE)


@pytest.fixture(scope="session")
def tables_256():
    """Both Green routes at n = 256 for every tested order."""
    out = {}
    for a in (0.6, 0.75, 0.9):
        p, g = FracParams(1, a), Grid(256)
        out[a] = (build_green(g, p, EXPLICIT), build_green(g, p, NUMERIC_INVERSE))
    return out


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
