from __future__ import annotations

from functools import lru_cache
from importlib.resources import files

import pytest

from hrverify.grammar import Spec, parse_spec

SPEC_NAMES = ("chain", "chain2", "star", "token_ring", "pps_star", "ring", "tree_down", "philosophers")


@lru_cache(maxsize=None)
def load(name: str) -> Spec:
    return parse_spec(files("hrverify.specs").joinpath(f"{name}.pcs").read_text())


def spec_path(name: str) -> str:
    return str(files("hrverify.specs").joinpath(f"{name}.pcs"))


@pytest.fixture
def chain() -> Spec:
    return load("chain")


@pytest.fixture
def star() -> Spec:
    return load("star")


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line; the lines are repeated in the summary."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _CRITERIA.append(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
