"""Shared pytest plumbing: acceptance results are collected and summarized."""

from collections import OrderedDict

import pytest

# criterion id -> list of (part, passed, detail)
ACCEPTANCE = OrderedDict()
TITLES = {}


def record(criterion: str, title: str, part: str, passed: bool, detail: str) -> bool:
    TITLES[criterion] = title
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    return bool(passed)


@pytest.fixture
def accept():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c)):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name}: {'ok' if p else 'FAILED'} ({d})" for name, p, d in parts)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit} {TITLES[crit]} | {detail}")
