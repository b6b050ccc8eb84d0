"""Shared fixtures and the acceptance summary printed at the end of a run."""

import time

import pytest

_ACCEPTANCE = {}


class CriterionReport:
    """Collects the sub-checks of one acceptance criterion."""

    def __init__(self, number, title, budget_s):
        self.number = number
        self.title = title
        self.budget_s = budget_s
        self.parts = []
        self.finished = False
        self.start = time.perf_counter()
        _ACCEPTANCE[number] = self

    def check(self, label, ok, detail=""):
        self.parts.append((label, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.budget_s, f"{elapsed:.1f} s of {self.budget_s:g} s")
        self.finished = True
        failed = [f"{label} ({detail})" for label, ok, detail in self.parts if not ok]
        assert not failed, "failed: " + "; ".join(failed)

    @property
    def passed(self):
        return self.finished and all(ok for _, ok, _ in self.parts)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("acceptance")
    return CriterionReport(*marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        rep = _ACCEPTANCE[number]
        status = "PASS" if rep.passed else "FAIL"
        tr.write_line(f"[{status}] {number:2d}. {rep.title}")
        for label, ok, detail in rep.parts:
            tr.write_line(f"         {'ok ' if ok else 'BAD'} {label}: {detail}")
        if not rep.finished:
            tr.write_line("         BAD did not run to completion")
