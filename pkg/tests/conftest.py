from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from tabkit.engine import Refuted, add_result_observer
from tabkit.semantics import extract_countermodel
from tabkit.syntax import render_formula


@dataclass
class RefutationLog:
    """Every Refuted verdict produced by `decide` during the session, verified on arrival."""

    checked: int = 0
    failures: list[str] = field(default_factory=list)

    def __call__(self, premises, goal, logic, result) -> None:
        if not isinstance(result, Refuted):
            return
        self.checked += 1
        ex = extract_countermodel(result, logic)
        if not ex.verified:
            shown = ", ".join(render_formula(p) for p in premises)
            self.failures.append(
                f"{logic.name}: {{{shown}}} / {render_formula(goal)}: {'; '.join(ex.failures)}"
            )


REFUTATIONS = RefutationLog()
add_result_observer(REFUTATIONS)

# criterion number -> (title, outcome, note)
_CRITERIA: dict[int, list] = {}


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "criterion(n, title): an acceptance criterion")


def pytest_collection_modifyitems(session, config, items) -> None:
    # the refutation check has to see every other test's verdicts
    last = [it for it in items if it.get_closest_marker("runs_last")]
    rest = [it for it in items if not it.get_closest_marker("runs_last")]
    items[:] = rest + last


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when != "call":
        return
    n, title = m.args
    note = getattr(item, "criterion_note", "")
    _CRITERIA[n] = [title, "PASS" if rep.passed else "FAIL", note]


@pytest.fixture
def note(request):
    """Attach a one-line note to the acceptance summary line of the current test."""

    def add(text: str) -> None:
        prev = getattr(request.node, "criterion_note", "")
        request.node.criterion_note = f"{prev}; {text}" if prev else text

    return add


def pytest_terminal_summary(terminalreporter) -> None:
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, verdict, note = _CRITERIA[n]
        line = f"criterion {n:>2} {verdict}: {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
