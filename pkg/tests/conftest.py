from __future__ import annotations

import pytest

from coranking.core import CandidateList, Passage, Qrels, Query

_ACCEPTANCE: dict[str, list[str]] = {}


def make_list(grades, qid="q1", prefix="d"):
    """Candidate list whose i-th passage has grade ``grades[i]``, plus its qrels."""
    passages = tuple(Passage(f"{prefix}{i}", f"text of passage {i}") for i in range(len(grades)))
    qrels = Qrels({qid: {p.id: int(g) for p, g in zip(passages, grades)}})
    return CandidateList(Query(qid, f"query {qid}"), passages), qrels


@pytest.fixture
def graded_list():
    return make_list


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    criterion = name.split("_")[1].upper() if name.startswith("test_a") else name
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _ACCEPTANCE.setdefault(criterion, []).append(f"{status}  {name}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE, key=lambda c: int(c[1:]) if c[1:].isdigit() else 99):
        for line in _ACCEPTANCE[criterion]:
            terminalreporter.write_line(f"{criterion:<4} {line}")
