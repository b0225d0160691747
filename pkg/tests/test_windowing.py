import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coranking.backends import BackendFailure, IdentityBackend, OracleBackend, RandomBackend, RerankerBackend
from coranking.core import InvalidParams, Ranking
from coranking.windowing import run_pass, schedule

from conftest import make_list


class FailingBackend(RerankerBackend):
    name = "failing"

    def __init__(self, fail_on):
        self.fail_on = set(fail_on)
        self.calls = 0

    def rerank(self, query, passages):
        self.calls += 1
        if self.calls in self.fail_on:
            raise BackendFailure("boom", kind="timeout")
        return Ranking(tuple(range(len(passages), 0, -1)))


def test_schedule_reference_setup():
    sched = schedule(100, 20, 10)
    assert len(sched) == 9
    assert sched.starts == [80, 70, 60, 50, 40, 30, 20, 10, 0]
    assert all(end - start == 20 for start, end in sched)


def test_schedule_single_window_when_list_fits():
    assert schedule(20, 20, 10).windows == ((0, 20),)
    assert schedule(7, 20, 10).windows == ((0, 7),)


def test_schedule_clamps_last_window():
    # descent 5 -> -5 clamps to 0
    assert schedule(25, 20, 10).starts == [5, 0]


@pytest.mark.parametrize("n, w, s", [(10, 5, 0), (10, 5, 6), (0, 5, 2)])
def test_schedule_rejects_bad_params(n, w, s):
    with pytest.raises(InvalidParams):
        schedule(n, w, s)


def brute_force_schedule(n, w, s):
    """Enumerate starts n-w, n-w-s, ... and add 0 if the descent skipped it."""
    if n <= w:
        return [(0, n)]
    starts = list(range(n - w, -1, -s))
    if starts[-1] != 0:
        starts.append(0)
    return [(a, a + w) for a in starts]


@given(st.integers(1, 300), st.integers(1, 40), st.data())
def test_schedule_matches_enumeration(n, w, data):
    s = data.draw(st.integers(1, w))
    sched = schedule(n, w, s)
    assert list(sched.windows) == brute_force_schedule(n, w, s)
    assert sched.windows[0][1] == n
    assert sched.windows[-1][0] == 0
    assert len(set(sched.windows)) == len(sched)
    starts = sched.starts
    assert all(a - b == s for a, b in zip(starts, starts[1:-1]))
    assert all(end - start <= w for start, end in sched)


def test_identity_pass_keeps_order_and_counts_calls():
    cands, _ = make_list([0] * 100)
    result = run_pass(cands, IdentityBackend(), 20, 10)
    assert result.ok and result.calls == 9
    assert result.candidates.ids == cands.ids
    assert [(t.window_start, t.window_end) for t in result.trace] == list(schedule(100, 20, 10).windows)


def test_short_list_needs_one_call():
    cands, _ = make_list([0] * 20)
    for step in (1, 5, 20):
        assert run_pass(cands, IdentityBackend(), 20, step).calls == 1


def test_oracle_bubbles_tail_passage_to_top():
    grades = [0] * 100
    grades[99] = 1
    cands, qrels = make_list(grades)
    result = run_pass(cands, OracleBackend(qrels), 20, 10)
    assert result.candidates.ids[0] == "d99"


def test_windows_see_previous_window_output():
    cands, qrels = make_list([0] * 30 + [1])
    result = run_pass(cands, OracleBackend(qrels), 20, 10)
    # three windows: [11, 31), [1, 21), [0, 20); the relevant passage rides all of them
    assert [t.window_start for t in result.trace] == [11, 1, 0]
    assert result.candidates.ids[0] == "d30"


@settings(max_examples=60)
@given(st.integers(1, 120), st.integers(0, 2**32 - 1))
def test_pass_output_is_permutation(n, seed):
    cands, _ = make_list([0] * n)
    result = run_pass(cands, RandomBackend(seed), 20, 10)
    assert sorted(result.candidates.ids) == sorted(cands.ids)
    assert result.calls == len(schedule(n, 20, 10))


def test_failure_aborts_and_returns_partial():
    cands, _ = make_list([0] * 100)
    backend = FailingBackend(fail_on={3})
    result = run_pass(cands, backend, 20, 10, stage="slr")
    assert not result.ok
    assert result.error.kind == "timeout"
    assert result.error.query_id == "q1" and result.error.stage == "slr"
    assert result.calls == 3 and len(result.trace) == 2
    assert sorted(result.candidates.ids) == sorted(cands.ids)
    assert result.candidates.ids != cands.ids


def test_lenient_substitutes_identity_for_failed_window():
    cands, _ = make_list([0] * 100)
    result = run_pass(cands, FailingBackend(fail_on={3}), 20, 10, lenient=True)
    assert result.ok and result.calls == 9
    assert result.trace[2].failed and result.trace[2].perm == tuple(range(1, 21))
    assert result.trace[2].to_record()["failed"] is True


def test_trace_record_shape():
    cands, _ = make_list([0] * 25)
    record = run_pass(cands, IdentityBackend(), 20, 10, stage="llr").trace[0].to_record()
    assert set(record) == {"query_id", "window_start", "window_end", "perm", "latency_ms", "stage"}


def test_oracle_pass_top10_matches_stable_sort():
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 100)
        grades = [rng.choice([0, 0, 0, 1, 2, 3]) for _ in range(n)]
        cands, qrels = make_list(grades)
        out = run_pass(cands, OracleBackend(qrels), 20, 10).candidates.ids
        expected = [cands.ids[i] for i in sorted(range(n), key=lambda i: -grades[i])]
        assert out[:10] == expected[:10]
