import pytest
from hypothesis import given
from hypothesis import strategies as st

from coranking.core import (
    CandidateList,
    InvalidPermutation,
    Passage,
    Qrels,
    Query,
    Ranking,
    apply_ranking,
    run_entries,
    validate_ranking,
)


@pytest.mark.parametrize(
    "items, perm, expected",
    [
        (["A", "B", "C"], [3, 1, 2], ["C", "A", "B"]),
        (["A", "B"], [1, 2], ["A", "B"]),
        (["A", "B", "C", "D"], [4, 2, 1, 3], ["D", "B", "A", "C"]),
    ],
)
def test_apply_ranking_examples(items, perm, expected):
    assert apply_ranking(items, perm) == expected
    assert apply_ranking(items, Ranking(tuple(perm))) == expected


@pytest.mark.parametrize(
    "perm, n, expected",
    [
        ([1, 2, 3], 3, None),
        ([1, 1, 3], 3, "duplicate 1"),
        ([1, 2, 4], 3, "4 out of range [1, 3]"),
        ([1, 2], 3, "length 2 != 3"),
        ([0, 1], 2, "0 out of range [1, 2]"),
    ],
)
def test_validate_ranking(perm, n, expected):
    assert validate_ranking(perm, n) == expected


@pytest.mark.parametrize("perm", [[1, 1], [0, 1], [1, 3], [1]])
def test_apply_ranking_rejects_invalid(perm):
    with pytest.raises(InvalidPermutation):
        apply_ranking(["a", "b"], perm)


def test_ranking_constructor_validates():
    with pytest.raises(InvalidPermutation):
        Ranking((2, 2))


@st.composite
def items_and_perm(draw):
    n = draw(st.integers(1, 30))
    perm = draw(st.permutations(list(range(1, n + 1))))
    return [f"p{i}" for i in range(n)], Ranking(tuple(perm))


@given(items_and_perm())
def test_apply_preserves_multiset(case):
    items, ranking = case
    assert sorted(apply_ranking(items, ranking)) == sorted(items)


@given(items_and_perm())
def test_inverse_roundtrip(case):
    items, ranking = case
    assert apply_ranking(apply_ranking(items, ranking), ranking.inverse()) == items


@given(items_and_perm(), st.data())
def test_composition_matches_sequential_application(case, data):
    items, first = case
    second = Ranking(tuple(data.draw(st.permutations(list(range(1, len(items) + 1))))))
    assert apply_ranking(items, first.then(second)) == apply_ranking(apply_ranking(items, first), second)


@given(st.text(min_size=1), st.text(min_size=1))
def test_qrels_lookup_is_total(qid, pid):
    qrels = Qrels({"known": {"doc": 2}})
    assert qrels.grade(qid, pid) == (2 if (qid, pid) == ("known", "doc") else 0)


def test_qrels_rejects_negative_grades():
    with pytest.raises(ValueError):
        Qrels({"q": {"d": -1}})


def test_candidate_list_rejects_duplicate_ids():
    q = Query("q", "text")
    with pytest.raises(ValueError, match="duplicate"):
        CandidateList(q, (Passage("a", "x"), Passage("a", "y")))


def test_passage_text_preserved_exactly():
    text = "  line one\n\tline two  é中 "
    assert Passage("p", text).text == text


def test_run_entries_have_strictly_decreasing_scores():
    entries = run_entries("q", ["a", "b", "c"])
    assert [e.rank for e in entries] == [1, 2, 3]
    assert [e.score for e in entries] == [3.0, 2.0, 1.0]


def test_to_string_formats():
    assert Ranking((4, 2, 1, 3)).to_string() == "[4] [2] [1] [3]"
    assert Ranking((4, 2, 1, 3)).to_string(" > ") == "[4] > [2] > [1] > [3]"
