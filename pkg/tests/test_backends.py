import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest

from coranking.backends import (
    BackendFailure,
    BestOfSamplesAdjuster,
    BiasedBackend,
    BiasModel,
    ConfigError,
    EndpointConfig,
    IdentityBackend,
    OracleBackend,
    RandomBackend,
    RemoteBackend,
    SamplingUnsupported,
    ScriptedBackend,
    biased_rerank,
    build_backend,
)
from coranking.core import Passage, Query, Ranking, validate_ranking
from coranking.metrics import reward
from coranking.windowing import run_pass

from conftest import make_list

Q = Query("q1", "query text")


def chat_response(content, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def remote(handler, **cfg):
    config = EndpointConfig(base_url="http://llm.test/v1", model="m", **cfg)
    client = httpx.Client(transport=httpx.MockTransport(handler))
    sleeps = []
    backend = RemoteBackend(config, client=client, sleep=sleeps.append)
    return backend, sleeps


def test_oracle_example():
    cands, qrels = make_list([0, 3, 1])
    assert OracleBackend(qrels).rerank(cands.query, cands.passages).perm == (2, 3, 1)


def test_identity_example():
    cands, _ = make_list([0] * 6)
    assert IdentityBackend().rerank(cands.query, cands.passages).perm == (1, 2, 3, 4, 5, 6)


def test_unbiased_backend_equals_oracle():
    cands, qrels = make_list([0, 2, 1, 2, 0, 3, 1, 0, 0, 1])
    assert BiasedBackend(qrels).rerank(cands.query, cands.passages) == OracleBackend(qrels).rerank(
        cands.query, cands.passages
    )


def test_mid_list_penalty_lowers_rank():
    grades = [0] * 20
    bias = BiasModel.mid_list(20, 8, 14, strength=2.5)
    cands, _ = make_list(grades)
    at_top = list(grades)
    at_top[0] = 2
    at_mid = list(grades)
    at_mid[10] = 2

    def position_of_relevant(gs):
        ranking = biased_rerank(Q, cands.passages, gs, bias)
        relevant = gs.index(2) + 1
        return ranking.perm.index(relevant)

    assert position_of_relevant(at_top) == 0
    assert position_of_relevant(at_mid) > position_of_relevant(at_top)


def test_two_orderings_give_different_downstream_ndcg():
    grades = [3, 3, 2, 2, 2, 1, 1, 1, 1, 1] + [0] * 10
    cands, qrels = make_list(grades)
    llr = BiasedBackend(qrels, BiasModel.mid_list(20, 8, 14, 2.5))
    order = list(range(8)) + list(range(10, 17)) + [8, 9] + list(range(17, 20))
    moved = cands.with_passages(cands.passages[i] for i in order)
    assert reward(cands, llr, qrels).value < reward(moved, llr, qrels).value == 1.0


def test_noisy_sampling_is_reproducible():
    cands, qrels = make_list([3, 2, 2, 1, 1, 0, 0, 0, 1, 0])
    noisy = BiasedBackend(qrels, BiasModel(sigma=1.0, seed=5))
    a = noisy.sample_rankings(cands.query, cands.passages, 8, seed=11)
    b = noisy.sample_rankings(cands.query, cands.passages, 8, seed=11)
    c = noisy.sample_rankings(cands.query, cands.passages, 8, seed=12)
    assert a == b and len(a) == 8
    assert a != c
    assert len(set(a)) > 1


def test_sampling_twenty_candidates_gives_valid_permutations():
    cands, qrels = make_list([1] * 5 + [0] * 15)
    for backend in (RandomBackend(3), BiasedBackend(qrels, BiasModel(sigma=0.5))):
        samples = backend.sample_rankings(cands.query, cands.passages, 8, seed=0)
        assert len(samples) == 8
        assert all(validate_ranking(s.perm, 20) is None for s in samples)


def test_sampling_unsupported_for_deterministic_backends():
    cands, qrels = make_list([1, 0, 2])
    oracle = OracleBackend(qrels)
    assert oracle.sample_rankings(cands.query, cands.passages, 1) == [Ranking((3, 1, 2))]
    with pytest.raises(SamplingUnsupported):
        oracle.sample_rankings(cands.query, cands.passages, 2)


@pytest.mark.parametrize("n", range(1, 21))
def test_every_simulator_returns_valid_rankings(n):
    cands, qrels = make_list([i % 4 for i in range(n)])
    llr = BiasedBackend(qrels, BiasModel.mid_list(20, sigma=0.3))
    backends = [
        IdentityBackend(),
        OracleBackend(qrels),
        llr,
        RandomBackend(n),
        BestOfSamplesAdjuster(RandomBackend(1), llr, qrels, m=4),
    ]
    for backend in backends:
        ranking = backend.rerank(cands.query, cands.passages)
        assert validate_ranking(ranking.perm, n) is None
        assert ranking == backend.rerank(cands.query, cands.passages)


def test_window_limit_enforced():
    cands, qrels = make_list([0] * 5)
    with pytest.raises(ValueError):
        OracleBackend(qrels, max_window=4).rerank(cands.query, cands.passages)


def test_best_of_never_worse_than_identity():
    grades = [3, 3, 2, 2, 2, 1, 1, 1, 1, 1] + [0] * 10
    cands, qrels = make_list(grades)
    llr = BiasedBackend(qrels, BiasModel.mid_list(20, 8, 14, 2.5))
    poa = BestOfSamplesAdjuster(RandomBackend(0), llr, qrels, m=16)
    adjusted = cands.with_passages(cands.passages[v - 1] for v in poa.rerank(cands.query, cands.passages).perm)
    assert reward(adjusted, llr, qrels).value >= reward(cands, llr, qrels).value


# remote backend


def test_remote_parses_chat_completion():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return chat_response("[4] > [2] > [3] > [1]")

    backend, _ = remote(handler)
    ranking = backend.rerank(Q, [Passage(f"p{i}", f"text {i}") for i in range(4)])
    assert ranking.perm == (4, 2, 3, 1)
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    body = seen["body"]
    assert body["model"] == "m" and body["temperature"] == 0.0
    assert len(body["messages"]) == 1 and body["messages"][0]["role"] == "user"
    assert "[4] text 3" in body["messages"][0]["content"]
    assert "seed" not in body


def test_remote_sends_credentials_from_env(monkeypatch):
    monkeypatch.setenv("MY_KEY", "secret")
    headers = {}

    def handler(request):
        headers.update(request.headers)
        return chat_response("[1]")

    backend, _ = remote(handler, api_key_env="MY_KEY")
    backend.rerank(Q, [Passage("a", "x")])
    assert headers["authorization"] == "Bearer secret"


@pytest.mark.parametrize("content", ["I think [2] is best", "", "[9] > [9] > [0]", "null", "[1] > [1] > [1]"])
def test_remote_repairs_malformed_text(content):
    backend, _ = remote(lambda r: chat_response(content))
    ranking = backend.rerank(Q, [Passage(f"p{i}", "t") for i in range(3)])
    assert validate_ranking(ranking.perm, 3) is None


def test_remote_retries_with_backoff_then_succeeds():
    statuses = iter([429, 503])

    def handler(request):
        status = next(statuses, 200)
        return chat_response("[2] > [1]", status=status) if status == 200 else httpx.Response(status, text="busy")

    backend, sleeps = remote(handler, backoff=0.5)
    assert backend.rerank(Q, [Passage("a", "x"), Passage("b", "y")]).perm == (2, 1)
    assert sleeps == [0.5, 1.0]
    assert backend.requests == 3


def test_remote_exhausts_retries():
    backend, sleeps = remote(lambda r: httpx.Response(500, text="down"), max_attempts=3)
    with pytest.raises(BackendFailure) as info:
        backend.rerank(Q, [Passage("a", "x")])
    assert info.value.kind == "exhausted"
    assert info.value.raw == "down"
    assert info.value.query_id == "q1"
    assert len(sleeps) == 2


def test_remote_timeout_kind():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    backend, _ = remote(handler, max_attempts=2)
    with pytest.raises(BackendFailure) as info:
        backend.rerank(Q, [Passage("a", "x")])
    assert info.value.kind == "timeout"


def test_remote_client_error_is_not_retried():
    backend, sleeps = remote(lambda r: httpx.Response(401, text="no key"))
    with pytest.raises(BackendFailure) as info:
        backend.rerank(Q, [Passage("a", "x")])
    assert info.value.raw == "no key" and sleeps == []


def test_remote_malformed_envelope_fails_cleanly():
    backend, _ = remote(lambda r: httpx.Response(200, text="<html>"), max_attempts=2)
    with pytest.raises(BackendFailure) as info:
        backend.rerank(Q, [Passage("a", "x")])
    assert info.value.raw == "<html>"


def test_remote_malformed_responses_never_crash_a_pass():
    replies = iter(["garbage", "[3] > [3]", "", "[20] > [1]"] * 10)
    backend, _ = remote(lambda r: chat_response(next(replies)))
    cands, _ = make_list([0] * 50)
    result = run_pass(cands, backend, 20, 10)
    assert result.ok and sorted(result.candidates.ids) == sorted(cands.ids)
    assert backend.repairs == result.calls


def test_remote_sampling_uses_sampling_temperature_and_seeds():
    bodies = []

    def handler(request):
        bodies.append(json.loads(request.content))
        return chat_response("[2] > [1]")

    backend, _ = remote(handler, sampling_temperature=0.7)
    samples = backend.sample_rankings(Q, [Passage("a", "x"), Passage("b", "y")], 3, seed=10)
    assert len(samples) == 3
    assert [b["temperature"] for b in bodies] == [0.7] * 3
    assert [b["seed"] for b in bodies] == [10, 11, 12]


def test_remote_zero_temperature_sampling():
    backend, _ = remote(lambda r: chat_response("[1]"), sampling_temperature=0.0)
    assert backend.sample_rankings(Q, [Passage("a", "x")], 1) == [Ranking((1,))]
    with pytest.raises(SamplingUnsupported):
        backend.sample_rankings(Q, [Passage("a", "x")], 2)


def test_remote_partial_sampling_failure_keeps_samples():
    calls = iter([200, 200, 500, 500, 500])

    def handler(request):
        status = next(calls)
        return chat_response("[1] > [2]") if status == 200 else httpx.Response(status)

    backend, _ = remote(handler, max_attempts=3)
    with pytest.raises(BackendFailure) as info:
        backend.sample_rankings(Q, [Passage("a", "x"), Passage("b", "y")], 4, seed=0)
    assert len(info.value.partial) == 2


def test_remote_bounds_in_flight_requests():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return chat_response("[1]")

    backend, _ = remote(handler, max_in_flight=2)
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(lambda i: backend.rerank(Query(f"q{i}", "t"), [Passage("a", "x")]), range(16)))
    assert state["peak"] <= 2


def test_endpoint_config_validation():
    with pytest.raises(ValueError):
        EndpointConfig(base_url="x", model="m", temperature=-1)


# scripted and factory


def test_scripted_replays_in_call_order():
    records = [
        {"query_id": "q1", "perm": [2, 1], "stage": "slr"},
        {"query_id": "q1", "perm": [1, 2], "stage": "llr"},
        {"query_id": "q1", "perm": [1, 2], "stage": "slr"},
    ]
    backend = ScriptedBackend(records, stage="slr")
    ps = [Passage("a", "x"), Passage("b", "y")]
    assert backend.rerank(Q, ps).perm == (2, 1)
    assert backend.rerank(Q, ps).perm == (1, 2)
    with pytest.raises(BackendFailure):
        backend.rerank(Q, ps)


def test_scripted_size_mismatch():
    backend = ScriptedBackend([{"query_id": "q1", "perm": [1, 2, 3]}])
    with pytest.raises(BackendFailure):
        backend.rerank(Q, [Passage("a", "x")])


def test_factory_builds_each_type(tmp_path):
    _, qrels = make_list([1, 0])
    trace = tmp_path / "t.jsonl"
    trace.write_text(json.dumps({"query_id": "q1", "perm": [1]}) + "\n")
    llr = build_backend({"type": "biased", "mid_list": {"n": 20}, "sigma": 0.0}, qrels)
    assert isinstance(llr, BiasedBackend) and llr.bias.penalty(8) == 2.5
    assert isinstance(build_backend({"type": "identity"}), IdentityBackend)
    assert isinstance(build_backend({"type": "oracle"}, qrels), OracleBackend)
    assert build_backend({"type": "noisy-oracle", "sigma": 0.4}, qrels).supports_sampling
    assert isinstance(build_backend({"type": "random", "seed": 3}), RandomBackend)
    assert isinstance(build_backend({"type": "best-of", "m": 4}, qrels, llr=llr), BestOfSamplesAdjuster)
    assert isinstance(build_backend({"type": "scripted", "path": str(trace)}), ScriptedBackend)
    r = build_backend({"type": "remote", "base_url": "http://x", "model": "big"}, name="llr")
    assert isinstance(r, RemoteBackend) and r.name == "llr"


@pytest.mark.parametrize(
    "cfg, kwargs",
    [
        ({"type": "nope"}, {}),
        ({"type": "oracle"}, {}),
        ({"type": "best-of"}, {"qrels": make_list([1])[1]}),
        ({"type": "remote", "base_url": "x", "model": "m", "bogus": 1}, {}),
        ({"type": "scripted"}, {}),
    ],
)
def test_factory_config_errors(cfg, kwargs):
    with pytest.raises(ConfigError):
        build_backend(cfg, **kwargs)
