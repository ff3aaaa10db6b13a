"""Provider client against the scripted HTTP stub: happy path, retries with
backoff ordering, auth failures, and batch ordering/concurrency."""

import json

import numpy as np
import pytest

from fcst_arena.errors import AuthError, RetriesExhausted
from fcst_arena.prompting import PromptMode, ProviderConfig
from fcst_arena.provider import TranscriptWriter, forecast_window, run_batch

from stub_llm import ScriptedLlmServer, make_content

KEY_VAR = "FCST_ARENA_TEST_KEY"


def _provider(url, **overrides) -> ProviderConfig:
    defaults = dict(
        endpoint_url=url, model_id="stub-model", api_key_env_var=KEY_VAR,
        request_timeout=5.0, max_retries=5, backoff_base=0.05, max_in_flight=1,
    )
    defaults.update(overrides)
    return ProviderConfig(**defaults)


@pytest.fixture(autouse=True)
def api_key(monkeypatch):
    monkeypatch.setenv(KEY_VAR, "sk-test")


def test_paper_response_pair():
    script = [("raw_content", '{"pred": [1.1356938766157008]}')]
    with ScriptedLlmServer(script) as server:
        pred = forecast_window(_provider(server.url), PromptMode.ZERO_SHOT, None,
                               [2.222027459944977] * 7, 1)
    assert pred.values == [1.1356938766157008]
    assert pred.attempt_count == 1
    assert pred.raw_text == '{"pred": [1.1356938766157008]}'
    assert pred.latency > 0


def test_request_body_schema():
    with ScriptedLlmServer([("ok", [0.5])]) as server:
        forecast_window(_provider(server.url, temperature=0.0), PromptMode.ZERO_SHOT,
                        None, [1.0, 2.0], 1)
        body = server.requests[0]["body"]
    assert body["model"] == "stub-model"
    assert body["temperature"] == 0.0
    assert body["messages"][0]["role"] == "user"
    assert body["messages"][0]["content"].startswith("You are given a time series window")
    assert server.requests[0]["auth"] == "Bearer sk-test"


def test_retry_on_429_with_backoff_ordering():
    script = [("status", 429), ("status", 429), ("ok", [0.25])]
    with ScriptedLlmServer(script) as server:
        provider = _provider(server.url)
        pred = forecast_window(provider, PromptMode.ZERO_SHOT, None, [1.0], 1)
        times = [r["ts"] for r in server.requests]
    assert pred.attempt_count == 3
    assert pred.values == [0.25]
    # Exponential backoff: first gap >= base, second >= 2*base.
    assert times[1] - times[0] >= provider.backoff_base
    assert times[2] - times[1] >= 2 * provider.backoff_base


def test_retry_on_5xx_and_parse_failure():
    script = [("status", 503), ("raw_content", "gibberish with no json"), ("ok", [1.5])]
    with ScriptedLlmServer(script) as server:
        pred = forecast_window(_provider(server.url), PromptMode.ZERO_SHOT, None, [1.0], 1)
    assert pred.attempt_count == 3
    assert pred.values == [1.5]


def test_retries_exhausted_carries_cause():
    script = [("status", 429)] * 3
    with ScriptedLlmServer(script) as server:
        with pytest.raises(RetriesExhausted) as exc_info:
            forecast_window(_provider(server.url, max_retries=2), PromptMode.ZERO_SHOT,
                            None, [1.0], 1)
    assert exc_info.value.__cause__ is not None
    assert "429" in str(exc_info.value.__cause__)


def test_non_retryable_4xx_fails_fast():
    script = [("status", 400)]
    with ScriptedLlmServer(script) as server:
        with pytest.raises(RetriesExhausted):
            forecast_window(_provider(server.url, max_retries=0), PromptMode.ZERO_SHOT,
                            None, [1.0], 1)
        assert len(server.requests) == 1


def test_auth_error_before_any_network_call(monkeypatch):
    monkeypatch.delenv(KEY_VAR, raising=False)
    with ScriptedLlmServer([("ok", [1.0])]) as server:
        with pytest.raises(AuthError):
            forecast_window(_provider(server.url), PromptMode.ZERO_SHOT, None, [1.0], 1)
        assert server.requests == []


def test_auth_error_on_401_no_retry():
    script = [("status", 401)]
    with ScriptedLlmServer(script) as server:
        with pytest.raises(AuthError):
            forecast_window(_provider(server.url), PromptMode.ZERO_SHOT, None, [1.0], 1)
        assert len(server.requests) == 1


def test_malformed_choices_is_retryable():
    script = [("malformed_body", None), ("ok", [2.0])]
    with ScriptedLlmServer(script) as server:
        pred = forecast_window(_provider(server.url), PromptMode.ZERO_SHOT, None, [1.0], 1)
    assert pred.attempt_count == 2


def test_transcript_records_every_attempt(tmp_path):
    script = [("status", 429), ("ok", [0.5])]
    path = tmp_path / "transcript.jsonl"
    with ScriptedLlmServer(script) as server:
        forecast_window(_provider(server.url), PromptMode.ZERO_SHOT, None, [1.0], 1,
                        transcript=TranscriptWriter(str(path)), window_index=17)
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 2
    assert [r["attempt"] for r in records] == [1, 2]
    assert records[0]["status"] == "error"
    assert records[1]["status"] == "ok"
    assert all(r["window_index"] == 17 for r in records)
    assert records[1]["raw_response"] == make_content([0.5])


def test_run_batch_sequential_order():
    windows = [np.array([float(i), float(i) + 0.5]) for i in range(6)]
    with ScriptedLlmServer(mode="last_value") as server:
        result = run_batch(_provider(server.url), PromptMode.ZERO_SHOT, None, windows, 1)
        times = [r["ts"] for r in server.requests]
    assert [p.values[0] for p in result.predictions] == [w[-1] for w in windows]
    assert times == sorted(times)
    assert len(times) == 6
    assert result.total_latency > 0


def test_run_batch_concurrent_matches_sequential():
    windows = [np.array([float(i), float(i) * 2]) for i in range(12)]
    with ScriptedLlmServer(mode="last_value") as server:
        seq = run_batch(_provider(server.url, max_in_flight=1), PromptMode.ZERO_SHOT,
                        None, windows, 1)
    with ScriptedLlmServer(mode="last_value") as server:
        par = run_batch(_provider(server.url, max_in_flight=4), PromptMode.ZERO_SHOT,
                        None, windows, 1)
    assert [p.values for p in par.predictions] == [p.values for p in seq.predictions]


def test_run_batch_empty():
    with ScriptedLlmServer() as server:
        result = run_batch(_provider(server.url), PromptMode.ZERO_SHOT, None, [], 1)
    assert result.predictions == []
    assert result.total_latency == 0.0


def test_run_batch_abort_policy():
    script = [("ok", [1.0])] + [("status", 400)]
    with ScriptedLlmServer(script) as server:
        with pytest.raises(RetriesExhausted):
            run_batch(_provider(server.url, max_retries=0), PromptMode.ZERO_SHOT, None,
                      [np.array([1.0]), np.array([2.0]), np.array([3.0])], 1)


def test_run_batch_skip_policy():
    script = [("ok", [1.0]), ("status", 400), ("ok", [3.0])]
    with ScriptedLlmServer(script) as server:
        result = run_batch(_provider(server.url, max_retries=0), PromptMode.ZERO_SHOT, None,
                           [np.array([1.0]), np.array([2.0]), np.array([3.0])], 1,
                           failure_policy="skip")
    assert result.predictions[0].values == [1.0]
    assert result.predictions[1] is None
    assert result.predictions[2].values == [3.0]
    assert len(result.failures) == 1
    assert result.failures[0][0] == 1


def test_retry_attempts_bounded():
    script = [("status", 503)] * 10
    with ScriptedLlmServer(script) as server:
        with pytest.raises(RetriesExhausted):
            forecast_window(_provider(server.url, max_retries=3), PromptMode.ZERO_SHOT,
                            None, [1.0], 1)
        assert len(server.requests) == 4  # max_retries + 1


def test_prompt_size_warning(caplog):
    window = np.linspace(0, 1, 720)
    with ScriptedLlmServer(mode="last_value") as server:
        with caplog.at_level("WARNING", logger="fcst_arena.provider"):
            run_batch(_provider(server.url), PromptMode.ZERO_SHOT, None, [window], 1)
    assert any("tokens" in rec.message for rec in caplog.records)
