"""Chat-completion HTTP client for prompt-based forecasting.

Requests go out one window at a time (max_in_flight bounds the worker pool,
default 1 = strictly synchronous). Transport errors, HTTP 429/5xx, and parse
failures are retried with exponential backoff plus jitter; every attempt is
appended to a JSON-lines transcript so a run can be audited offline.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import requests

from .errors import (
    AuthError,
    ParseError,
    ProviderError,
    ProviderTimeout,
    RetriesExhausted,
)
from .prompting import (
    ParsedPrediction,
    PromptMode,
    ProviderConfig,
    Shot,
    estimate_tokens,
    parse_prediction_values,
    render_prompt,
)

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


def openai_style_request_body(provider: ProviderConfig, prompt: str) -> dict:
    return {
        "model": provider.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": provider.temperature,
    }


def openai_style_extract_text(body: dict) -> str:
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"response missing choices[0].message.content: {body!r}") from exc


@dataclass
class ProviderAdapter:
    """Seam for vendors whose wire schema differs from the OpenAI chat shape."""

    build_body: Callable[[ProviderConfig, str], dict] = openai_style_request_body
    extract_text: Callable[[dict], str] = openai_style_extract_text


DEFAULT_ADAPTER = ProviderAdapter()


class TranscriptWriter:
    """Append-only JSON-lines log, one record per attempt. Thread-safe."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self._lock = threading.Lock()

    def record(self, **fields) -> None:
        if self.path is None:
            return
        line = json.dumps(fields, sort_keys=True)
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(line + "\n")


def _backoff_delay(provider: ProviderConfig, failed_attempts: int, rng: random.Random) -> float:
    # Attempt k failed -> wait base*2^(k-1), plus up to the same again as jitter.
    base = provider.backoff_base * (2.0 ** (failed_attempts - 1))
    return min(base * (1.0 + rng.random()), 120.0)


def _api_key(provider: ProviderConfig) -> str:
    key = os.environ.get(provider.api_key_env_var, "")
    if not key:
        raise AuthError(f"API key env var {provider.api_key_env_var!r} is not set")
    return key


def forecast_window(provider: ProviderConfig, mode: PromptMode, shots: Optional[Sequence[Shot]],
                    window, horizon: int, *, adapter: ProviderAdapter = DEFAULT_ADAPTER,
                    transcript: Optional[TranscriptWriter] = None, window_index: int = 0,
                    _sleep=time.sleep, _rng: Optional[random.Random] = None) -> ParsedPrediction:
    """One window end to end: render, call, parse, retry as needed."""
    key = _api_key(provider)  # fail fast, before any network traffic
    prompt = render_prompt(mode, shots, window, horizon)
    transcript = transcript or TranscriptWriter(None)
    rng = _rng or random.Random()
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    body = adapter.build_body(provider, prompt)

    start = time.monotonic()
    last_error: Exception | None = None
    for attempt in range(1, provider.max_retries + 2):
        attempt_start = time.monotonic()
        status = None
        try:
            resp = requests.post(provider.endpoint_url, json=body, headers=headers,
                                 timeout=provider.request_timeout)
            status = resp.status_code
            if status in (401, 403):
                raise AuthError(f"provider rejected credentials (HTTP {status})")
            if status in RETRYABLE_STATUS:
                raise ProviderError(f"retryable HTTP {status}: {resp.text[:200]}")
            if status != 200:
                raise ProviderError(f"non-retryable HTTP {status}: {resp.text[:200]}")
            raw_text = adapter.extract_text(resp.json())
            values = parse_prediction_values(raw_text, horizon)
            latency = time.monotonic() - start
            transcript.record(
                ts=time.time(), window_index=window_index, attempt=attempt,
                status="ok", http_status=status,
                latency_seconds=time.monotonic() - attempt_start, raw_response=raw_text,
            )
            return ParsedPrediction(values, raw_text, latency, attempt)
        except AuthError:
            raise
        except (requests.Timeout, requests.RequestException, ProviderError, ParseError) as exc:
            if isinstance(exc, requests.Timeout):
                exc = ProviderTimeout(f"request timed out after {provider.request_timeout}s")
            last_error = exc
            transcript.record(
                ts=time.time(), window_index=window_index, attempt=attempt,
                status="error", http_status=status,
                latency_seconds=time.monotonic() - attempt_start, error=str(exc),
            )
            if attempt <= provider.max_retries:
                _sleep(_backoff_delay(provider, attempt, rng))
    raise RetriesExhausted(
        f"window {window_index}: {provider.max_retries + 1} attempts failed"
    ) from last_error


@dataclass
class BatchResult:
    predictions: List[Optional[ParsedPrediction]]
    failures: List[tuple] = field(default_factory=list)

    @property
    def total_latency(self) -> float:
        return sum(p.latency for p in self.predictions if p is not None)


def run_batch(provider: ProviderConfig, mode: PromptMode, shots: Optional[Sequence[Shot]],
              windows: Sequence, horizon: int, *, adapter: ProviderAdapter = DEFAULT_ADAPTER,
              transcript_path: Optional[str] = None, failure_policy: str = "abort",
              _sleep=time.sleep) -> BatchResult:
    """Forecast many windows with at most max_in_flight concurrent requests.

    Results keep input order regardless of completion order. failure_policy
    "abort" re-raises the first failure; "skip" records it and moves on.
    """
    if failure_policy not in ("abort", "skip"):
        raise ValueError(f"failure_policy must be 'abort' or 'skip', got {failure_policy!r}")
    _api_key(provider)  # validate once up front
    windows = list(windows)
    transcript = TranscriptWriter(transcript_path)
    if windows:
        prompt = render_prompt(mode, shots, windows[0], horizon)
        tokens = estimate_tokens(prompt)
        if tokens > provider.token_warn_threshold:
            log.warning(
                "rendered prompt is ~%d tokens (threshold %d); long windows blow up prompt size",
                tokens, provider.token_warn_threshold,
            )

    result = BatchResult(predictions=[None] * len(windows))

    def work(idx: int) -> None:
        result.predictions[idx] = forecast_window(
            provider, mode, shots, windows[idx], horizon,
            adapter=adapter, transcript=transcript, window_index=idx, _sleep=_sleep,
        )

    if provider.max_in_flight == 1:
        for idx in range(len(windows)):
            try:
                work(idx)
            except Exception as exc:
                if failure_policy == "abort":
                    raise
                result.failures.append((idx, exc))
    else:
        with ThreadPoolExecutor(max_workers=provider.max_in_flight) as pool:
            futures = {pool.submit(work, idx): idx for idx in range(len(windows))}
            for future, idx in futures.items():
                try:
                    future.result()
                except Exception as exc:
                    if failure_policy == "abort":
                        for other in futures:
                            other.cancel()
                        raise
                    result.failures.append((idx, exc))
        result.failures.sort(key=lambda pair: pair[0])
    return result
