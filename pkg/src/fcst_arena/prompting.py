"""Prompt construction and response parsing for LLM-based forecasting.

The two templates are frozen byte-for-byte (golden-tested): a change to either
is a breaking change to the benchmark. Values are serialized as the shortest
decimal string that round-trips to the exact 64-bit float (Python repr), so
parse(serialize(x)) == x bit-exactly.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from .dataset import WindowSet
from .errors import (
    MalformedNumber,
    NoJsonFound,
    NonFiniteValue,
    NoShots,
    NotEnoughSamples,
    WrongCount,
)


class PromptMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"


@dataclass(frozen=True)
class Shot:
    window: np.ndarray
    next: np.ndarray
    origin_index: int


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str
    model_id: str = "o4-mini"
    api_key_env_var: str = "LLM_API_KEY"
    temperature: float = 0.0
    request_timeout: float = 120.0
    max_retries: int = 5
    backoff_base: float = 2.0
    max_in_flight: int = 1
    token_warn_threshold: int = 500

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ParsedPrediction:
    values: List[float]
    raw_text: str
    latency: float
    attempt_count: int


def serialize_values(values) -> str:
    """[v1, v2, ..., vn] with shortest round-trip decimals."""
    out = []
    for v in np.asarray(values, dtype=np.float64).ravel():
        f = float(v)
        if not math.isfinite(f):
            raise NonFiniteValue(f"cannot serialize non-finite value {f!r}")
        out.append(repr(f))
    return "[" + ", ".join(out) + "]"


_TASK_LINE = "Task: Predict the next {h} value(s) of the series (same normalized scale)."
_OUTPUT_LINE = 'Output Format: JSON object exactly as: {"pred": [v1, v2, ...]}.Return numbers only'


def render_zero_shot(window, horizon: int) -> str:
    return "\n".join([
        "You are given a time series window (normalized, mean 0, std 1).",
        "Input: " + serialize_values(window),
        _TASK_LINE.format(h=horizon),
        _OUTPUT_LINE,
    ])


def render_few_shot(shots: Sequence[Shot], window, horizon: int) -> str:
    if not shots:
        raise NoShots("few-shot prompt needs at least one example window")
    lines = ["You are given example windows and their next value(s) (normalized)."]
    for shot in shots:
        lines.append("Window: " + serialize_values(shot.window))
        lines.append("Next: " + serialize_values(shot.next))
    lines.append("Input: " + serialize_values(window))
    lines.append(_TASK_LINE.format(h=horizon))
    lines.append(_OUTPUT_LINE)
    return "\n".join(lines)


def render_prompt(mode: PromptMode, shots: Optional[Sequence[Shot]], window, horizon: int) -> str:
    if PromptMode(mode) is PromptMode.ZERO_SHOT:
        return render_zero_shot(window, horizon)
    return render_few_shot(shots or [], window, horizon)


def select_shots(train: WindowSet, k: int = 2) -> List[Shot]:
    """The k chronologically latest train samples: the closest context to the
    test region, and deterministic."""
    if k <= 0:
        return []
    if len(train) < k:
        raise NotEnoughSamples(f"need {k} shots, train split has {len(train)} samples")
    shots = []
    for i in range(len(train) - k, len(train)):
        sample = train[i]
        shots.append(Shot(sample.input, sample.target, sample.origin_index))
    return shots


def estimate_tokens(text: str) -> int:
    # Rough 4-chars-per-token heuristic; only used for the size warning.
    return max(1, len(text) // 4)


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```\s*$", re.DOTALL)


def parse_prediction_values(raw: str, horizon: int) -> List[float]:
    """Extract the first balanced JSON object holding "pred" and validate it.

    Tolerates code fences, prose around the object, and leading text. Raises
    NoJsonFound / WrongCount / NonFiniteValue / MalformedNumber.
    """
    text = raw.strip()
    fence = _FENCE_RE.match(text)
    if fence:
        text = fence.group(1).strip()

    decoder = json.JSONDecoder()
    obj = None
    pos = text.find("{")
    while pos != -1:
        try:
            candidate, _ = decoder.raw_decode(text, pos)
        except ValueError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(candidate, dict) and "pred" in candidate:
            obj = candidate
            break
        pos = text.find("{", pos + 1)
    if obj is None:
        raise NoJsonFound(f"no JSON object with key 'pred' in response: {raw[:120]!r}")

    pred = obj["pred"]
    if not isinstance(pred, list):
        raise MalformedNumber(f"'pred' must be an array, got {type(pred).__name__}")
    values = []
    for item in pred:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise MalformedNumber(f"non-numeric entry in 'pred': {item!r}")
        values.append(float(item))
    if len(values) != horizon:
        raise WrongCount(f"expected {horizon} value(s), got {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteValue(f"non-finite prediction in {values}")
    return values
