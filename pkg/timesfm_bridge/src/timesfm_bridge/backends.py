"""Forecast backends behind the bridge server.

The real backend wraps a published TimesFM checkpoint through its forecast()
API, loaded lazily on the first request so that protocol errors (bad lines,
oversized windows) never depend on model availability. The selftest backend
is a deterministic stand-in used by the conformance suite and CI machines
that cannot fetch the checkpoint; it exercises exactly the same server loop.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BridgeServerConfig:
    checkpoint: str = "google/timesfm-1.0-200m-pytorch"
    context_len: int = 720
    device: str = "cpu"
    horizon_cap: int = 128

    def __post_init__(self):
        if self.context_len < 1:
            raise ValueError(f"context_len must be >= 1, got {self.context_len}")
        if self.horizon_cap < 1:
            raise ValueError(f"horizon_cap must be >= 1, got {self.horizon_cap}")


class BackendLoadError(Exception):
    pass


class SelfTestBackend:
    """Deterministic, stateless: exponentially weighted mean of the window
    tail. Not a real model; exists so the wire protocol can be driven without
    the checkpoint."""

    name = "selftest"

    def __init__(self, config: BridgeServerConfig):
        self.config = config

    def forecast(self, window, horizon):
        tail = window[-16:] if len(window) > 16 else window
        acc, weight, w = 0.0, 0.0, 1.0
        for v in reversed(tail):
            acc += w * float(v)
            weight += w
            w *= 0.5
        level = acc / weight
        return [level] * horizon


class TimesFmBackend:
    """Inference-only wrapper around a published TimesFM checkpoint.

    No optimizer is ever constructed and no parameter is ever updated; each
    request is one forecast() call on the normalized window.
    """

    def __init__(self, config: BridgeServerConfig):
        self.config = config
        self.name = config.checkpoint
        try:
            import timesfm  # noqa: F401  (heavyweight; imported on demand)
        except ImportError as exc:
            raise BackendLoadError(
                f"timesfm package not installed (pip install timesfm): {exc}"
            ) from exc
        # TimesFM wants the context length as a multiple of 32.
        context = ((config.context_len + 31) // 32) * 32
        try:
            self._model = timesfm.TimesFm(
                hparams=timesfm.TimesFmHparams(
                    context_len=context,
                    horizon_len=config.horizon_cap,
                    backend=config.device,
                ),
                checkpoint=timesfm.TimesFmCheckpoint(huggingface_repo_id=config.checkpoint),
            )
        except Exception as exc:
            raise BackendLoadError(f"cannot load checkpoint {config.checkpoint!r}: {exc}") from exc

    def forecast(self, window, horizon):
        import numpy as np

        context = np.asarray(window, dtype=np.float32)[None, :]
        point, _ = self._model.forecast(context, freq=[0])
        return [float(v) for v in point[0, :horizon]]


def load_backend(config: BridgeServerConfig):
    if config.checkpoint == "selftest":
        return SelfTestBackend(config)
    return TimesFmBackend(config)
