"""The request loop: hello first, then one JSON response line per request.

Never crashes on malformed input (answers with an error envelope, id -1 when
the id itself is unparsable) and keeps serving until stdin closes. The model
is loaded lazily so that load failures surface as per-request
"model_load_failed" envelopes instead of a dead process.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import PROTOCOL_VERSION
from .backends import BackendLoadError, BridgeServerConfig, load_backend


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _error(req_id, code: str, message: str) -> None:
    _emit({"id": req_id, "error": {"code": code, "message": message}})


def serve(config: BridgeServerConfig, stdin=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    _emit({"hello": {
        "protocol_version": PROTOCOL_VERSION,
        "model_name": config.checkpoint,
        "max_window": config.context_len,
        "max_horizon": config.horizon_cap,
    }})

    backend = None
    load_error = None
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except ValueError:
            _error(-1, "bad_request", f"line is not JSON: {line[:80]}")
            continue
        req_id = msg.get("id") if isinstance(msg, dict) else None
        if not isinstance(req_id, int):
            _error(-1, "bad_request", "missing or non-integer id")
            continue

        window = msg.get("window")
        horizon = msg.get("horizon")
        if not isinstance(window, list) or not isinstance(horizon, int) or horizon < 1:
            _error(req_id, "bad_request", "need 'window' array and positive integer 'horizon'")
            continue
        if len(window) == 0:
            _error(req_id, "bad_request", "window has no values")
            continue
        if len(window) > config.context_len:
            _error(req_id, "window_too_long",
                   f"window has {len(window)} values, context limit is {config.context_len}")
            continue
        if horizon > config.horizon_cap:
            _error(req_id, "horizon_over_cap",
                   f"horizon {horizon} exceeds cap {config.horizon_cap}")
            continue
        try:
            values = [float(v) for v in window]
        except (TypeError, ValueError):
            _error(req_id, "bad_request", "window contains non-numeric values")
            continue
        if not all(math.isfinite(v) for v in values):
            _error(req_id, "bad_request", "window contains non-finite values")
            continue

        if backend is None and load_error is None:
            try:
                backend = load_backend(config)
            except BackendLoadError as exc:
                load_error = str(exc)
        if backend is None:
            _error(req_id, "model_load_failed", load_error)
            continue

        try:
            pred = backend.forecast(values, horizon)
        except Exception as exc:  # a bad forecast must not kill the session
            _error(req_id, "forecast_failed", str(exc))
            continue
        _emit({"id": req_id, "pred": [float(v) for v in pred]})
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="timesfm-bridge",
        description="Serve a pretrained TimesFM checkpoint over the forecast bridge protocol.",
    )
    parser.add_argument("--checkpoint", default="google/timesfm-1.0-200m-pytorch",
                        help="HuggingFace checkpoint id, or 'selftest' for the built-in test backend")
    parser.add_argument("--context-len", type=int, default=720,
                        help="maximum window length accepted (default 720)")
    parser.add_argument("--device", default="cpu", choices=["cpu", "gpu"])
    parser.add_argument("--horizon-cap", type=int, default=128)
    args = parser.parse_args(argv)
    config = BridgeServerConfig(args.checkpoint, args.context_len, args.device, args.horizon_cap)
    return serve(config)


if __name__ == "__main__":
    sys.exit(main())
