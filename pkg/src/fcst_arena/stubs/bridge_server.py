"""Persistence-semantics bridge server used by the test suite.

Speaks the JSON-lines wire protocol on stdin/stdout and answers every request
with the window's last value repeated over the horizon. Fault-injection flags
let tests exercise the client's protocol-violation paths.

Run with: python -m fcst_arena.stubs.bridge_server
"""

from __future__ import annotations

import argparse
import json
import sys
import time


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="persistence bridge stub")
    parser.add_argument("--model-name", default="persistence-stub")
    parser.add_argument("--hello-version", default="1",
                        help="protocol version to announce (fault injection)")
    parser.add_argument("--garbage-line", action="store_true",
                        help="emit one non-JSON line before the first response")
    parser.add_argument("--duplicate-ids", action="store_true",
                        help="emit every response twice")
    parser.add_argument("--hang", action="store_true",
                        help="never answer requests and ignore stdin close")
    parser.add_argument("--error-on-horizon-over", type=int, default=None,
                        help="reply with an error envelope when horizon exceeds this")
    args = parser.parse_args(argv)

    _emit({"hello": {"protocol_version": args.hello_version, "model_name": args.model_name}})

    if args.hang:
        while True:
            time.sleep(3600)

    first = True
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            req_id = msg["id"]
            window = msg["window"]
            horizon = int(msg["horizon"])
        except (ValueError, KeyError, TypeError):
            _emit({"id": -1, "error": {"code": "bad_request", "message": f"unparsable line: {line[:80]}"}})
            continue

        if first and args.garbage_line:
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
        first = False

        if args.error_on_horizon_over is not None and horizon > args.error_on_horizon_over:
            _emit({"id": req_id, "error": {"code": "horizon_over_cap",
                                           "message": f"horizon {horizon} exceeds cap"}})
            continue
        if not window:
            _emit({"id": req_id, "error": {"code": "empty_window", "message": "window has no values"}})
            continue

        response = {"id": req_id, "pred": [float(window[-1])] * horizon}
        _emit(response)
        if args.duplicate_ids:
            _emit(response)
    return 0


if __name__ == "__main__":
    sys.exit(main())
