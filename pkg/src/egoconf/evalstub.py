"""Tiny reference evaluator speaking the line protocol.

Useful as an end-to-end test vehicle and as a worked example of the
protocol: it answers every request with a fixed or config-derived
metric, and can be told to misbehave in controlled ways (sleep, print a
malformed line, exit mid-stream) to exercise client error handling.

    python -m egoconf.evalstub --metric 0.5
    python -m egoconf.evalstub --mode hash --sleep 0.1
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time


def _hash_metric(config: dict) -> float:
    """Deterministic pseudo-metric in [0, 1) from the configuration content."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") / 2**64


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--metric", type=float, default=None,
                        help="answer every request with this fixed metric")
    parser.add_argument("--mode", choices=["fixed", "hash"], default="fixed")
    parser.add_argument("--sleep", type=float, default=0.0,
                        help="seconds to sleep before each response")
    parser.add_argument("--malformed-every", type=int, default=0, metavar="N",
                        help="print a malformed line instead of every Nth response")
    parser.add_argument("--die-every", type=int, default=0, metavar="N",
                        help="exit without answering every Nth request")
    parser.add_argument("--fail-every", type=int, default=0, metavar="N",
                        help="answer every Nth request with a failed status")
    parser.add_argument("--skip-hello", action="store_true",
                        help="violate the protocol by omitting the hello line")
    args = parser.parse_args(argv)

    out = sys.stdout
    if not args.skip_hello:
        print(json.dumps({"type": "hello", "protocol": "egoconf-eval", "version": 1}),
              file=out, flush=True)

    seen = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        seen += 1
        if args.sleep:
            time.sleep(args.sleep)
        if args.die_every and seen % args.die_every == 0:
            return 1
        if args.malformed_every and seen % args.malformed_every == 0:
            print("this is not json", file=out, flush=True)
            continue
        if args.fail_every and seen % args.fail_every == 0:
            response = {"type": "response", "id": request["id"], "status": "failed",
                        "metric": None, "diagnostics": {"failure": "evaluator",
                                                        "error": "synthetic failure"}}
        else:
            if args.metric is not None:
                metric = args.metric
            elif args.mode == "hash":
                metric = _hash_metric(request.get("config") or {})
            else:
                metric = 0.0
            response = {"type": "response", "id": request["id"], "status": "ok",
                        "metric": metric, "diagnostics": {}}
        print(json.dumps(response, sort_keys=True), file=out, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
