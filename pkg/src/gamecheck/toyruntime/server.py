"""Stdio server: speaks the injection wire protocol for one game build.

One process serves one build (template + fault flags). ``launch`` starts or
restarts a session at the initial state; repeated launches reset cleanly so
a pool of cases can reuse one process. Exit code 0 after a clean shutdown,
2 if stdin closes without one.

Debug flags used by the harness test suite:

``--latency-ms N``    sleep N ms on every act request (simulated workload)
``--hang-act``        never answer act requests (timeout-path testing)
``--ambient-hazard``  adversarial variant: reads/writes a scratch file keyed
                      by game id in the working directory; a session that
                      finds the file plays with corrupted tuning constants
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from ..jsonutil import canonical_dumps
from ..protocol import ActionStep, patch_op_from_wire
from .templates import TEMPLATE_NAMES, Engine, validate_faults


def _fail(code: str, message: str = "") -> dict:
    return {"ok": False, "error": {"code": code, "message": message}}


class _Server:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.engine: Engine | None = None

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "launch":
            return self._launch(request)
        if op == "shutdown":
            return {"ok": True}
        if self.engine is None:
            return _fail("not-launched", "send launch first")
        if op == "patch":
            return self._patch(request)
        if op == "act":
            return self._act(request)
        if op == "snapshot":
            return {"ok": True, "snapshot": self.engine.snapshot().to_wire()}
        if op == "events":
            since = request.get("since", 0)
            if not isinstance(since, (int, float)):
                return _fail("bad-request", "since must be a number")
            return {"ok": True, "events": self.engine.events_since(int(since))}
        return _fail("unknown-op", repr(op))

    def _launch(self, request: dict) -> dict:
        game = request.get("game")
        if game != self.args.template:
            return _fail("launch-failure", f"this runtime serves {self.args.template!r}, "
                                           f"not {game!r}")
        seed = request.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            return _fail("launch-failure", "seed must be a non-negative integer")
        tainted = False
        hazard_file = Path(f"ambient-{game}.json")
        if self.args.ambient_hazard:
            tainted = hazard_file.exists()
            try:
                hazard_file.write_text(json.dumps({"game": game, "seed": seed}))
            except OSError:
                pass
        self.engine = Engine(self.args.template, self.args.faults, seed=seed, tainted=tainted)
        return {"ok": True,
                "schema": self.engine.schema.to_wire(),
                "snapshot": self.engine.snapshot().to_wire()}

    def _patch(self, request: dict) -> dict:
        assert self.engine is not None
        try:
            ops = [patch_op_from_wire(raw) for raw in request.get("ops", [])]
        except (ValueError, KeyError, TypeError) as exc:
            return _fail("bad-request", f"malformed patch op: {exc}")
        results, rolled_back = self.engine.apply_patch(ops)
        return {"ok": True, "results": results, "rolled_back": rolled_back,
                "snapshot": self.engine.snapshot().to_wire()}

    def _act(self, request: dict) -> dict:
        assert self.engine is not None
        if self.args.hang_act:
            time.sleep(3600)
        if self.args.latency_ms:
            time.sleep(self.args.latency_ms / 1000.0)
        try:
            steps = [ActionStep(raw["action"], raw.get("params", {}), int(raw.get("ticks", 1)))
                     for raw in request.get("steps", [])]
        except (ValueError, KeyError, TypeError) as exc:
            return _fail("bad-request", f"malformed action step: {exc}")
        trace, events, logs = self.engine.act(steps)
        return {"ok": True, "action_trace": trace, "events": events, "logs": logs,
                "tick": self.engine.tick}


def serve(args: argparse.Namespace, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    server = _Server(args)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        request = None
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                response = _fail("bad-request", "request must be a JSON object")
            else:
                response = server.handle(request)
        except json.JSONDecodeError:
            response = _fail("bad-request", "not valid JSON")
        except Exception as exc:  # contract: never crash the process
            response = _fail("internal", f"{type(exc).__name__}: {exc}")
        stdout.write(canonical_dumps(response) + "\n")
        stdout.flush()
        if isinstance(request, dict) and request.get("op") == "shutdown" and response.get("ok"):
            return 0
    return 2  # transport EOF without shutdown


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toy-runtime",
                                     description="deterministic game runtime on stdio")
    parser.add_argument("--template", required=True, choices=TEMPLATE_NAMES)
    parser.add_argument("--faults", default="", help="comma-separated fault flags")
    parser.add_argument("--seed", type=int, default=0, help="default seed (launch overrides)")
    parser.add_argument("--latency-ms", type=int, default=0)
    parser.add_argument("--hang-act", action="store_true")
    parser.add_argument("--ambient-hazard", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    faults = [f.strip() for f in args.faults.split(",") if f.strip()]
    try:
        validate_faults(args.template, faults)
    except ValueError as exc:
        parser.error(str(exc))
    args.faults = faults
    return serve(args)


if __name__ == "__main__":
    sys.exit(main())
