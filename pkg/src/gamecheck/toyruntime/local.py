"""In-process session adapter over the template engine.

Behaves like a :class:`~gamecheck.protocol.SubprocessSession` but without
the child process, which keeps large test matrices fast. Every request and
response is round-tripped through JSON so values match the wire bit for bit.
"""

from __future__ import annotations

import json
import time
from typing import Sequence

from ..jsonutil import canonical_dumps
from ..protocol import (
    ActionStep,
    LaunchFailure,
    PatchOp,
    PatchReport,
    ProtocolTimeout,
    RuntimeSchema,
    SessionClosed,
    Snapshot,
    patch_op_from_wire,
)
from .templates import Engine


def _roundtrip(payload):
    return json.loads(canonical_dumps(payload))


class LocalSession:
    def __init__(self, template: str, faults: Sequence[str] = (), act_delay_s: float = 0.0):
        self._template = template
        self._faults = tuple(faults)
        self._act_delay_s = act_delay_s
        self._engine: Engine | None = None
        self._closed = False
        self.schema: RuntimeSchema | None = None
        self.initial: Snapshot | None = None

    def _check_open(self) -> Engine:
        if self._closed:
            raise SessionClosed()
        if self._engine is None:
            raise LaunchFailure("not-launched", "send launch first")
        return self._engine

    def launch(self, game: str, seed: int, timeout: float | None = None) -> RuntimeSchema:
        if self._closed:
            raise SessionClosed()
        if game != self._template:
            raise LaunchFailure("launch-failure",
                                f"this runtime serves {self._template!r}, not {game!r}")
        self._engine = Engine(self._template, self._faults, seed=seed)
        self.schema = RuntimeSchema.from_wire(_roundtrip(self._engine.schema.to_wire()))
        self.initial = Snapshot.from_wire(_roundtrip(self._engine.snapshot().to_wire()))
        return self.schema

    def apply_patch(self, ops: Sequence[PatchOp], timeout: float | None = None) -> PatchReport:
        engine = self._check_open()
        wire_ops = [patch_op_from_wire(raw) for raw in _roundtrip([op.to_wire() for op in ops])]
        results, rolled_back = engine.apply_patch(wire_ops)
        return PatchReport(results=_roundtrip(results), rolled_back=rolled_back,
                           realized=self.snapshot())

    def execute(self, steps: Sequence[ActionStep],
                timeout: float | None = None) -> tuple[list[dict], list[dict], list[str]]:
        engine = self._check_open()
        if self._act_delay_s:
            if timeout is not None and self._act_delay_s > timeout:
                time.sleep(timeout)
                self.kill()
                raise ProtocolTimeout("timeout", "simulated latency exceeded deadline")
            time.sleep(self._act_delay_s)
        wire_steps = [ActionStep(raw["action"], raw.get("params", {}), raw.get("ticks", 1))
                      for raw in _roundtrip([s.to_wire() for s in steps])]
        trace, events, logs = engine.act(wire_steps)
        return _roundtrip(trace), _roundtrip(events), list(logs)

    def snapshot(self, timeout: float | None = None) -> Snapshot:
        engine = self._check_open()
        return Snapshot.from_wire(_roundtrip(engine.snapshot().to_wire()))

    def events(self, since: int = 0, timeout: float | None = None) -> list[dict]:
        engine = self._check_open()
        return _roundtrip(engine.events_since(since))

    def shutdown(self, timeout: float = 5.0) -> None:
        self._closed = True

    def kill(self) -> None:
        self._closed = True

    @property
    def alive(self) -> bool:
        return not self._closed


class LocalRuntime:
    """Factory for launched in-process sessions; same shape as SubprocessRuntime."""

    def __init__(self, template: str, faults: Sequence[str] = (), game: str | None = None,
                 act_delay_s: float = 0.0):
        self.template = template
        self.faults = tuple(faults)
        self.game = game if game is not None else template
        self.act_delay_s = act_delay_s

    def open(self, seed: int, timeout: float | None = None) -> LocalSession:
        session = LocalSession(self.template, self.faults, act_delay_s=self.act_delay_s)
        session.launch(self.game, seed, timeout=timeout)
        return session

    __call__ = open
