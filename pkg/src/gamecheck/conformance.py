"""Randomized protocol-conformance cases: served runtime vs pure reference.

Any adapter that claims to serve a template must produce exactly the
reference's post-patch snapshot and event log for every generated case.
The same cases validate the toy runtime and the browser bridge.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .jsonutil import canonical_dumps
from .protocol import ActionStep, patch_op_from_wire
from .toyruntime.oracle import oracle_simulate


@dataclass(frozen=True)
class Case:
    template: str
    seed: int
    patch: tuple[dict, ...]
    steps: tuple[dict, ...]


def _collider_case(rng: random.Random, seed: int) -> Case:
    patch: list[dict] = [
        {"op": "set", "path": "player.pos", "value": [rng.randrange(10), rng.randrange(10)]},
        {"op": "set", "path": "player.hp", "value": rng.randrange(1, 101)},
    ]
    for index in range(rng.randrange(4)):
        patch.append({"op": "spawn", "entity_type": "obstacle", "id": f"o{index}",
                      "props": {"pos": [rng.randrange(10), rng.randrange(10)]}})
    if patch and rng.random() < 0.2:
        patch.append({"op": "set", "path": "phase",
                      "value": rng.choice(["playing", "game_over"])})
    steps = tuple({"action": "move", "params": {"dir": rng.choice(
        ["up", "down", "left", "right"])}, "ticks": rng.randrange(1, 4)}
        for _ in range(rng.randrange(7)))
    return Case("collider", seed, tuple(patch), steps)


def _ledger_case(rng: random.Random, seed: int) -> Case:
    patch: list[dict] = [{"op": "set", "path": "score", "value": rng.randrange(0, 130)}]
    ids = [f"i{index}" for index in range(rng.randrange(1, 4))]
    for item_id in ids:
        patch.append({"op": "spawn", "entity_type": "item", "id": item_id,
                      "props": {"value": rng.randrange(1, 61)}})
    steps = []
    for _ in range(rng.randrange(6)):
        target = rng.choice(ids + ["nope"])
        steps.append({"action": "collect", "params": {"id": target},
                      "ticks": rng.randrange(1, 3)})
    return Case("ledger", seed, tuple(patch), tuple(steps))


def _quest_case(rng: random.Random, seed: int) -> Case:
    patch = (
        {"op": "set", "path": "boss_phase", "value": rng.random() < 0.6},
        {"op": "set", "path": "boss.hp", "value": rng.randrange(1, 31)},
    )
    steps = tuple({"action": "defeat",
                   "params": {"target": rng.choice(["boss", "boss", "boss", "minion"])},
                   "ticks": rng.randrange(1, 3)} for _ in range(rng.randrange(6)))
    return Case("quest", seed, patch, steps)


_GENERATORS = {"collider": _collider_case, "ledger": _ledger_case, "quest": _quest_case}


def generate_cases(template: str, count: int, seed: int = 0) -> list[Case]:
    rng = random.Random(f"{template}:{seed}")
    return [_GENERATORS[template](rng, rng.randrange(2 ** 32)) for _ in range(count)]


def run_case(session, case: Case, faults: Sequence[str] = ()) -> str | None:
    """Replay one case on a live, relaunchable session; None means agreement,
    otherwise a human-readable mismatch."""
    session.launch(case.template, case.seed)
    report = session.apply_patch([patch_op_from_wire(op) for op in case.patch])
    if not report.ok:
        return f"patch unexpectedly failed: {report.first_error()}"
    session.execute([ActionStep(s["action"], s.get("params", {}), s.get("ticks", 1))
                     for s in case.steps])
    served_post = session.snapshot()
    served_events = session.events(since=0)
    want_post, want_events = oracle_simulate(case.template, faults,
                                             list(case.patch), list(case.steps))
    if canonical_dumps(served_post.to_wire()) != canonical_dumps(want_post.to_wire()):
        return (f"snapshot mismatch\n served: {canonical_dumps(served_post.to_wire())}\n"
                f" oracle: {canonical_dumps(want_post.to_wire())}")
    if canonical_dumps(served_events) != canonical_dumps(want_events):
        return (f"event mismatch\n served: {canonical_dumps(served_events)}\n"
                f" oracle: {canonical_dumps(want_events)}")
    return None


def check_conformance(session_factory: Callable[[], object], template: str,
                      faults: Sequence[str], cases: Sequence[Case]) -> list[str]:
    """Run all cases through one session (relaunched per case); returns
    mismatch descriptions, empty on full agreement."""
    mismatches: list[str] = []
    session = session_factory()
    try:
        for index, case in enumerate(cases):
            problem = run_case(session, case, faults)
            if problem is not None:
                mismatches.append(f"case {index} (seed {case.seed}): {problem}")
    finally:
        session.shutdown()
    return mismatches
