"""Deterministic game templates with seedable fault mutations.

Three data-driven state machines, each small enough that its correct
behavior is analytically known, each with a fault vocabulary that breaks
one named behavior. Fault builds supply ground-truth labels for validating
harness verdicts.

Normative semantics
-------------------
collider  10x10 grid. ``move(dir)`` shifts the player one cell; moves off
          the grid or after game over are rejected. Entering a cell holding
          an obstacle emits ``collision`` and applies hp -25 (-10 under
          ``weak_decrement``, -0 under ``no_hp_decrement``); hp <= 0 then
          sets ``phase=game_over`` and emits ``game_over`` unless
          ``no_game_over``.
ledger    ``collect(id)`` adds the item's value to the score (twice under
          ``double_add``) and removes the item (unless ``no_item_removal``);
          a collect that ends with score >= 100 advances the level and emits
          ``level_up`` (> 100 under ``strict_threshold``).
quest     ``defeat(target=boss)`` reduces boss hp by 10 only while
          ``boss_phase`` is true (always under ``gate_ignored``); boss hp
          reaching 0 emits ``quest_complete`` and sets the
          ``quest_complete`` flag (flag skipped under ``flag_not_set``).

Time is a bare tick counter: each action step advances ``step.ticks`` ticks
after the action applies, and the action's events carry the post-advance
tick. No template consumes the seed (state is seed-invariant in v1), but
the seed is recorded so stochastic templates can be added later.
"""

from __future__ import annotations

import copy
from typing import Any, Mapping, Sequence

from ..protocol import (
    ActionStep,
    PatchOp,
    Remove,
    RuntimeSchema,
    SetValue,
    Snapshot,
    Spawn,
    resolve_path,
    assign_path,
    value_matches_tag,
)

TEMPLATE_NAMES = ("collider", "ledger", "quest")

FAULT_VOCABULARY: dict[str, tuple[str, ...]] = {
    "collider": ("no_hp_decrement", "weak_decrement", "no_game_over"),
    "ledger": ("strict_threshold", "double_add", "no_item_removal"),
    "quest": ("gate_ignored", "flag_not_set"),
}

GRID_SIZE = 10
COLLISION_DAMAGE = 25
WEAK_COLLISION_DAMAGE = 10
LEVEL_THRESHOLD = 100
BOSS_DAMAGE = 10
BOSS_INITIAL_HP = 30

_DIRECTIONS = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}


def initial_state(template: str) -> dict:
    if template == "collider":
        return {"player": {"hp": 100, "pos": [0, 0]}, "phase": "playing", "obstacles": {}}
    if template == "ledger":
        return {"score": 0, "level": 1, "items": {}}
    if template == "quest":
        return {"boss": {"hp": BOSS_INITIAL_HP}, "boss_phase": False, "quest_complete": False}
    raise ValueError(f"unknown template: {template!r}")


def schema_for(template: str) -> RuntimeSchema:
    if template == "collider":
        schema = RuntimeSchema(
            state_paths={"player.hp": "number", "player.pos": "point", "phase": "string"},
            actions={"move": {"dir": "string"}},
            entity_types={"obstacle": {"container": "obstacles", "props": {"pos": "point"}}},
            events=["collision", "game_over"],
        )
    elif template == "ledger":
        schema = RuntimeSchema(
            state_paths={"score": "number", "level": "number"},
            actions={"collect": {"id": "string"}},
            entity_types={"item": {"container": "items", "props": {"value": "number"}}},
            events=["level_up"],
        )
    elif template == "quest":
        schema = RuntimeSchema(
            state_paths={"boss.hp": "number", "boss_phase": "bool", "quest_complete": "bool"},
            actions={"defeat": {"target": "string"}},
            entity_types={},
            events=["quest_complete"],
        )
    else:
        raise ValueError(f"unknown template: {template!r}")
    schema.validate()
    return schema


def validate_faults(template: str, faults: Sequence[str]) -> frozenset[str]:
    vocabulary = FAULT_VOCABULARY[template]
    unknown = [f for f in faults if f and f not in vocabulary]
    if unknown:
        raise ValueError(f"unknown fault flag(s) for {template}: {', '.join(unknown)}")
    return frozenset(f for f in faults if f)


class Engine:
    """One live game session: mutable state plus tick-stamped event log.

    ``tainted`` is the ambient-hazard perturbation used by isolation tests:
    a tainted session plays with corrupted tuning constants, so any leakage
    of taint between sessions is visible as flipped verdicts.
    """

    def __init__(self, template: str, faults: Sequence[str] = (), seed: int = 0,
                 tainted: bool = False):
        if template not in TEMPLATE_NAMES:
            raise ValueError(f"unknown template: {template!r}")
        self.template = template
        self.faults = validate_faults(template, faults)
        self.seed = seed
        self.tainted = tainted
        self.tick = 0
        self.state = initial_state(template)
        self.schema = schema_for(template)
        self.event_log: list[dict] = []
        self._used_entity_ids: set[str] = set()

    # -- snapshots ------------------------------------------------------

    def snapshot(self) -> Snapshot:
        return Snapshot(self.tick, copy.deepcopy(self.state))

    def events_since(self, since: int = 0) -> list[dict]:
        return [copy.deepcopy(e) for e in self.event_log if e["tick"] >= since]

    # -- patching ---------------------------------------------------------

    def apply_patch(self, ops: Sequence[PatchOp]) -> tuple[list[dict], bool]:
        """All-or-nothing: on any failure the pre-patch state is restored."""
        saved_state = copy.deepcopy(self.state)
        saved_ids = set(self._used_entity_ids)
        results: list[dict] = []
        failed = False
        for op in ops:
            if failed:
                results.append({"ok": False, "error": {"code": "not-attempted",
                                                       "message": "earlier op failed"}})
                continue
            error = self._apply_one(op)
            if error is None:
                results.append({"ok": True})
            else:
                results.append({"ok": False, "error": error})
                failed = True
        if failed:
            self.state = saved_state
            self._used_entity_ids = saved_ids
        return results, failed

    def _apply_one(self, op: PatchOp) -> dict | None:
        if isinstance(op, SetValue):
            return self._apply_set(op)
        if isinstance(op, Spawn):
            return self._apply_spawn(op)
        if isinstance(op, Remove):
            return self._apply_remove(op)
        return {"code": "bad-request", "message": f"unknown op {op!r}"}

    def _apply_set(self, op: SetValue) -> dict | None:
        tag = self.schema.path_type(op.path)
        if tag is None:
            return {"code": "unknown-path", "message": op.path}
        if not resolve_path(self.state, op.path)[0]:
            return {"code": "unknown-path", "message": f"{op.path} not present"}
        if not value_matches_tag(op.value, tag):
            return {"code": "type-mismatch",
                    "message": f"{op.path} expects {tag}, got {op.value!r}"}
        assign_path(self.state, op.path, copy.deepcopy(op.value))
        return None

    def _apply_spawn(self, op: Spawn) -> dict | None:
        decl = self.schema.entity_types.get(op.entity_type)
        if decl is None:
            return {"code": "unknown-entity-type", "message": op.entity_type}
        if op.entity_id in self._used_entity_ids:
            return {"code": "duplicate-entity-id", "message": op.entity_id}
        props = dict(op.props)
        declared = decl["props"]
        if set(props) != set(declared):
            return {"code": "type-mismatch",
                    "message": f"{op.entity_type} props must be exactly {sorted(declared)}"}
        for name, tag in declared.items():
            if not value_matches_tag(props[name], tag):
                return {"code": "type-mismatch",
                        "message": f"prop {name} expects {tag}, got {props[name]!r}"}
        if op.parent is not None and op.parent not in self._used_entity_ids:
            return {"code": "unknown-path", "message": f"parent {op.parent} not present"}
        self.state[decl["container"]][op.entity_id] = copy.deepcopy(props)
        self._used_entity_ids.add(op.entity_id)
        return None

    def _apply_remove(self, op: Remove) -> dict | None:
        for decl in self.schema.entity_types.values():
            container = self.state[decl["container"]]
            if op.entity_id in container:
                del container[op.entity_id]
                return None
        return {"code": "unknown-path", "message": f"entity {op.entity_id} not present"}

    # -- interaction --------------------------------------------------------

    def act(self, steps: Sequence[ActionStep]) -> tuple[list[dict], list[dict], list[str]]:
        trace: list[dict] = []
        new_events: list[dict] = []
        logs: list[str] = []
        for index, step in enumerate(steps):
            accepted, events, log = self._act_one(step.action, step.params)
            self.tick += max(1, int(step.ticks))
            for event in events:
                stamped = {"tick": self.tick, "type": event[0], "data": event[1]}
                self.event_log.append(stamped)
                new_events.append(copy.deepcopy(stamped))
            if log:
                logs.append(log)
            trace.append({"step": index, "accepted": accepted})
        return trace, new_events, logs

    def _act_one(self, action: str, params: Mapping[str, Any]):
        handler = {"collider": self._act_collider, "ledger": self._act_ledger,
                   "quest": self._act_quest}[self.template]
        return handler(action, params)

    def _act_collider(self, action, params):
        if action != "move":
            return False, [], f"rejected {action}: unknown action"
        direction = params.get("dir")
        if direction not in _DIRECTIONS:
            return False, [], f"rejected move: bad direction {direction!r}"
        if self.state["phase"] == "game_over":
            return False, [], "rejected move: game over"
        dx, dy = _DIRECTIONS[direction]
        x, y = self.state["player"]["pos"]
        nx, ny = x + dx, y + dy
        if not (0 <= nx < GRID_SIZE and 0 <= ny < GRID_SIZE):
            return False, [], "rejected move: out of bounds"
        self.state["player"]["pos"] = [nx, ny]
        events = []
        occupied = any(ob["pos"] == [nx, ny] for ob in self.state["obstacles"].values())
        if occupied:
            events.append(("collision", {"at": [nx, ny]}))
            damage = COLLISION_DAMAGE
            if "weak_decrement" in self.faults:
                damage = WEAK_COLLISION_DAMAGE
            if "no_hp_decrement" in self.faults:
                damage = 0
            if self.tainted:
                damage = 1
            self.state["player"]["hp"] -= damage
            if self.state["player"]["hp"] <= 0 and "no_game_over" not in self.faults:
                self.state["phase"] = "game_over"
                events.append(("game_over", {}))
        return True, events, None

    def _act_ledger(self, action, params):
        if action != "collect":
            return False, [], f"rejected {action}: unknown action"
        item_id = params.get("id")
        item = self.state["items"].get(item_id) if isinstance(item_id, str) else None
        if item is None:
            return False, [], f"rejected collect: unknown item {item_id!r}"
        gain = item["value"] * (2 if "double_add" in self.faults else 1)
        self.state["score"] += gain
        if "no_item_removal" not in self.faults:
            del self.state["items"][item_id]
        threshold = 1 if self.tainted else LEVEL_THRESHOLD
        score = self.state["score"]
        reached = score > threshold if "strict_threshold" in self.faults else score >= threshold
        events = []
        if reached:
            self.state["level"] += 1
            events.append(("level_up", {"level": self.state["level"]}))
        return True, events, None

    def _act_quest(self, action, params):
        if action != "defeat":
            return False, [], f"rejected {action}: unknown action"
        target = params.get("target")
        if target != "boss":
            return False, [], f"rejected defeat: unknown target {target!r}"
        boss = self.state["boss"]
        if boss["hp"] <= 0:
            return True, [], None  # already down; swing is a no-op
        gate_open = self.state["boss_phase"] or "gate_ignored" in self.faults
        events = []
        if gate_open:
            damage = 1 if self.tainted else BOSS_DAMAGE
            boss["hp"] = max(0, boss["hp"] - damage)
            if boss["hp"] == 0:
                events.append(("quest_complete", {}))
                if "flag_not_set" not in self.faults:
                    self.state["quest_complete"] = True
        return True, events, None
