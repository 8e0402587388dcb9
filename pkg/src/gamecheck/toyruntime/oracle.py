"""Independent pure-function reference for the game templates.

This is a from-scratch re-implementation of the template semantics used to
derive expected values and to cross-check the served runtime. It shares no
code with :mod:`.templates` or the protocol layer on purpose: it has its own
path walking, its own validation tables, and its own transition functions.
Keep it that way; agreement between the two is the whole point.
"""

from __future__ import annotations

import copy
from typing import Any, Mapping, Sequence

from ..protocol import Snapshot


class OracleError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


_START = {
    "collider": {"player": {"hp": 100, "pos": [0, 0]}, "phase": "playing", "obstacles": {}},
    "ledger": {"score": 0, "level": 1, "items": {}},
    "quest": {"boss": {"hp": 30}, "boss_phase": False, "quest_complete": False},
}

# fixed paths -> type predicate name
_FIXED_PATHS = {
    "collider": {"player.hp": "num", "player.pos": "pt", "phase": "str"},
    "ledger": {"score": "num", "level": "num"},
    "quest": {"boss.hp": "num", "boss_phase": "bool", "quest_complete": "bool"},
}

# entity container -> (entity type name, {prop: predicate})
_CONTAINERS = {
    "collider": {"obstacles": ("obstacle", {"pos": "pt"})},
    "ledger": {"items": ("item", {"value": "num"})},
    "quest": {},
}

_KNOWN_FAULTS = {
    "collider": {"no_hp_decrement", "weak_decrement", "no_game_over"},
    "ledger": {"strict_threshold", "double_add", "no_item_removal"},
    "quest": {"gate_ignored", "flag_not_set"},
}


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _checks(kind: str, v: Any) -> bool:
    if kind == "num":
        return _is_num(v)
    if kind == "str":
        return isinstance(v, str)
    if kind == "bool":
        return isinstance(v, bool)
    if kind == "pt":
        return isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_num(c) for c in v)
    return False


def _walk(tree: Any, dotted: str):
    node = tree
    for part in dotted.split("."):
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        else:
            raise OracleError("unknown-path", dotted)
    return node


def _put(tree: Any, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = _walk(tree, ".".join(parts[:-1])) if len(parts) > 1 else tree
    last = parts[-1]
    if isinstance(node, dict) and last in node:
        node[last] = value
    elif isinstance(node, list) and last.isdigit() and int(last) < len(node):
        node[int(last)] = value
    else:
        raise OracleError("unknown-path", dotted)


def _path_kind(template: str, dotted: str) -> str:
    fixed = _FIXED_PATHS[template]
    if dotted in fixed:
        return fixed[dotted]
    parts = dotted.split(".")
    if len(parts) >= 3:
        container = parts[0]
        prop = ".".join(parts[2:])
        if container in _CONTAINERS[template]:
            props = _CONTAINERS[template][container][1]
            if prop in props:
                return props[prop]
    if len(parts) >= 2 and parts[-1] in ("0", "1"):
        if _path_kind(template, ".".join(parts[:-1])) == "pt":
            return "num"
    raise OracleError("unknown-path", dotted)


def _apply_patch(template: str, state: dict, ops: Sequence[Mapping[str, Any]],
                 used_ids: set[str]) -> None:
    for raw in ops:
        kind = raw.get("op")
        if kind == "set":
            path, value = raw["path"], raw["value"]
            want = _path_kind(template, path)
            _walk(state, path)  # must already exist
            if not _checks(want, value):
                raise OracleError("type-mismatch", path)
            _put(state, path, copy.deepcopy(value))
        elif kind == "spawn":
            etype, eid = raw["entity_type"], raw["id"]
            decl = None
            for container, (name, props) in _CONTAINERS[template].items():
                if name == etype:
                    decl = (container, props)
            if decl is None:
                raise OracleError("unknown-entity-type", etype)
            if eid in used_ids:
                raise OracleError("duplicate-entity-id", eid)
            props_in = dict(raw.get("props", {}))
            container, props = decl
            if set(props_in) != set(props):
                raise OracleError("type-mismatch", f"{etype} props")
            for pname, pkind in props.items():
                if not _checks(pkind, props_in[pname]):
                    raise OracleError("type-mismatch", f"{etype}.{pname}")
            parent = raw.get("parent")
            if parent is not None and parent not in used_ids:
                raise OracleError("unknown-path", f"parent {parent}")
            state[container][eid] = copy.deepcopy(props_in)
            used_ids.add(eid)
        elif kind == "remove":
            eid = raw["id"]
            for container in _CONTAINERS[template]:
                if eid in state[container]:
                    del state[container][eid]
                    break
            else:
                raise OracleError("unknown-path", f"entity {eid}")
        else:
            raise OracleError("bad-request", f"op {kind!r}")


def _collider_step(state: dict, faults: frozenset, action: str, params: Mapping) -> list:
    if action != "move" or params.get("dir") not in ("up", "down", "left", "right"):
        return []
    if state["phase"] == "game_over":
        return []
    dx, dy = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}[params["dir"]]
    x, y = state["player"]["pos"]
    tx, ty = x + dx, y + dy
    if tx < 0 or tx > 9 or ty < 0 or ty > 9:
        return []
    state["player"]["pos"] = [tx, ty]
    hit = [tx, ty] in [list(ob["pos"]) for ob in state["obstacles"].values()]
    if not hit:
        return []
    out = [("collision", {"at": [tx, ty]})]
    if "no_hp_decrement" in faults:
        loss = 0
    elif "weak_decrement" in faults:
        loss = 10
    else:
        loss = 25
    state["player"]["hp"] = state["player"]["hp"] - loss
    if state["player"]["hp"] <= 0 and "no_game_over" not in faults:
        state["phase"] = "game_over"
        out.append(("game_over", {}))
    return out


def _ledger_step(state: dict, faults: frozenset, action: str, params: Mapping) -> list:
    if action != "collect":
        return []
    key = params.get("id")
    if not isinstance(key, str) or key not in state["items"]:
        return []
    worth = state["items"][key]["value"]
    state["score"] = state["score"] + worth * (2 if "double_add" in faults else 1)
    if "no_item_removal" not in faults:
        state["items"].pop(key)
    if "strict_threshold" in faults:
        crossed = state["score"] > 100
    else:
        crossed = state["score"] >= 100
    if crossed:
        state["level"] = state["level"] + 1
        return [("level_up", {"level": state["level"]})]
    return []


def _quest_step(state: dict, faults: frozenset, action: str, params: Mapping) -> list:
    if action != "defeat" or params.get("target") != "boss":
        return []
    if state["boss"]["hp"] <= 0:
        return []
    if not (state["boss_phase"] or "gate_ignored" in faults):
        return []
    remaining = state["boss"]["hp"] - 10
    state["boss"]["hp"] = remaining if remaining > 0 else 0
    if state["boss"]["hp"] == 0:
        if "flag_not_set" not in faults:
            state["quest_complete"] = True
        return [("quest_complete", {})]
    return []


_STEPPERS = {"collider": _collider_step, "ledger": _ledger_step, "quest": _quest_step}


def oracle_simulate(template: str, faults: Sequence[str],
                    patch: Sequence[Mapping[str, Any]],
                    steps: Sequence[Mapping[str, Any]],
                    seed: int = 0) -> tuple[Snapshot, list[dict]]:
    """Reference outcome for (template, faults, patch, steps).

    ``patch`` and ``steps`` are wire-form dicts. Returns the final snapshot
    and the tick-stamped event list. The seed is accepted for signature
    parity; v1 templates are seed-invariant.
    """
    if template not in _START:
        raise OracleError("launch-failure", f"unknown template {template!r}")
    flagset = frozenset(f for f in faults if f)
    bad = flagset - _KNOWN_FAULTS[template]
    if bad:
        raise OracleError("bad-request", f"unknown faults {sorted(bad)}")
    state = copy.deepcopy(_START[template])
    _apply_patch(template, state, patch, used_ids=set())
    stepper = _STEPPERS[template]
    clock = 0
    events: list[dict] = []
    for raw in steps:
        emitted = stepper(state, flagset, raw["action"], raw.get("params", {}))
        clock += max(1, int(raw.get("ticks", 1)))
        for etype, data in emitted:
            events.append({"tick": clock, "type": etype, "data": data})
    return Snapshot(clock, state), events
