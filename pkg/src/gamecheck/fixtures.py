"""Mutation corpus: fixture games with analytically known verdicts.

Each template ships a small requirement DAG, keypoints, and grounded units;
each build pairs a template with a fault set whose expected labels are
derived from the pure reference simulation. Running the harness over all
builds and comparing against these labels is the end-to-end correctness
check for the whole pipeline.

Generation is deterministic: rerunning into the same directory produces
byte-identical files.
"""

from __future__ import annotations

import json
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path

from . import scoring
from .judge import evaluate, parse_assertion
from .model import Keypoint, Specification, UnitVerdict, load_specification, load_units
from .protocol import Evidence
from .toyruntime.oracle import oracle_simulate

# ---------------------------------------------------------------------------
# authored fixture content (wire form)

_SPECS = {
    "collider": {
        "game_id": "collider",
        "elements": [
            {"id": "col-move", "category": "controls", "depends_on": [],
             "text": "The player moves exactly one grid cell per move command and "
                     "cannot leave the 10x10 grid."},
            {"id": "col-collision", "category": "physics", "depends_on": ["col-move"],
             "text": "Entering a cell occupied by an obstacle registers a collision."},
            {"id": "col-damage", "category": "scoring", "depends_on": ["col-collision"],
             "text": "Each collision reduces player hp by exactly 25."},
            {"id": "col-game-over", "category": "failure_condition",
             "depends_on": ["col-damage"],
             "text": "When hp reaches 0 the run ends in the game_over phase."},
            {"id": "col-freeze", "category": "state_transition",
             "depends_on": ["col-game-over"],
             "text": "After game over, movement commands are ignored."},
            {"id": "col-hud", "category": "ui", "depends_on": ["col-game-over"],
             "text": "The phase indicator reflects the current run state."},
        ],
    },
    "ledger": {
        "game_id": "ledger",
        "elements": [
            {"id": "led-collect", "category": "scoring", "depends_on": [],
             "text": "Collecting an item adds exactly the item's value to the score."},
            {"id": "led-consume", "category": "rules", "depends_on": ["led-collect"],
             "text": "A collected item is removed and cannot be collected again."},
            {"id": "led-threshold", "category": "progression", "depends_on": ["led-collect"],
             "text": "Reaching a score of 100 advances the level."},
            {"id": "led-announce", "category": "ui", "depends_on": ["led-threshold"],
             "text": "A level_up event announces each level advance."},
        ],
    },
    "quest": {
        "game_id": "quest",
        "elements": [
            {"id": "qst-gate", "category": "rules", "depends_on": [],
             "text": "The boss cannot take damage before the boss phase begins."},
            {"id": "qst-damage", "category": "physics", "depends_on": ["qst-gate"],
             "text": "Each defeat command in the boss phase removes 10 boss hp."},
            {"id": "qst-complete", "category": "state_transition",
             "depends_on": ["qst-damage"],
             "text": "Reducing the boss to 0 hp marks the quest complete."},
            {"id": "qst-banner", "category": "ui", "depends_on": ["qst-complete"],
             "text": "A quest_complete event announces the completed quest."},
        ],
    },
}

_KEYPOINTS = {
    "collider": [
        {"id": "kp-col-move", "element_id": "col-move",
         "precondition": "the player stands on an empty interior cell",
         "interaction": "issue move commands away from any obstacle",
         "postcondition": "the player position advances one cell per command and hp "
                          "is unchanged"},
        {"id": "kp-col-wall", "element_id": "col-move",
         "precondition": "the player stands on the rightmost column",
         "interaction": "move right once",
         "postcondition": "the move is ignored and the player stays in place"},
        {"id": "kp-col-collision", "element_id": "col-collision",
         "precondition": "an obstacle sits in the cell directly right of the player",
         "interaction": "move right once",
         "postcondition": "exactly one collision event is emitted"},
        {"id": "kp-col-damage", "element_id": "col-damage",
         "precondition": "the player has known hp and an obstacle sits on the target cell",
         "interaction": "move onto the obstacle",
         "postcondition": "hp drops by exactly 25 per collision"},
        {"id": "kp-col-game-over", "element_id": "col-game-over",
         "precondition": "the player has 25 hp and an obstacle sits on the target cell",
         "interaction": "move onto the obstacle",
         "postcondition": "hp reaches 0, the phase becomes game_over, and a game_over "
                          "event is emitted"},
        {"id": "kp-col-freeze", "element_id": "col-freeze",
         "precondition": "the phase is game_over",
         "interaction": "move right once",
         "postcondition": "the player does not move and the phase stays game_over"},
        {"id": "kp-col-hud", "element_id": "col-hud",
         "precondition": "a freshly launched game",
         "interaction": "observe without acting",
         "postcondition": "the phase reads playing and hp reads 100"},
    ],
    "ledger": [
        {"id": "kp-led-collect", "element_id": "led-collect",
         "precondition": "an item with a known value exists",
         "interaction": "collect the item",
         "postcondition": "the score increases by exactly the item value"},
        {"id": "kp-led-reject", "element_id": "led-collect",
         "precondition": "only item i1 exists",
         "interaction": "collect an id that does not exist",
         "postcondition": "the score is unchanged and i1 is still present"},
        {"id": "kp-led-consume", "element_id": "led-consume",
         "precondition": "a single item with value 5 exists",
         "interaction": "collect the same item twice",
         "postcondition": "only the first collect counts and the item is gone"},
        {"id": "kp-led-threshold", "element_id": "led-threshold",
         "precondition": "the score is just below 100 and a topping-up item exists",
         "interaction": "collect the item",
         "postcondition": "a score of at least 100 advances the level and emits level_up"},
        {"id": "kp-led-announce", "element_id": "led-announce",
         "precondition": "the score is 99 and two items worth 1 and 100 exist",
         "interaction": "collect both items",
         "postcondition": "each qualifying collect emits a level_up event"},
    ],
    "quest": [
        {"id": "kp-qst-gate", "element_id": "qst-gate",
         "precondition": "the boss phase has not started and the boss has 30 hp",
         "interaction": "attack the boss",
         "postcondition": "boss hp is unchanged"},
        {"id": "kp-qst-damage", "element_id": "qst-damage",
         "precondition": "the boss phase is active",
         "interaction": "attack the boss",
         "postcondition": "each attack removes exactly 10 boss hp and the quest is "
                          "not complete early"},
        {"id": "kp-qst-complete", "element_id": "qst-complete",
         "precondition": "the boss phase is active and the boss is within one hit of 0",
         "interaction": "attack the boss once",
         "postcondition": "boss hp reaches 0, the quest_complete flag is set, and a "
                          "quest_complete event is emitted"},
        {"id": "kp-qst-banner", "element_id": "qst-banner",
         "precondition": "the boss phase is active and the boss has 10 hp",
         "interaction": "attack twice",
         "postcondition": "exactly one quest_complete event is emitted"},
    ],
}


def _set(path, value):
    return {"op": "set", "path": path, "value": value}


def _spawn(entity_type, entity_id, props):
    return {"op": "spawn", "entity_type": entity_type, "id": entity_id, "props": props}


def _move(direction):
    return {"action": "move", "params": {"dir": direction}, "ticks": 1}


def _collect(item_id):
    return {"action": "collect", "params": {"id": item_id}, "ticks": 1}


def _defeat():
    return {"action": "defeat", "params": {"target": "boss"}, "ticks": 1}


_BUDGET = {"max_actions": 8, "max_ticks": 64, "timeout_ms": 10000}

_UNITS = {
    "collider": [
        {"id": "u-col-move-1", "keypoint_id": "kp-col-move",
         "patch": [_set("player.pos", [4, 4])],
         "interaction": [_move("right")],
         "expectation": "all(eq(post.player.pos.0, 5), eq(post.player.pos.1, 4))",
         "budget": _BUDGET},
        {"id": "u-col-move-2", "keypoint_id": "kp-col-move",
         "patch": [_set("player.pos", [3, 3]), _set("player.hp", 80)],
         "interaction": [_move("down"), _move("left")],
         "expectation": "all(eq(post.player.pos.0, 2), eq(post.player.pos.1, 4), "
                        "eq(post.player.hp, pre.player.hp))",
         "budget": _BUDGET},
        {"id": "u-col-wall", "keypoint_id": "kp-col-wall",
         "patch": [_set("player.pos", [9, 4])],
         "interaction": [_move("right")],
         "expectation": "all(eq(post.player.pos.0, 9), eq(post.player.pos.1, 4))",
         "budget": _BUDGET},
        {"id": "u-col-collision", "keypoint_id": "kp-col-collision",
         "patch": [_spawn("obstacle", "o1", {"pos": [5, 4]}), _set("player.pos", [4, 4])],
         "interaction": [_move("right")],
         "expectation": 'all(event("collision"), event_count("collision") eq 1)',
         "budget": _BUDGET},
        {"id": "u-col-damage-a", "keypoint_id": "kp-col-damage",
         "patch": [_set("player.hp", 100), _set("player.pos", [4, 4]),
                   _spawn("obstacle", "o1", {"pos": [5, 4]})],
         "interaction": [_move("right")],
         "expectation": "all(eq(delta(player.hp), -25), eq(post.player.hp, 75))",
         "budget": _BUDGET},
        {"id": "u-col-damage-b", "keypoint_id": "kp-col-damage",
         "patch": [_set("player.hp", 60), _set("player.pos", [2, 7]),
                   _spawn("obstacle", "o1", {"pos": [2, 6]})],
         "interaction": [_move("up")],
         "expectation": "all(eq(delta(player.hp), -25), eq(post.player.hp, 35))",
         "budget": _BUDGET},
        {"id": "u-col-damage-c", "keypoint_id": "kp-col-damage",
         "patch": [_set("player.hp", 100), _set("player.pos", [0, 0]),
                   _spawn("obstacle", "o1", {"pos": [1, 0]}),
                   _spawn("obstacle", "o2", {"pos": [2, 0]})],
         "interaction": [_move("right"), _move("right")],
         "expectation": 'all(eq(post.player.hp, 50), event_count("collision") eq 2)',
         "budget": _BUDGET},
        {"id": "u-col-game-over", "keypoint_id": "kp-col-game-over",
         "patch": [_set("player.hp", 25), _set("player.pos", [4, 4]),
                   _spawn("obstacle", "o1", {"pos": [5, 4]})],
         "interaction": [_move("right")],
         "expectation": 'all(eq(post.player.hp, 0), eq(post.phase, "game_over"), '
                        'event("game_over"))',
         "budget": _BUDGET},
        {"id": "u-col-freeze", "keypoint_id": "kp-col-freeze",
         "patch": [_set("phase", "game_over"), _set("player.pos", [4, 4])],
         "interaction": [_move("right")],
         "expectation": "all(eq(post.player.pos.0, 4), eq(post.player.pos.1, 4), "
                        'eq(post.phase, "game_over"))',
         "budget": _BUDGET},
        {"id": "u-col-hud", "keypoint_id": "kp-col-hud",
         "patch": [], "initial_state": True,
         "interaction": [],
         "expectation": 'all(eq(post.phase, "playing"), exists(post.player.hp), '
                        "eq(post.player.hp, 100))",
         "budget": _BUDGET},
    ],
    "ledger": [
        {"id": "u-led-collect-a", "keypoint_id": "kp-led-collect",
         "patch": [_spawn("item", "i1", {"value": 10})],
         "interaction": [_collect("i1")],
         "expectation": "all(eq(delta(score), 10), eq(post.score, 10))",
         "budget": _BUDGET},
        {"id": "u-led-collect-b", "keypoint_id": "kp-led-collect",
         "patch": [_spawn("item", "i1", {"value": 37}), _set("score", 5)],
         "interaction": [_collect("i1")],
         "expectation": "eq(post.score, 42)",
         "budget": _BUDGET},
        {"id": "u-led-reject", "keypoint_id": "kp-led-reject",
         "patch": [_spawn("item", "i1", {"value": 10})],
         "interaction": [_collect("nope")],
         "expectation": "all(eq(delta(score), 0), exists(post.items.i1))",
         "budget": _BUDGET},
        {"id": "u-led-consume", "keypoint_id": "kp-led-consume",
         "patch": [_spawn("item", "i1", {"value": 5})],
         "interaction": [_collect("i1"), _collect("i1")],
         "expectation": "all(eq(post.score, 5), not(exists(post.items.i1)))",
         "budget": _BUDGET},
        {"id": "u-led-threshold-exact", "keypoint_id": "kp-led-threshold",
         "patch": [_set("score", 95), _spawn("item", "i1", {"value": 5})],
         "interaction": [_collect("i1")],
         "expectation": 'all(eq(post.score, 100), eq(post.level, 2), event("level_up"))',
         "budget": _BUDGET},
        {"id": "u-led-threshold-above", "keypoint_id": "kp-led-threshold",
         "patch": [_set("score", 95), _spawn("item", "i1", {"value": 10})],
         "interaction": [_collect("i1")],
         "expectation": 'all(eq(post.score, 105), eq(delta(level), 1), event("level_up"))',
         "budget": _BUDGET},
        {"id": "u-led-announce", "keypoint_id": "kp-led-announce",
         "patch": [_set("score", 99), _spawn("item", "i1", {"value": 1}),
                   _spawn("item", "i2", {"value": 100})],
         "interaction": [_collect("i1"), _collect("i2")],
         "expectation": 'all(event("level_up"), event_count("level_up") ge 2)',
         "budget": _BUDGET},
    ],
    "quest": [
        {"id": "u-qst-gate", "keypoint_id": "kp-qst-gate",
         "patch": [_set("boss_phase", False), _set("boss.hp", 30)],
         "interaction": [_defeat()],
         "expectation": "all(eq(delta(boss.hp), 0), eq(post.boss.hp, 30))",
         "budget": _BUDGET},
        {"id": "u-qst-damage-a", "keypoint_id": "kp-qst-damage",
         "patch": [_set("boss_phase", True)],
         "interaction": [_defeat()],
         "expectation": "eq(delta(boss.hp), -10)",
         "budget": _BUDGET},
        {"id": "u-qst-damage-b", "keypoint_id": "kp-qst-damage",
         "patch": [_set("boss_phase", True), _set("boss.hp", 25)],
         "interaction": [_defeat(), _defeat()],
         "expectation": "all(eq(post.boss.hp, 5), ne(post.quest_complete, true))",
         "budget": _BUDGET},
        {"id": "u-qst-complete", "keypoint_id": "kp-qst-complete",
         "patch": [_set("boss_phase", True), _set("boss.hp", 10)],
         "interaction": [_defeat()],
         "expectation": "all(eq(post.boss.hp, 0), eq(post.quest_complete, true), "
                        'event("quest_complete"))',
         "budget": _BUDGET},
        {"id": "u-qst-overkill", "keypoint_id": "kp-qst-complete",
         "patch": [_set("boss_phase", True), _set("boss.hp", 5)],
         "interaction": [_defeat()],
         "expectation": "all(eq(post.boss.hp, 0), eq(post.quest_complete, true), "
                        'event("quest_complete"))',
         "budget": _BUDGET},
        {"id": "u-qst-banner", "keypoint_id": "kp-qst-banner",
         "patch": [_set("boss_phase", True), _set("boss.hp", 10)],
         "interaction": [_defeat(), _defeat()],
         "expectation": 'all(event("quest_complete"), event_count("quest_complete") eq 1)',
         "budget": _BUDGET},
    ],
}


# ---------------------------------------------------------------------------
# build matrix

@dataclass(frozen=True)
class BuildSpec:
    build_id: str
    template: str
    faults: tuple[str, ...]

    def runtime_cmd(self) -> str:
        cmd = f"toy-runtime --template {self.template}"
        if self.faults:
            cmd += f" --faults {','.join(self.faults)}"
        return cmd

    def runtime_argv(self) -> list[str]:
        """An argv that works without console scripts on PATH."""
        argv = [sys.executable, "-m", "gamecheck.toyruntime.server",
                "--template", self.template]
        if self.faults:
            argv += ["--faults", ",".join(self.faults)]
        return argv

    def to_json(self) -> dict:
        return {
            "build_id": self.build_id,
            "template": self.template,
            "faults": list(self.faults),
            "game_id": self.template,
            "runtime_cmd": self.runtime_cmd(),
            "spec": f"{self.template}.spec.json",
            "keypoints": f"{self.template}.keypoints.json",
            "units": f"{self.template}.units.json",
            "truth": f"truth/{self.build_id}.json",
        }


def build_matrix(template: str | None = None) -> list[BuildSpec]:
    """The 12-build corpus: every single-fault build per template plus one
    correct build each, plus one double-fault quest build."""
    builds = [
        BuildSpec("collider-correct", "collider", ()),
        BuildSpec("collider-no_hp_decrement", "collider", ("no_hp_decrement",)),
        BuildSpec("collider-weak_decrement", "collider", ("weak_decrement",)),
        BuildSpec("collider-no_game_over", "collider", ("no_game_over",)),
        BuildSpec("ledger-correct", "ledger", ()),
        BuildSpec("ledger-strict_threshold", "ledger", ("strict_threshold",)),
        BuildSpec("ledger-double_add", "ledger", ("double_add",)),
        BuildSpec("ledger-no_item_removal", "ledger", ("no_item_removal",)),
        BuildSpec("quest-correct", "quest", ()),
        BuildSpec("quest-gate_ignored", "quest", ("gate_ignored",)),
        BuildSpec("quest-flag_not_set", "quest", ("flag_not_set",)),
        BuildSpec("quest-gate_ignored+flag_not_set", "quest",
                  ("gate_ignored", "flag_not_set")),
    ]
    if template is not None:
        builds = [b for b in builds if b.template == template]
    return builds


def fixture_specification(template: str) -> Specification:
    return load_specification(_SPECS[template])


def fixture_keypoints(template: str) -> list[Keypoint]:
    return [Keypoint(k["id"], k["element_id"], k["precondition"], k["interaction"],
                     k["postcondition"]) for k in _KEYPOINTS[template]]


def fixture_units(template: str):
    return load_units(_UNITS[template])


# ---------------------------------------------------------------------------
# analytic ground truth

def expected_unit_verdict(build: BuildSpec, unit_doc: dict) -> UnitVerdict:
    """What a correct harness must conclude for one unit on one build,
    derived from the reference simulation alone."""
    pre, _ = oracle_simulate(build.template, build.faults, unit_doc["patch"], [])
    post, events = oracle_simulate(build.template, build.faults,
                                   unit_doc["patch"], unit_doc["interaction"])
    evidence = Evidence(pre, post, events, [], [], status="completed")
    holds = evaluate(parse_assertion(unit_doc["expectation"]), evidence).holds
    return UnitVerdict("pass") if holds else UnitVerdict("fail", "outcome_mismatch")


def ground_truth(build: BuildSpec) -> dict:
    spec = fixture_specification(build.template)
    keypoints = fixture_keypoints(build.template)
    unit_verdicts: dict[str, UnitVerdict] = {}
    by_keypoint: dict[str, list[UnitVerdict]] = {}
    for unit_doc in _UNITS[build.template]:
        verdict = expected_unit_verdict(build, unit_doc)
        unit_verdicts[unit_doc["id"]] = verdict
        by_keypoint.setdefault(unit_doc["keypoint_id"], []).append(verdict)
    kp_verdicts, labels, _ = scoring.aggregate_run(spec, keypoints, by_keypoint)
    return {
        "build_id": build.build_id,
        "template": build.template,
        "faults": list(build.faults),
        "unit_verdicts": {uid: v.to_json() for uid, v in sorted(unit_verdicts.items())},
        "keypoint_verdicts": dict(sorted(kp_verdicts.items())),
        "element_labels": [labels[eid].to_json() for eid in sorted(labels)],
    }


# ---------------------------------------------------------------------------
# corpus generation

def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def generate_corpus(out_dir: str | Path, template: str | None = None) -> list[Path]:
    """Write spec/keypoint/unit files, per-build configs, and ground-truth
    label files. Returns the written paths."""
    out = Path(out_dir)
    builds = build_matrix(template)
    templates = sorted({b.template for b in builds})
    (out / "builds").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for name in templates:
        fixture_specification(name)  # authoring sanity: must load cleanly
        for suffix, doc in (("spec", _SPECS[name]), ("keypoints", _KEYPOINTS[name]),
                            ("units", _UNITS[name])):
            path = out / f"{name}.{suffix}.json"
            _dump(path, doc)
            written.append(path)

    for build in builds:
        config_path = out / "builds" / f"{build.build_id}.json"
        _dump(config_path, build.to_json())
        written.append(config_path)
        truth_path = out / "truth" / f"{build.build_id}.json"
        _dump(truth_path, ground_truth(build))
        written.append(truth_path)

    manifest = out / "corpus.json"
    _dump(manifest, {
        "templates": templates,
        "builds": [b.build_id for b in builds],
        "files": sorted(str(p.relative_to(out)) for p in written),
    })
    written.append(manifest)
    return written


def parse_runtime_cmd(cmd: str) -> list[str]:
    return shlex.split(cmd)
