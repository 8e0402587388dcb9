import pytest
from hypothesis import given, settings, strategies as st

from gamecheck.conformance import check_conformance, generate_cases
from gamecheck.jsonutil import canonical_dumps
from gamecheck.protocol import ActionStep, SetValue, Spawn
from gamecheck.toyruntime import (
    Engine,
    FAULT_VOCABULARY,
    LocalSession,
    OracleError,
    oracle_simulate,
)
from gamecheck.toyruntime.templates import validate_faults

from conftest import subprocess_runtime


def served_outcome(template, faults, patch_wire, steps_wire, seed=0):
    """(post snapshot, events) as observed over the wire."""
    runtime = subprocess_runtime(template, faults)
    live = runtime.open(seed=seed, timeout=15)
    try:
        from gamecheck.protocol import patch_op_from_wire
        report = live.apply_patch([patch_op_from_wire(op) for op in patch_wire])
        assert report.ok, report.first_error()
        live.execute([ActionStep(s["action"], s.get("params", {}), s.get("ticks", 1))
                      for s in steps_wire])
        return live.snapshot(), live.events()
    finally:
        live.shutdown()


class TestServedSemantics:
    def test_lethal_collision_emits_collision_then_game_over(self):
        post, events = served_outcome(
            "collider", (),
            [{"op": "set", "path": "player.hp", "value": 25},
             {"op": "spawn", "entity_type": "obstacle", "id": "o1", "props": {"pos": [1, 0]}}],
            [{"action": "move", "params": {"dir": "right"}, "ticks": 1}],
        )
        assert post.get("player.hp") == 0
        assert [e["type"] for e in events] == ["collision", "game_over"]

    def test_no_game_over_fault_suppresses_transition(self):
        post, events = served_outcome(
            "collider", ("no_game_over",),
            [{"op": "set", "path": "player.hp", "value": 25},
             {"op": "spawn", "entity_type": "obstacle", "id": "o1", "props": {"pos": [1, 0]}}],
            [{"action": "move", "params": {"dir": "right"}, "ticks": 1}],
        )
        assert post.get("player.hp") == 0
        assert [e["type"] for e in events] == ["collision"]
        assert post.get("phase") == "playing"

    def test_ledger_threshold_level_up(self):
        post, events = served_outcome(
            "ledger", (),
            [{"op": "set", "path": "score", "value": 95},
             {"op": "spawn", "entity_type": "item", "id": "i1", "props": {"value": 10}}],
            [{"action": "collect", "params": {"id": "i1"}, "ticks": 1}],
        )
        assert post.get("score") == 105
        assert [e["type"] for e in events] == ["level_up"]
        assert post.get("level") == 2


class TestOracle:
    def test_identity(self):
        snap, events = oracle_simulate("collider", (), [], [])
        assert snap.tick == 0
        assert events == []
        assert snap.state == {"player": {"hp": 100, "pos": [0, 0]}, "phase": "playing",
                              "obstacles": {}}

    def test_gate_ignored_damages_despite_closed_gate(self):
        snap, _ = oracle_simulate(
            "quest", ("gate_ignored",),
            [{"op": "set", "path": "boss_phase", "value": False}],
            [{"action": "defeat", "params": {"target": "boss"}, "ticks": 1}],
        )
        assert snap.get("boss.hp") == 20

    def test_strict_threshold_blocks_exact_100(self):
        snap, events = oracle_simulate(
            "ledger", ("strict_threshold",),
            [{"op": "set", "path": "score", "value": 100}],
            [],
        )
        assert events == []
        assert snap.get("level") == 1

    def test_oracle_validates_like_the_runtime(self):
        with pytest.raises(OracleError) as exc:
            oracle_simulate("collider", (), [{"op": "set", "path": "ghost", "value": 1}], [])
        assert exc.value.code == "unknown-path"
        with pytest.raises(OracleError) as exc:
            oracle_simulate("collider", (),
                            [{"op": "set", "path": "player.hp", "value": "x"}], [])
        assert exc.value.code == "type-mismatch"

    def test_flag_not_set_emits_event_without_flag(self):
        snap, events = oracle_simulate(
            "quest", ("flag_not_set",),
            [{"op": "set", "path": "boss_phase", "value": True},
             {"op": "set", "path": "boss.hp", "value": 10}],
            [{"action": "defeat", "params": {"target": "boss"}, "ticks": 1}],
        )
        assert [e["type"] for e in events] == ["quest_complete"]
        assert snap.get("quest_complete") is False


class TestServeMatchesOracle:
    @pytest.mark.parametrize("template", ["collider", "ledger", "quest"])
    def test_randomized_agreement_per_template(self, template):
        cases = generate_cases(template, 40, seed=5)
        fault_sets = [(), *((f,) for f in FAULT_VOCABULARY[template])]
        for faults in fault_sets:
            mismatches = check_conformance(
                lambda: LocalSession(template, faults), template, faults, cases)
            assert mismatches == [], mismatches[0]

    def test_agreement_over_the_wire(self):
        cases = generate_cases("collider", 15, seed=9)
        runtime = subprocess_runtime("collider", ("weak_decrement",))
        mismatches = check_conformance(lambda: runtime.open(seed=0, timeout=15),
                                       "collider", ("weak_decrement",), cases)
        assert mismatches == []


class TestSeedInvariance:
    @given(st.integers(min_value=0, max_value=2 ** 63), st.integers(min_value=0, max_value=2 ** 63))
    @settings(max_examples=25, deadline=None)
    def test_v1_templates_are_seed_invariant(self, seed_a, seed_b):
        outs = []
        for seed in (seed_a, seed_b):
            engine = Engine("collider", (), seed=seed)
            engine.apply_patch([Spawn("obstacle", "o1", {"pos": [1, 0]}),
                                SetValue("player.hp", 40)])
            engine.act([ActionStep("move", {"dir": "right"})])
            outs.append(canonical_dumps(engine.snapshot().to_wire()))
        assert outs[0] == outs[1]


class TestFaultFlags:
    def test_unknown_fault_rejected(self):
        with pytest.raises(ValueError):
            validate_faults("collider", ["strict_threshold"])  # ledger-only flag

    def test_cli_rejects_unknown_fault(self):
        import subprocess as sp
        import sys
        proc = sp.run([sys.executable, "-m", "gamecheck.toyruntime.server",
                       "--template", "collider", "--faults", "bogus"],
                      capture_output=True, text=True)
        assert proc.returncode == 2

    def test_tainted_engine_changes_collider_damage(self):
        engine = Engine("collider", (), tainted=True)
        engine.apply_patch([Spawn("obstacle", "o1", {"pos": [1, 0]})])
        engine.act([ActionStep("move", {"dir": "right"})])
        assert engine.snapshot().get("player.hp") == 99
