import json
from pathlib import Path

import pytest

from gamecheck import fixtures, model
from gamecheck.toyruntime import schema_for

from conftest import FIXTURES_DIR

# element labels per build, worked out by hand from the fault definitions;
# the generator must agree with this table exactly
HAND_LABELS = {
    "collider-correct": {"col-move": "pass", "col-collision": "pass", "col-damage": "pass",
                         "col-game-over": "pass", "col-freeze": "pass", "col-hud": "pass"},
    "collider-no_hp_decrement": {"col-move": "pass", "col-collision": "pass",
                                 "col-damage": "fail", "col-game-over": "fail",
                                 "col-freeze": "fail", "col-hud": "fail"},
    "collider-weak_decrement": {"col-move": "pass", "col-collision": "pass",
                                "col-damage": "fail", "col-game-over": "fail",
                                "col-freeze": "fail", "col-hud": "fail"},
    "collider-no_game_over": {"col-move": "pass", "col-collision": "pass",
                              "col-damage": "pass", "col-game-over": "fail",
                              "col-freeze": "fail", "col-hud": "fail"},
    "ledger-correct": {"led-collect": "pass", "led-consume": "pass",
                       "led-threshold": "pass", "led-announce": "pass"},
    "ledger-strict_threshold": {"led-collect": "pass", "led-consume": "pass",
                                "led-threshold": "fail", "led-announce": "fail"},
    "ledger-double_add": {"led-collect": "fail", "led-consume": "fail",
                          "led-threshold": "fail", "led-announce": "fail"},
    "ledger-no_item_removal": {"led-collect": "pass", "led-consume": "fail",
                               "led-threshold": "pass", "led-announce": "pass"},
    "quest-correct": {"qst-gate": "pass", "qst-damage": "pass",
                      "qst-complete": "pass", "qst-banner": "pass"},
    "quest-gate_ignored": {"qst-gate": "fail", "qst-damage": "fail",
                           "qst-complete": "fail", "qst-banner": "fail"},
    "quest-flag_not_set": {"qst-gate": "pass", "qst-damage": "pass",
                           "qst-complete": "fail", "qst-banner": "fail"},
    "quest-gate_ignored+flag_not_set": {"qst-gate": "fail", "qst-damage": "fail",
                                        "qst-complete": "fail", "qst-banner": "fail"},
}


class TestBuildMatrix:
    def test_twelve_builds(self):
        assert len(fixtures.build_matrix()) == 12

    def test_template_filter(self):
        assert len(fixtures.build_matrix("collider")) == 4
        assert len(fixtures.build_matrix("quest")) == 4

    def test_every_fault_flag_appears(self):
        seen = set()
        for build in fixtures.build_matrix():
            seen.update(build.faults)
        assert seen == {"no_hp_decrement", "weak_decrement", "no_game_over",
                        "strict_threshold", "double_add", "no_item_removal",
                        "gate_ignored", "flag_not_set"}


class TestGroundTruth:
    @pytest.mark.parametrize("build", fixtures.build_matrix(),
                             ids=lambda b: b.build_id)
    def test_matches_hand_worked_labels(self, build):
        truth = fixtures.ground_truth(build)
        got = {e["element_id"]: e["label"] for e in truth["element_labels"]}
        assert got == HAND_LABELS[build.build_id]

    def test_correct_builds_pass_every_unit(self):
        for build in fixtures.build_matrix():
            if build.faults:
                continue
            truth = fixtures.ground_truth(build)
            assert all(v["kind"] == "pass" for v in truth["unit_verdicts"].values())

    def test_every_fault_build_fails_something(self):
        for build in fixtures.build_matrix():
            if not build.faults:
                continue
            truth = fixtures.ground_truth(build)
            assert any(v["kind"] == "fail" for v in truth["unit_verdicts"].values()), \
                build.build_id


class TestFixtureHygiene:
    """The authored corpus must be loadable, valid, and lint-clean."""

    @pytest.mark.parametrize("template", ["collider", "ledger", "quest"])
    def test_units_validate_and_lint_clean(self, template):
        spec = fixtures.fixture_specification(template)
        keypoints = fixtures.fixture_keypoints(template)
        units = fixtures.fixture_units(template)
        schema = schema_for(template)
        policy = model.BudgetPolicy()
        for kp in keypoints:
            assert not model.has_errors(model.validate_keypoint(kp, spec, policy)), kp
        for unit in units:
            assert model.validate_unit(unit, keypoints, policy) == [], unit.unit_id
            assert not model.has_errors(model.lint_unit(unit, schema)), unit.unit_id

    @pytest.mark.parametrize("template", ["collider", "ledger", "quest"])
    def test_every_element_is_covered(self, template):
        spec = fixtures.fixture_specification(template)
        keypoints = fixtures.fixture_keypoints(template)
        units = fixtures.fixture_units(template)
        kp_with_units = {u.keypoint_id for u in units}
        covered = {kp.element_id for kp in keypoints if kp.keypoint_id in kp_with_units}
        assert covered == set(spec.element_ids())


class TestGeneration:
    def test_rerun_is_byte_identical(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        fixtures.generate_corpus(first)
        fixtures.generate_corpus(second)
        files_a = sorted(p.relative_to(first) for p in first.rglob("*.json"))
        files_b = sorted(p.relative_to(second) for p in second.rglob("*.json"))
        assert files_a == files_b
        for rel in files_a:
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel

    def test_single_template_subset(self, tmp_path):
        fixtures.generate_corpus(tmp_path, "collider")
        manifest = json.loads((tmp_path / "corpus.json").read_text())
        assert len(manifest["builds"]) == 4
        assert all(b.startswith("collider") for b in manifest["builds"])

    def test_committed_corpus_is_current(self):
        """The fixtures/ directory shipped in the repo matches the generator."""
        import tempfile
        with tempfile.TemporaryDirectory() as tmp:
            fixtures.generate_corpus(tmp)
            fresh = sorted(Path(tmp).rglob("*.json"))
            for path in fresh:
                rel = path.relative_to(tmp)
                committed = FIXTURES_DIR / rel
                assert committed.exists(), f"missing committed fixture {rel}"
                assert committed.read_bytes() == path.read_bytes(), \
                    f"committed fixture {rel} is stale; rerun: gamecheck fixtures --out fixtures"
