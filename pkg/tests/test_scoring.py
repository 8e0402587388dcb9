import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gamecheck.model import UnitVerdict, load_specification
from gamecheck.scoring import (
    ConfusionCounts,
    KeyMismatch,
    ModeViolation,
    VoteResult,
    aggregate_run,
    confusion,
    keypoint_verdict,
    majority_vote,
    metrics,
    propagate,
)


def spec_from_edges(n, edges):
    """Build a specification with elements e0..e{n-1}; edges are (dep, dependent)."""
    deps = {i: [] for i in range(n)}
    for dep, dependent in edges:
        deps[dependent].append(f"e{dep}")
    return load_specification({
        "game_id": "g",
        "elements": [{"id": f"e{i}", "text": f"el {i}", "category": "other",
                      "depends_on": deps[i]} for i in range(n)],
    })


PASS = UnitVerdict("pass")
FAIL = UnitVerdict("fail", "outcome_mismatch")


class TestKeypointVerdict:
    def test_all_pass(self):
        assert keypoint_verdict([PASS, PASS]) == "pass"

    def test_any_fail_dominates(self):
        assert keypoint_verdict([PASS, FAIL]) == "fail"

    def test_zero_units_uncovered(self):
        assert keypoint_verdict([]) == "uncovered"

    def test_only_unverified_units_count_as_uncovered(self):
        assert keypoint_verdict([UnitVerdict("unverified")]) == "uncovered"
        assert keypoint_verdict([UnitVerdict("unverified"), PASS]) == "pass"
        assert keypoint_verdict([UnitVerdict("unverified"), FAIL]) == "fail"


class TestPropagate:
    def test_chain(self):
        spec = spec_from_edges(3, [(0, 1), (1, 2)])
        labels = propagate(spec, {"e0": "fail"})
        assert {e: l.label for e, l in labels.items()} == \
            {"e0": "fail", "e1": "fail", "e2": "fail"}
        assert labels["e0"].provenance == "direct_falsification"
        assert labels["e1"].provenance == "propagated"
        assert labels["e2"].provenance == "propagated"

    def test_diamond(self):
        # e0 -> {e1, e2} -> e3; seed fail on e1
        spec = spec_from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
        labels = propagate(spec, {"e1": "fail"})
        assert {e: l.label for e, l in labels.items()} == \
            {"e0": "pass", "e1": "fail", "e2": "pass", "e3": "fail"}

    def test_no_seed_failures_all_default_pass(self):
        spec = spec_from_edges(3, [(0, 1)])
        labels = propagate(spec, {})
        assert all(l.label == "pass" and l.provenance == "default_pass"
                   for l in labels.values())

    def test_unknown_seed_key_rejected(self):
        spec = spec_from_edges(2, [])
        with pytest.raises(KeyMismatch):
            propagate(spec, {"ghost": "fail"})

    @staticmethod
    def random_dag(rng, max_nodes=50):
        n = rng.randint(1, max_nodes)
        edges = [(j, i) for i in range(n) for j in range(i) if rng.random() < 0.15]
        return n, edges

    def test_500_random_dags_reachability(self):
        """label(e)=fail iff a seed-failed element is in e's dependency
        ancestry or is e itself; checked against brute-force closure."""
        rng = random.Random(2024)
        for _ in range(500):
            n, edges = self.random_dag(rng)
            spec = spec_from_edges(n, edges)
            seeds = {f"e{i}": "fail" for i in range(n) if rng.random() < 0.2}
            labels = propagate(spec, seeds)

            parents = {f"e{i}": set() for i in range(n)}
            for dep, dependent in edges:
                parents[f"e{dependent}"].add(f"e{dep}")

            def ancestry(eid, acc=None):
                acc = set() if acc is None else acc
                for p in parents[eid]:
                    if p not in acc:
                        acc.add(p)
                        ancestry(p, acc)
                return acc

            for i in range(n):
                eid = f"e{i}"
                expected_fail = eid in seeds or bool(ancestry(eid) & set(seeds))
                assert (labels[eid].label == "fail") == expected_fail

    def test_monotonicity_adding_seed_never_unfails(self):
        rng = random.Random(7)
        for _ in range(100):
            n, edges = self.random_dag(rng, max_nodes=20)
            spec = spec_from_edges(n, edges)
            base_seeds = {f"e{i}": "fail" for i in range(n) if rng.random() < 0.15}
            extra = f"e{rng.randrange(n)}"
            before = propagate(spec, base_seeds)
            after = propagate(spec, {**base_seeds, extra: "fail"})
            for eid in before:
                if before[eid].label == "fail":
                    assert after[eid].label == "fail"

    def test_order_independence_element_listing(self):
        """Any topological listing of the same DAG yields identical labels."""
        rng = random.Random(99)
        for _ in range(50):
            n, edges = self.random_dag(rng, max_nodes=15)
            deps = {i: [f"e{j}" for j, k in edges if k == i] for i in range(n)}
            element_docs = [{"id": f"e{i}", "text": "x", "category": "other",
                             "depends_on": deps[i]} for i in range(n)]
            seeds = {f"e{i}": "fail" for i in range(n) if rng.random() < 0.2}
            baseline = None
            for _ in range(3):
                shuffled = element_docs[:]
                rng.shuffle(shuffled)
                spec = load_specification({"game_id": "g", "elements": shuffled})
                labels = {e: l.label for e, l in propagate(spec, seeds).items()}
                if baseline is None:
                    baseline = labels
                assert labels == baseline


class TestAggregateRun:
    def test_uncovered_keypoint_does_not_falsify(self):
        from gamecheck.model import Keypoint
        spec = spec_from_edges(2, [(0, 1)])
        kps = [Keypoint("k0", "e0", "p", "a", "q"), Keypoint("k1", "e1", "p", "a", "q")]
        kp_verdicts, labels, coverage = aggregate_run(spec, kps, {"k0": [PASS]})
        assert kp_verdicts == {"k0": "pass", "k1": "uncovered"}
        assert labels["e1"].label == "pass"
        assert coverage["elements_covered"] == 1
        assert coverage["uncovered_keypoints"] == ["k1"]
        assert coverage["uncovered_elements"] == ["e1"]


class TestConfusion:
    def test_single_true_positive(self):
        counts = confusion({"e1": "pass"}, {"e1": "pass"})
        assert counts == ConfusionCounts(tp=1)

    def test_unverified_on_reference_pass(self):
        counts = confusion({"e1": "unverified"}, {"e1": "pass"})
        assert counts == ConfusionCounts(u_plus=1)

    def test_four_element_hand_worked_example(self):
        counts = confusion(
            {"e1": "pass", "e2": "fail", "e3": "unverified", "e4": "pass"},
            {"e1": "pass", "e2": "pass", "e3": "pass", "e4": "fail"},
        )
        assert counts == ConfusionCounts(tp=1, fn=1, u_plus=1, fp=1)
        assert counts.n == 4

    def test_key_mismatch(self):
        with pytest.raises(KeyMismatch):
            confusion({"e1": "pass"}, {"e2": "pass"})


class TestMetrics:
    def test_extended_substitution_example_exact(self):
        counts = ConfusionCounts(tp=2, tn=1, fp=0, fn=0, u_plus=1, u_minus=0)
        report = metrics(counts, "extended")
        assert report.acc == Fraction(3, 4)
        assert report.prec == Fraction(1)
        assert report.rec == Fraction(2, 3)
        assert report.f1 == Fraction(4, 5)

    def test_all_zero_counts_undefined(self):
        report = metrics(ConfusionCounts(), "extended")
        assert (report.acc, report.prec, report.rec, report.f1) == (None,) * 4
        assert set(report.undefined) == {"acc", "prec", "rec", "f1"}

    def test_binary_mode_requires_no_unverified(self):
        with pytest.raises(ModeViolation):
            metrics(ConfusionCounts(tp=1, u_plus=1), "binary")

    @given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
    @settings(max_examples=200, deadline=None)
    def test_binary_equals_extended_when_no_abstentions(self, tp, fp, fn, tn):
        counts = ConfusionCounts(tp, fp, fn, tn)
        binary = metrics(counts, "binary")
        extended = metrics(counts, "extended")
        assert (binary.acc, binary.prec, binary.rec, binary.f1) == \
            (extended.acc, extended.prec, extended.rec, extended.f1)

    @given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20),
           st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
    @settings(max_examples=300, deadline=None)
    def test_bounds_and_recall_ordering(self, tp, fp, fn, tn, u_plus, u_minus):
        counts = ConfusionCounts(tp, fp, fn, tn, u_plus, u_minus)
        report = metrics(counts, "extended")
        for value in (report.acc, report.prec, report.rec, report.f1):
            if value is not None:
                assert 0 <= value <= 1
        # extended recall never exceeds the recall that ignores abstentions
        if tp + fn > 0:
            ignoring = Fraction(tp, tp + fn)
            assert report.rec is not None and report.rec <= ignoring


def brute_force_metrics(pred, ref, mode):
    """Independent tally: walk elements one by one, no ConfusionCounts."""
    tp = sum(1 for e in pred if pred[e] == "pass" and ref[e] == "pass")
    fp = sum(1 for e in pred if pred[e] == "pass" and ref[e] == "fail")
    fn = sum(1 for e in pred if pred[e] == "fail" and ref[e] == "pass")
    tn = sum(1 for e in pred if pred[e] == "fail" and ref[e] == "fail")
    up = sum(1 for e in pred if pred[e] == "unverified" and ref[e] == "pass")
    um = sum(1 for e in pred if pred[e] == "unverified" and ref[e] == "fail")
    n = tp + fp + fn + tn + up + um
    acc_den = n if mode == "extended" else tp + fp + fn + tn
    rec_den = tp + fn + up if mode == "extended" else tp + fn
    acc = Fraction(tp + tn, acc_den) if acc_den else None
    prec = Fraction(tp, tp + fp) if tp + fp else None
    rec = Fraction(tp, rec_den) if rec_den else None
    if prec is None or rec is None or prec + rec == 0:
        f1 = None
    else:
        f1 = 2 * prec * rec / (prec + rec)
    return acc, prec, rec, f1


class TestMetricsAgainstBruteForce:
    def test_1000_fuzzed_label_maps_exact(self):
        rng = random.Random(4242)
        for trial in range(1000):
            n = rng.randint(0, 12)
            pred = {}
            ref = {}
            for i in range(n):
                pred[f"e{i}"] = rng.choice(["pass", "fail", "unverified"])
                ref[f"e{i}"] = rng.choice(["pass", "fail"])
            counts = confusion(pred, ref)
            report = metrics(counts, "extended")
            want = brute_force_metrics(pred, ref, "extended")
            assert (report.acc, report.prec, report.rec, report.f1) == want, \
                f"trial {trial}: {pred} vs {ref}"


class TestMajorityVote:
    def test_two_to_one_pass(self):
        vote = majority_vote([{"e": "pass"}, {"e": "pass"}, {"e": "fail"}])
        assert vote == VoteResult({"e": "pass"}, frozenset())

    def test_two_to_one_fail(self):
        assert majority_vote([{"e": "fail"}, {"e": "fail"}, {"e": "pass"}]).labels == \
            {"e": "fail"}

    def test_even_tie_breaks_to_fail_and_is_recorded(self):
        vote = majority_vote([{"e": "pass"}, {"e": "fail"}])
        assert vote.labels == {"e": "fail"}
        assert vote.tie_broken == frozenset({"e"})

    def test_key_mismatch(self):
        with pytest.raises(KeyMismatch):
            majority_vote([{"e": "pass"}, {"f": "pass"}])
