import copy
import json

import pytest
from hypothesis import given, settings, strategies as st

from gamecheck.judge import (
    All,
    AnyOf,
    AssertionSyntaxError,
    AssertionTypeError,
    Comp,
    ConstantJudge,
    Delta,
    EventCountPred,
    EventPred,
    Exists,
    JudgeUnavailable,
    Lit,
    LogContains,
    Not,
    PathTerm,
    RecordedJudge,
    UnavailableJudge,
    evaluate,
    parse_assertion,
    render,
)
from gamecheck.protocol import Evidence, RuntimeSchema, Snapshot, leaf_paths
from gamecheck.toyruntime import schema_for

from conftest import delete_making_missing


def make_evidence(pre_state=None, post_state=None, events=(), logs=(), status="completed"):
    pre = Snapshot(0, pre_state if pre_state is not None
                   else {"player": {"hp": 100, "pos": [0, 0]}, "phase": "playing"})
    post = Snapshot(1, post_state if post_state is not None
                    else {"player": {"hp": 75, "pos": [1, 0]}, "phase": "playing"})
    return Evidence(pre, post, list(events), [], list(logs), status=status)


class TestParse:
    def test_simple_comparison(self):
        expr = parse_assertion("eq(post.player.hp, 75)")
        assert expr == Comp("eq", PathTerm("post", "player.hp"), Lit(75))

    def test_connective_with_event_and_delta(self):
        expr = parse_assertion('all(event("collision"), le(delta(player.hp), -25))')
        assert expr == All((EventPred("collision"),
                            Comp("le", Delta("player.hp"), Lit(-25))))

    def test_event_count_infix_op(self):
        expr = parse_assertion('event_count("level_up") ge 2')
        assert expr == EventCountPred("level_up", "ge", 2)

    def test_numeric_path_segments(self):
        expr = parse_assertion("eq(post.player.pos.0, 5)")
        assert expr == Comp("eq", PathTerm("post", "player.pos.0"), Lit(5))

    def test_bool_literals(self):
        assert parse_assertion("eq(post.done, true)") == \
            Comp("eq", PathTerm("post", "done"), Lit(True))

    def test_nested_connectives(self):
        expr = parse_assertion('not(any(exists(post.items.i1), log_contains("boom")))')
        assert expr == Not(AnyOf((Exists("items.i1"), LogContains("boom"))))

    @pytest.mark.parametrize("bad", [
        "",
        "eq(post.player.hp)",
        "eq(post.player.hp, 75",
        "frobnicate(1, 2)",
        "eq(post.player.hp, 75) trailing",
        'event(collision)',
        "all()",
    ])
    def test_syntax_errors_carry_position(self, bad):
        with pytest.raises(AssertionSyntaxError) as exc:
            parse_assertion(bad)
        assert exc.value.position >= 0

    def test_delta_on_string_path_is_type_error(self):
        schema = RuntimeSchema(state_paths={"player.name": "string"},
                               actions={}, entity_types={}, events=[])
        with pytest.raises(AssertionTypeError) as exc:
            parse_assertion("eq(delta(player.name), 1)", schema)
        assert exc.value.code == "type-mismatch"

    def test_schema_accepts_valid_collider_assertions(self):
        schema = schema_for("collider")
        parse_assertion('all(event("collision"), eq(delta(player.hp), -25), '
                        "eq(post.player.pos.0, 1))", schema)

    def test_ordering_comparison_needs_numbers(self):
        schema = schema_for("collider")
        with pytest.raises(AssertionTypeError):
            parse_assertion('lt(post.phase, 3)', schema)

    def test_render_round_trips(self):
        texts = [
            "eq(post.player.hp, 75)",
            'all(event("collision"), le(delta(player.hp), -25))',
            'event_count("level_up") ge 2',
            'not(any(exists(post.items.i1), log_contains("x")))',
            "ne(pre.flag, false)",
        ]
        for text in texts:
            expr = parse_assertion(text)
            assert parse_assertion(render(expr)) == expr


class TestEvaluate:
    def test_eq_on_present_path(self):
        outcome = evaluate(parse_assertion("eq(post.player.hp, 75)"), make_evidence())
        assert outcome.holds is True
        assert outcome.trace and outcome.trace[0]["value"] is True

    def test_event_absent_fails(self):
        outcome = evaluate(parse_assertion('event("game_over")'),
                           make_evidence(events=[{"tick": 1, "type": "collision",
                                                  "data": {}}]))
        assert outcome.holds is False

    def test_status_short_circuit(self):
        for status in ("timeout", "runtime_crash"):
            outcome = evaluate(parse_assertion("eq(post.player.hp, 75)"),
                               make_evidence(status=status))
            assert outcome.holds is False
            assert "short-circuit" in outcome.trace[0]["note"]

    def test_missing_path_fails_not_raises(self):
        outcome = evaluate(parse_assertion("eq(post.player.mana, 3)"), make_evidence())
        assert outcome.holds is False
        assert outcome.trace[0]["note"] == "missing path"

    def test_delta(self):
        assert evaluate(parse_assertion("eq(delta(player.hp), -25)"),
                        make_evidence()).holds

    def test_trace_covers_every_leaf(self):
        expr = parse_assertion('all(event("a"), any(eq(post.player.hp, 1), '
                               'log_contains("x")), not(exists(post.ghost)))')
        outcome = evaluate(expr, make_evidence())
        assert len(outcome.trace) == 4  # event, eq, log_contains, exists

    def test_bool_number_cross_type_never_equal(self):
        evidence = make_evidence(post_state={"flag": True})
        assert evaluate(parse_assertion("eq(post.flag, 1)"), evidence).holds is False
        assert evaluate(parse_assertion("ne(post.flag, 1)"), evidence).holds is True

    def test_event_count(self):
        events = [{"tick": 1, "type": "coin", "data": {}} for _ in range(3)]
        assert evaluate(parse_assertion('event_count("coin") eq 3'),
                        make_evidence(events=events)).holds
        assert not evaluate(parse_assertion('event_count("coin") gt 3'),
                            make_evidence(events=events)).holds


# ---------------------------------------------------------------------------
# law-style properties over fuzzed expressions and evidence

_literals = st.one_of(
    st.integers(min_value=-50, max_value=50),
    st.booleans(),
    st.sampled_from(["playing", "game_over", "x"]),
)
_paths = st.sampled_from(["player.hp", "player.pos.0", "phase", "mana", "flags.deep.q"])
_terms = st.one_of(
    _literals.map(Lit),
    st.tuples(st.sampled_from(["pre", "post"]), _paths).map(lambda t: PathTerm(*t)),
    _paths.map(Delta),
)
_leaves = st.one_of(
    st.tuples(st.sampled_from(["eq", "ne", "lt", "le", "gt", "ge"]), _terms, _terms)
      .map(lambda t: Comp(*t)),
    _paths.map(Exists),
    st.sampled_from(["collision", "level_up", "ghost"]).map(EventPred),
    st.tuples(st.sampled_from(["collision", "level_up"]),
              st.sampled_from(["eq", "ge", "lt"]),
              st.integers(min_value=0, max_value=4)).map(lambda t: EventCountPred(*t)),
    st.sampled_from(["rejected", "boom", ""]).map(LogContains),
)


def _expressions(max_depth=3):
    return st.recursive(
        _leaves,
        lambda children: st.one_of(
            st.lists(children, min_size=1, max_size=3).map(lambda xs: All(tuple(xs))),
            st.lists(children, min_size=1, max_size=3).map(lambda xs: AnyOf(tuple(xs))),
            children.map(Not),
        ),
        max_leaves=8,
    )


_state_trees = st.fixed_dictionaries({
    "player": st.fixed_dictionaries({
        "hp": st.integers(min_value=-5, max_value=120),
        "pos": st.tuples(st.integers(0, 9), st.integers(0, 9)).map(list),
    }),
    "phase": st.sampled_from(["playing", "game_over"]),
}, optional={
    "mana": st.integers(min_value=0, max_value=9),
    "flags": st.fixed_dictionaries({"deep": st.fixed_dictionaries(
        {"q": st.booleans()})}),
})

_evidences = st.builds(
    lambda pre, post, events, logs, status: Evidence(
        Snapshot(0, pre), Snapshot(2, post), events, [], logs, status=status),
    _state_trees, _state_trees,
    st.lists(st.fixed_dictionaries({
        "tick": st.integers(0, 5),
        "type": st.sampled_from(["collision", "level_up"]),
        "data": st.just({})}), max_size=4),
    st.lists(st.sampled_from(["rejected move", "boom happened"]), max_size=2),
    st.sampled_from(["completed", "completed", "completed", "timeout", "runtime_crash"]),
)


class TestJudgeLaws:
    @given(_expressions(), _evidences)
    @settings(max_examples=300, deadline=None)
    def test_evaluate_is_total(self, expr, evidence):
        outcome = evaluate(expr, evidence)
        assert isinstance(outcome.holds, bool)

    @given(_expressions(), _expressions(), _evidences)
    @settings(max_examples=200, deadline=None)
    def test_de_morgan(self, a, b, evidence):
        lhs = evaluate(Not(All((a, b))), evidence).holds
        rhs = evaluate(AnyOf((Not(a), Not(b))), evidence).holds
        assert lhs == rhs

    @given(_expressions(), _evidences, st.randoms())
    @settings(max_examples=300, deadline=None)
    def test_missing_path_monotonicity(self, expr, evidence, rng):
        """For negation-free expressions, deleting any referenced path can
        only flip the verdict from true to false."""
        def negation_free(node):
            if isinstance(node, Not):
                return False
            if isinstance(node, (All, AnyOf)):
                return all(negation_free(i) for i in node.items)
            if isinstance(node, Comp):
                return node.op != "ne"  # ne is negative-flavored by nature
            return True

        if not negation_free(expr) or evidence.status != "completed":
            return
        before = evaluate(expr, evidence).holds
        mutilated = Evidence(
            Snapshot(evidence.pre.tick, copy.deepcopy(evidence.pre.state)),
            Snapshot(evidence.post.tick, copy.deepcopy(evidence.post.state)),
            evidence.events, evidence.action_trace, evidence.logs, evidence.status)
        victims = [p for p, _ in leaf_paths(mutilated.post.state)]
        if not victims:
            return
        assert delete_making_missing(mutilated.post.state, rng.choice(victims))
        after = evaluate(expr, mutilated).holds
        if before is False:
            assert after is False

    @given(_expressions(), _evidences)
    @settings(max_examples=100, deadline=None)
    def test_deterministic(self, expr, evidence):
        assert evaluate(expr, evidence).holds == evaluate(expr, evidence).holds


class TestExternalJudgeAdapters:
    def test_constant_pass_stub(self):
        decision = ConstantJudge("pass")(make_evidence(), "anything")
        assert decision.verdict == "pass"

    def test_endpoint_down_raises_unavailable(self):
        with pytest.raises(JudgeUnavailable):
            UnavailableJudge()(make_evidence(), "anything")

    def test_recorded_judge_replays_file(self, tmp_path):
        path = tmp_path / "verdicts.json"
        path.write_text(json.dumps({
            "eq(post.player.hp, 75)": {"verdict": "fail", "rationale": "looked wrong"},
        }))
        judge = RecordedJudge(path)
        decision = judge(make_evidence(), "eq(post.player.hp, 75)")
        assert (decision.verdict, decision.rationale) == ("fail", "looked wrong")
        with pytest.raises(JudgeUnavailable):
            judge(make_evidence(), "something else")
