"""Machine-checkable expected outcomes over collected evidence.

The assertion language (EBNF):

    expr := pred | comp | "all(" expr {"," expr} ")"
          | "any(" expr {"," expr} ")" | "not(" expr ")"
    comp := op "(" term "," term ")"
    op   := "eq" | "ne" | "lt" | "le" | "gt" | "ge"
    term := "pre."path | "post."path | "delta(" path ")" | number | string | bool
    pred := "exists(post." path ")" | "event(" string ")"
          | "event_count(" string ")" op number | "log_contains(" string ")"

``delta(p)`` is post minus pre on a numeric path. Evaluation is total and
deterministic: a missing path makes the enclosing comparison false (a game
that omits specified state is violating the specification, not breaking the
harness), and evidence whose status is not ``completed`` short-circuits the
whole expression to false.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .protocol import Evidence, RuntimeSchema

COMPARISON_OPS = ("eq", "ne", "lt", "le", "gt", "ge")

_MISSING = object()


class AssertionSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class AssertionTypeError(TypeError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code  # unknown-path | unknown-event | type-mismatch


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Lit:
    value: Any


@dataclass(frozen=True)
class PathTerm:
    root: str  # "pre" | "post"
    path: str


@dataclass(frozen=True)
class Delta:
    path: str


@dataclass(frozen=True)
class Comp:
    op: str
    lhs: Any
    rhs: Any


@dataclass(frozen=True)
class Exists:
    path: str


@dataclass(frozen=True)
class EventPred:
    event_type: str


@dataclass(frozen=True)
class EventCountPred:
    event_type: str
    op: str
    count: float


@dataclass(frozen=True)
class LogContains:
    substring: str


@dataclass(frozen=True)
class All:
    items: tuple


@dataclass(frozen=True)
class AnyOf:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: Any


AssertionExpr = Comp | Exists | EventPred | EventCountPred | LogContains | All | AnyOf | Not


def render(node: Any) -> str:
    if isinstance(node, Lit):
        return json.dumps(node.value)
    if isinstance(node, PathTerm):
        return f"{node.root}.{node.path}"
    if isinstance(node, Delta):
        return f"delta({node.path})"
    if isinstance(node, Comp):
        return f"{node.op}({render(node.lhs)}, {render(node.rhs)})"
    if isinstance(node, Exists):
        return f"exists(post.{node.path})"
    if isinstance(node, EventPred):
        return f'event("{node.event_type}")'
    if isinstance(node, EventCountPred):
        count = int(node.count) if float(node.count).is_integer() else node.count
        return f'event_count("{node.event_type}") {node.op} {count}'
    if isinstance(node, LogContains):
        return f'log_contains("{node.substring}")'
    if isinstance(node, All):
        return "all(" + ", ".join(render(i) for i in node.items) + ")"
    if isinstance(node, AnyOf):
        return "any(" + ", ".join(render(i) for i in node.items) + ")"
    if isinstance(node, Not):
        return f"not({render(node.item)})"
    raise TypeError(f"not an assertion node: {node!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\\]*")
  | (?P<punct>[(),.])
""", re.VERBOSE)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise AssertionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append((kind, match.group(), pos))
        pos = match.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def next(self) -> tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, value: str) -> None:
        kind, got, pos = self.next()
        if got != value:
            raise AssertionSyntaxError(f"expected {value!r}, found {got!r}", pos)

    def fail(self, message: str):
        raise AssertionSyntaxError(message, self.peek()[2])

    # path := segment {"." segment}; segment := ident | integer
    def parse_path(self) -> str:
        segments = [self._path_segment()]
        while self.peek()[1] == ".":
            self.next()
            segments.append(self._path_segment())
        return ".".join(segments)

    def _path_segment(self) -> str:
        kind, value, pos = self.next()
        if kind == "ident" or (kind == "number" and re.fullmatch(r"\d+", value)):
            return value
        raise AssertionSyntaxError(f"expected path segment, found {value!r}", pos)

    def parse_string(self) -> str:
        kind, value, pos = self.next()
        if kind != "string":
            raise AssertionSyntaxError(f"expected string literal, found {value!r}", pos)
        return value[1:-1]

    def parse_number(self) -> float:
        kind, value, pos = self.next()
        if kind != "number":
            raise AssertionSyntaxError(f"expected number, found {value!r}", pos)
        return float(value) if "." in value else int(value)

    def parse_term(self):
        kind, value, pos = self.peek()
        if kind == "number":
            return Lit(self.parse_number())
        if kind == "string":
            return Lit(self.parse_string())
        if kind != "ident":
            self.fail(f"expected term, found {value!r}")
        if value in ("true", "false"):
            self.next()
            return Lit(value == "true")
        if value in ("pre", "post"):
            self.next()
            self.expect(".")
            return PathTerm(value, self.parse_path())
        if value == "delta":
            self.next()
            self.expect("(")
            path = self.parse_path()
            self.expect(")")
            return Delta(path)
        self.fail(f"expected term, found {value!r}")

    def parse_expr(self):
        kind, value, pos = self.peek()
        if kind != "ident":
            self.fail(f"expected expression, found {value!r}")
        if value in ("all", "any"):
            self.next()
            self.expect("(")
            items = [self.parse_expr()]
            while self.peek()[1] == ",":
                self.next()
                items.append(self.parse_expr())
            self.expect(")")
            return All(tuple(items)) if value == "all" else AnyOf(tuple(items))
        if value == "not":
            self.next()
            self.expect("(")
            inner = self.parse_expr()
            self.expect(")")
            return Not(inner)
        if value in COMPARISON_OPS:
            self.next()
            self.expect("(")
            lhs = self.parse_term()
            self.expect(",")
            rhs = self.parse_term()
            self.expect(")")
            return Comp(value, lhs, rhs)
        if value == "exists":
            self.next()
            self.expect("(")
            kind2, root, pos2 = self.next()
            if root != "post":
                raise AssertionSyntaxError("exists() takes a post. path", pos2)
            self.expect(".")
            path = self.parse_path()
            self.expect(")")
            return Exists(path)
        if value == "event":
            self.next()
            self.expect("(")
            name = self.parse_string()
            self.expect(")")
            return EventPred(name)
        if value == "event_count":
            self.next()
            self.expect("(")
            name = self.parse_string()
            self.expect(")")
            op_kind, op_value, op_pos = self.next()
            if op_value not in COMPARISON_OPS:
                raise AssertionSyntaxError(f"expected comparison op, found {op_value!r}", op_pos)
            return EventCountPred(name, op_value, self.parse_number())
        if value == "log_contains":
            self.next()
            self.expect("(")
            needle = self.parse_string()
            self.expect(")")
            return LogContains(needle)
        self.fail(f"unknown predicate {value!r}")


def parse_assertion(text: str, schema: RuntimeSchema | None = None) -> AssertionExpr:
    """Parse an expectation; with a schema, also type-check it.

    Raises :class:`AssertionSyntaxError` with a position on bad syntax and
    :class:`AssertionTypeError` on schema violations (unknown paths or
    events, delta over a non-numeric path, mistyped comparisons).
    """
    parser = _Parser(text)
    expr = parser.parse_expr()
    kind, value, pos = parser.peek()
    if kind != "eof":
        raise AssertionSyntaxError(f"trailing input {value!r}", pos)
    if schema is not None:
        for problem in schema_problems(expr, schema):
            raise AssertionTypeError(problem[0], problem[1])
    return expr


def _term_type(term: Any, schema: RuntimeSchema) -> str | None:
    """Static type of a term, or None when unknown. Yields problems via raise."""
    if isinstance(term, Lit):
        if isinstance(term.value, bool):
            return "bool"
        if isinstance(term.value, (int, float)):
            return "number"
        return "string"
    if isinstance(term, PathTerm):
        tag = schema.path_type(term.path)
        if tag is None:
            raise AssertionTypeError("unknown-path", f"path {term.path!r} not in schema")
        return tag
    if isinstance(term, Delta):
        tag = schema.path_type(term.path)
        if tag is None:
            raise AssertionTypeError("unknown-path", f"path {term.path!r} not in schema")
        if tag != "number":
            raise AssertionTypeError("type-mismatch",
                                     f"delta() needs a numeric path, {term.path!r} is {tag}")
        return "number"
    raise AssertionTypeError("type-mismatch", f"not a term: {term!r}")


def schema_problems(expr: Any, schema: RuntimeSchema) -> list[tuple[str, str]]:
    """All schema violations in an expression, as (code, message) pairs."""
    problems: list[tuple[str, str]] = []

    def visit(node: Any) -> None:
        if isinstance(node, (All, AnyOf)):
            for item in node.items:
                visit(item)
        elif isinstance(node, Not):
            visit(node.item)
        elif isinstance(node, Comp):
            try:
                lhs = _term_type(node.lhs, schema)
                rhs = _term_type(node.rhs, schema)
            except AssertionTypeError as exc:
                problems.append((exc.code, str(exc)))
                return
            if node.op in ("lt", "le", "gt", "ge"):
                for side, tag in (("left", lhs), ("right", rhs)):
                    if tag != "number":
                        problems.append(("type-mismatch",
                                         f"{node.op}() needs numbers, {side} side is {tag}"))
            elif lhs != rhs:
                problems.append(("type-mismatch",
                                 f"{node.op}() compares {lhs} with {rhs}"))
        elif isinstance(node, Exists):
            if not schema.addressable(node.path):
                problems.append(("unknown-path", f"path {node.path!r} not in schema"))
        elif isinstance(node, (EventPred, EventCountPred)):
            if node.event_type not in schema.events:
                problems.append(("unknown-event",
                                 f"event {node.event_type!r} not in schema"))
        elif isinstance(node, LogContains):
            pass
        else:
            problems.append(("type-mismatch", f"not an assertion node: {node!r}"))

    visit(expr)
    return problems


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class JudgeOutcome:
    holds: bool
    trace: list[dict] = field(default_factory=list)


def _resolve_term(term: Any, evidence: Evidence) -> Any:
    if isinstance(term, Lit):
        return term.value
    if isinstance(term, PathTerm):
        snap = evidence.pre if term.root == "pre" else evidence.post
        if snap is None or not snap.has(term.path):
            return _MISSING
        return snap.get(term.path)
    if isinstance(term, Delta):
        if evidence.pre is None or evidence.post is None:
            return _MISSING
        before = evidence.pre.get(term.path, _MISSING)
        after = evidence.post.get(term.path, _MISSING)
        if before is _MISSING or after is _MISSING:
            return _MISSING
        if not _numeric(before) or not _numeric(after):
            return _MISSING
        return after - before
    return _MISSING


def _numeric(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _compare(op: str, lhs: Any, rhs: Any) -> bool:
    if lhs is _MISSING or rhs is _MISSING:
        return False
    if op in ("eq", "ne"):
        if isinstance(lhs, bool) != isinstance(rhs, bool):
            equal = False  # bool never equals a number; Python's true == 1 would surprise
        else:
            equal = lhs == rhs
        return equal if op == "eq" else not equal
    if not (_numeric(lhs) and _numeric(rhs)):
        return False
    return {"lt": lhs < rhs, "le": lhs <= rhs, "gt": lhs > rhs, "ge": lhs >= rhs}[op]


def evaluate(expr: AssertionExpr, evidence: Evidence) -> JudgeOutcome:
    """Deterministic, total evaluation; never raises on well-formed ASTs.

    Incomplete evidence (crash or timeout) fails every assertion up front.
    Children of all/any are always fully evaluated so the trace covers
    every leaf.
    """
    if evidence.status != "completed":
        return JudgeOutcome(False, [{"expr": "evidence.status", "value": evidence.status,
                                     "note": "short-circuit: interaction did not complete"}])
    trace: list[dict] = []

    def walk(node: Any) -> bool:
        if isinstance(node, All):
            results = [walk(item) for item in node.items]
            return all(results)
        if isinstance(node, AnyOf):
            results = [walk(item) for item in node.items]
            return any(results)
        if isinstance(node, Not):
            return not walk(node.item)
        if isinstance(node, Comp):
            lhs = _resolve_term(node.lhs, evidence)
            rhs = _resolve_term(node.rhs, evidence)
            value = _compare(node.op, lhs, rhs)
            entry = {"expr": render(node), "value": value}
            if lhs is _MISSING or rhs is _MISSING:
                entry["note"] = "missing path"
            trace.append(entry)
            return value
        if isinstance(node, Exists):
            value = evidence.post is not None and evidence.post.has(node.path)
            trace.append({"expr": render(node), "value": value})
            return value
        if isinstance(node, EventPred):
            value = any(e.get("type") == node.event_type for e in evidence.events)
            trace.append({"expr": render(node), "value": value})
            return value
        if isinstance(node, EventCountPred):
            count = sum(1 for e in evidence.events if e.get("type") == node.event_type)
            value = _compare(node.op, count, node.count)
            trace.append({"expr": render(node), "value": value, "count": count})
            return value
        if isinstance(node, LogContains):
            value = any(node.substring in line for line in evidence.logs)
            trace.append({"expr": render(node), "value": value})
            return value
        trace.append({"expr": repr(node), "value": False, "note": "unknown node"})
        return False

    return JudgeOutcome(walk(expr), trace)


# ---------------------------------------------------------------------------
# external (model-based) judges: interface plus test stubs

class JudgeUnavailable(Exception):
    """The configured external judge endpoint cannot be reached right now."""


@dataclass(frozen=True)
class JudgeDecision:
    verdict: str  # pass | fail | unverified
    rationale: str = ""


class ExternalJudge(Protocol):
    """Stateless per-call adapter; the orchestrator rate-limits invocations."""

    def __call__(self, evidence: Evidence, expectation_text: str) -> JudgeDecision: ...


class ConstantJudge:
    def __init__(self, verdict: str, rationale: str = "stub"):
        self.verdict = verdict
        self.rationale = rationale

    def __call__(self, evidence: Evidence, expectation_text: str) -> JudgeDecision:
        return JudgeDecision(self.verdict, self.rationale)


class UnavailableJudge:
    def __call__(self, evidence: Evidence, expectation_text: str) -> JudgeDecision:
        raise JudgeUnavailable("endpoint down")


class RecordedJudge:
    """Replays canned decisions from a JSON file keyed by expectation text."""

    def __init__(self, path: str | Path):
        self._decisions = json.loads(Path(path).read_text())

    def __call__(self, evidence: Evidence, expectation_text: str) -> JudgeDecision:
        entry = self._decisions.get(expectation_text)
        if entry is None:
            raise JudgeUnavailable(f"no recorded decision for {expectation_text!r}")
        return JudgeDecision(entry["verdict"], entry.get("rationale", "recorded"))
