"""Specification, keypoint, and verification-unit data model.

A specification is a DAG of natural-language requirement elements. Each
keypoint is a Hoare-style triple (precondition, interaction, postcondition)
attributed to exactly one element; each verification unit grounds one
keypoint into a state patch, a bounded action script, and a machine-checkable
expectation.

Three well-formedness conditions gate execution:

* constructibility -- every patch path must exist in the runtime schema
  reported at launch handshake (decidable only once a runtime is attached,
  so keypoint-level validation defers it to :func:`lint_unit`);
* boundedness -- the interaction is finite and short, enforced structurally
  against a :class:`BudgetPolicy`;
* verifiability -- the expectation parses under the assertion grammar.

All types are immutable values after construction and safe to share across
workers without coordination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import judge as judge_mod
from .jsonutil import blake64, canonical_dumps
from .protocol import (
    ActionStep,
    PatchOp,
    Remove,
    RuntimeSchema,
    SetValue,
    Spawn,
    action_step_from_wire,
    patch_op_from_wire,
    value_matches_tag,
)

ELEMENT_CATEGORIES = ("controls", "physics", "scoring", "rules", "state_transition",
                      "ui", "failure_condition", "progression", "other")

FAIL_REASONS = ("build_launch_failure", "injection_failure", "interaction_failure",
                "outcome_mismatch")

JUDGE_KINDS = ("assert", "external")


class ParseError(ValueError):
    pass


class DanglingRefError(ParseError):
    pass


class CycleError(ParseError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join([*cycle, cycle[0]]))


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class SpecElement:
    element_id: str
    text: str
    category: str
    depends_on: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"id": self.element_id, "text": self.text, "category": self.category,
                "depends_on": list(self.depends_on)}


@dataclass(frozen=True)
class Specification:
    game_id: str
    elements: tuple[SpecElement, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.element_id: e for e in self.elements})

    def element(self, element_id: str) -> SpecElement | None:
        return self._by_id.get(element_id)  # type: ignore[attr-defined]

    def element_ids(self) -> list[str]:
        return [e.element_id for e in self.elements]

    def to_json(self) -> dict:
        return {"game_id": self.game_id, "elements": [e.to_json() for e in self.elements]}


@dataclass(frozen=True)
class Keypoint:
    keypoint_id: str
    element_id: str
    precondition: str
    interaction: str
    postcondition: str

    def to_json(self) -> dict:
        return {"id": self.keypoint_id, "element_id": self.element_id,
                "precondition": self.precondition, "interaction": self.interaction,
                "postcondition": self.postcondition}


@dataclass(frozen=True)
class Budget:
    max_actions: int
    max_ticks: int
    timeout_ms: int

    def to_json(self) -> dict:
        return {"max_actions": self.max_actions, "max_ticks": self.max_ticks,
                "timeout_ms": self.timeout_ms}


@dataclass(frozen=True)
class BudgetPolicy:
    """Default bounds for grounded units; the contract says finite and short."""

    max_actions: int = 16
    max_ticks: int = 600
    timeout_ms: int = 60000

    def default_budget(self) -> Budget:
        return Budget(self.max_actions, self.max_ticks, self.timeout_ms)


@dataclass(frozen=True)
class VerificationUnit:
    unit_id: str
    keypoint_id: str
    patch: tuple[PatchOp, ...]
    interaction: tuple[ActionStep, ...]
    expectation: str
    budget: Budget
    initial_state: bool = False
    judge: str = "assert"

    def to_json(self) -> dict:
        doc = {
            "id": self.unit_id,
            "keypoint_id": self.keypoint_id,
            "patch": [op.to_wire() for op in self.patch],
            "interaction": [s.to_wire() for s in self.interaction],
            "expectation": self.expectation,
            "budget": self.budget.to_json(),
        }
        if self.initial_state:
            doc["initial_state"] = True
        if self.judge != "assert":
            doc["judge"] = self.judge
        return doc


@dataclass(frozen=True)
class UnitVerdict:
    kind: str  # pass | fail | unverified (unverified only via external judges)
    fail_reason: str | None = None
    attempts: int = 1
    duration_ms: int = 0

    def __post_init__(self):
        if (self.kind == "fail") != (self.fail_reason is not None):
            raise ValueError("fail_reason present iff kind is fail")
        if self.fail_reason is not None and self.fail_reason not in FAIL_REASONS:
            raise ValueError(f"unknown fail_reason {self.fail_reason!r}")

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"kind": self.kind}
        if self.fail_reason:
            doc["fail_reason"] = self.fail_reason
        return doc


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # error | warning
    code: str
    message: str
    ref: str  # "<kind>:<id>:<field>"

    def to_json(self) -> dict:
        return {"severity": self.severity, "code": self.code, "message": self.message,
                "ref": self.ref}


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)


# ---------------------------------------------------------------------------
# loading

def _as_mapping(source: str | bytes | Mapping | Sequence) -> Any:
    if isinstance(source, (str, bytes)):
        try:
            return json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc}") from exc
    return source


def load_specification(source: str | bytes | Mapping) -> Specification:
    doc = _as_mapping(source)
    if not isinstance(doc, Mapping):
        raise ParseError("specification document must be a JSON object")
    game_id = doc.get("game_id")
    if not isinstance(game_id, str) or not game_id:
        raise ParseError("specification needs a non-empty game_id")
    raw_elements = doc.get("elements")
    if not isinstance(raw_elements, list) or not raw_elements:
        raise ParseError("specification needs a non-empty elements list")
    elements = []
    seen: set[str] = set()
    for raw in raw_elements:
        element_id = raw.get("id")
        if not isinstance(element_id, str) or not element_id:
            raise ParseError("every element needs a string id")
        if element_id in seen:
            raise ParseError(f"duplicate element id {element_id!r}")
        seen.add(element_id)
        category = raw.get("category", "other")
        if category not in ELEMENT_CATEGORIES:
            raise ParseError(f"element {element_id}: unknown category {category!r}")
        text = raw.get("text", "")
        if not isinstance(text, str) or not text:
            raise ParseError(f"element {element_id}: text must be a non-empty string")
        deps = raw.get("depends_on", [])
        if not isinstance(deps, list) or not all(isinstance(d, str) for d in deps):
            raise ParseError(f"element {element_id}: depends_on must be a list of ids")
        elements.append(SpecElement(element_id, text, category, tuple(deps)))
    for element in elements:
        for dep in element.depends_on:
            if dep not in seen:
                raise DanglingRefError(
                    f"element {element.element_id} depends on unknown element {dep!r}")
    spec = Specification(game_id, tuple(elements))
    topological_order(spec)  # raises CycleError on a cycle
    return spec


def topological_order(spec: Specification) -> list[str]:
    """Kahn traversal over depends_on edges; raises CycleError if none exists."""
    indegree = {e.element_id: len(e.depends_on) for e in spec.elements}
    dependents: dict[str, list[str]] = {e.element_id: [] for e in spec.elements}
    for element in spec.elements:
        for dep in element.depends_on:
            dependents[dep].append(element.element_id)
    ready = [eid for eid, deg in indegree.items() if deg == 0]
    order: list[str] = []
    while ready:
        current = ready.pop()
        order.append(current)
        for nxt in dependents[current]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    if len(order) != len(spec.elements):
        raise CycleError(_find_cycle(spec))
    return order


def _find_cycle(spec: Specification) -> list[str]:
    graph = {e.element_id: e.depends_on for e in spec.elements}
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        state[node] = 1
        stack.append(node)
        for dep in graph.get(node, ()):
            if state.get(dep) == 1:
                return stack[stack.index(dep):]
            if state.get(dep) is None:
                found = visit(dep)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for start in graph:
        if state.get(start) is None:
            cycle = visit(start)
            if cycle:
                return cycle
    raise AssertionError("cycle reported but none found")


def load_keypoints(source: str | bytes | Sequence) -> list[Keypoint]:
    doc = _as_mapping(source)
    if not isinstance(doc, list):
        raise ParseError("keypoints document must be a JSON list")
    keypoints = []
    seen: set[str] = set()
    for raw in doc:
        kp_id = raw.get("id")
        if not isinstance(kp_id, str) or not kp_id:
            raise ParseError("every keypoint needs a string id")
        if kp_id in seen:
            raise ParseError(f"duplicate keypoint id {kp_id!r}")
        seen.add(kp_id)
        keypoints.append(Keypoint(
            kp_id,
            str(raw.get("element_id", "")),
            str(raw.get("precondition", "")),
            str(raw.get("interaction", "")),
            str(raw.get("postcondition", "")),
        ))
    return keypoints


def load_units(source: str | bytes | Sequence,
               policy: BudgetPolicy | None = None) -> list[VerificationUnit]:
    """Parse a units file; budgets missing from the file fall back to policy."""
    policy = policy or BudgetPolicy()
    doc = _as_mapping(source)
    if not isinstance(doc, list):
        raise ParseError("units document must be a JSON list")
    units = []
    seen: set[str] = set()
    for raw in doc:
        unit_id = raw.get("id")
        if not isinstance(unit_id, str) or not unit_id:
            raise ParseError("every unit needs a string id")
        if unit_id in seen:
            raise ParseError(f"duplicate unit id {unit_id!r}")
        seen.add(unit_id)
        try:
            patch = tuple(patch_op_from_wire(op) for op in raw.get("patch", []))
            interaction = tuple(action_step_from_wire(s) for s in raw.get("interaction", []))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"unit {unit_id}: {exc}") from exc
        raw_budget = raw.get("budget", {})
        default = policy.default_budget()
        budget = Budget(
            int(raw_budget.get("max_actions", default.max_actions)),
            int(raw_budget.get("max_ticks", default.max_ticks)),
            int(raw_budget.get("timeout_ms", default.timeout_ms)),
        )
        if min(budget.max_actions, budget.max_ticks, budget.timeout_ms) <= 0:
            raise ParseError(f"unit {unit_id}: budget fields must be positive")
        judge_kind = raw.get("judge", "assert")
        if judge_kind not in JUDGE_KINDS:
            raise ParseError(f"unit {unit_id}: unknown judge kind {judge_kind!r}")
        units.append(VerificationUnit(
            unit_id=unit_id,
            keypoint_id=str(raw.get("keypoint_id", "")),
            patch=patch,
            interaction=interaction,
            expectation=str(raw.get("expectation", "")),
            budget=budget,
            initial_state=bool(raw.get("initial_state", False)),
            judge=judge_kind,
        ))
    return units


def read_specification(path: str | Path) -> Specification:
    return load_specification(Path(path).read_text())


def read_keypoints(path: str | Path) -> list[Keypoint]:
    return load_keypoints(Path(path).read_text())


def read_units(path: str | Path, policy: BudgetPolicy | None = None) -> list[VerificationUnit]:
    return load_units(Path(path).read_text(), policy)


# ---------------------------------------------------------------------------
# validation

def _clause_count(text: str) -> int:
    clauses = [c for chunk in text.replace(" then ", ";").splitlines()
               for c in chunk.split(";") if c.strip()]
    return max(1, len(clauses))


def validate_keypoint(kp: Keypoint, spec: Specification,
                      limits: BudgetPolicy | None = None) -> list[Diagnostic]:
    """Structural boundedness/verifiability proxies; pure function.

    Constructibility cannot be decided from natural language alone, so a
    well-formed keypoint always carries a warning deferring that check to
    :func:`lint_unit` against the runtime's handshake schema.
    """
    limits = limits or BudgetPolicy()
    out: list[Diagnostic] = []
    ref = f"keypoint:{kp.keypoint_id}"
    if spec.element(kp.element_id) is None:
        out.append(Diagnostic("error", "dangling-element",
                              f"element {kp.element_id!r} not in specification",
                              f"{ref}:element_id"))
    if not kp.precondition.strip():
        out.append(Diagnostic("error", "c1-empty-precondition",
                              "precondition text is empty", f"{ref}:precondition"))
    if not kp.interaction.strip():
        out.append(Diagnostic("error", "c2-empty-interaction",
                              "interaction text is empty", f"{ref}:interaction"))
    elif _clause_count(kp.interaction) > limits.max_actions:
        out.append(Diagnostic("error", "c2-unbounded",
                              f"interaction describes more than {limits.max_actions} steps",
                              f"{ref}:interaction"))
    if not kp.postcondition.strip():
        out.append(Diagnostic("error", "c3-empty-q",
                              "postcondition text is empty", f"{ref}:postcondition"))
    if not has_errors(out):
        out.append(Diagnostic("warning", "c1-deferred",
                              "constructibility is checked against the runtime schema "
                              "when grounded units are linted", f"{ref}:precondition"))
    return out


def validate_unit(unit: VerificationUnit, keypoints: Sequence[Keypoint] | None = None,
                  policy: BudgetPolicy | None = None) -> list[Diagnostic]:
    """Schema-free unit invariants: attribution, boundedness, parseability."""
    policy = policy or BudgetPolicy()
    out: list[Diagnostic] = []
    ref = f"unit:{unit.unit_id}"
    if keypoints is not None and unit.keypoint_id not in {k.keypoint_id for k in keypoints}:
        out.append(Diagnostic("error", "dangling-keypoint",
                              f"keypoint {unit.keypoint_id!r} not found", f"{ref}:keypoint_id"))
    if len(unit.interaction) > unit.budget.max_actions:
        out.append(Diagnostic("error", "c2-too-many-actions",
                              f"{len(unit.interaction)} steps exceed budget "
                              f"max_actions={unit.budget.max_actions}", f"{ref}:interaction"))
    total_ticks = sum(s.ticks for s in unit.interaction)
    if total_ticks > unit.budget.max_ticks:
        out.append(Diagnostic("error", "c2-too-many-ticks",
                              f"{total_ticks} ticks exceed budget "
                              f"max_ticks={unit.budget.max_ticks}", f"{ref}:interaction"))
    if not unit.patch and not unit.initial_state:
        out.append(Diagnostic("error", "empty-patch",
                              "patch is empty and unit is not marked initial_state",
                              f"{ref}:patch"))
    try:
        judge_mod.parse_assertion(unit.expectation)
    except judge_mod.AssertionSyntaxError as exc:
        out.append(Diagnostic("error", "c3-unparseable",
                              f"expectation does not parse: {exc}", f"{ref}:expectation"))
    return out


def lint_unit(unit: VerificationUnit, schema: RuntimeSchema) -> list[Diagnostic]:
    """Schema-dependent review: is the unit constructible and checkable as is?

    Refinement against these diagnostics is manual re-authoring; execution
    is blocked while any error remains.
    """
    out: list[Diagnostic] = []
    ref = f"unit:{unit.unit_id}"
    spawned: set[str] = set()
    spawn_types: dict[str, str] = {}
    for index, op in enumerate(unit.patch):
        loc = f"{ref}:patch[{index}]"
        if isinstance(op, Spawn):
            decl = schema.entity_types.get(op.entity_type)
            if decl is None:
                out.append(Diagnostic("error", "unknown-entity-type",
                                      f"entity type {op.entity_type!r} not in schema", loc))
                continue
            if op.entity_id in spawned:
                out.append(Diagnostic("error", "duplicate-entity-id",
                                      f"id {op.entity_id!r} spawned twice", loc))
            spawned.add(op.entity_id)
            spawn_types[op.entity_id] = op.entity_type
            if set(op.props) != set(decl["props"]):
                out.append(Diagnostic("error", "bad-props",
                                      f"{op.entity_type} props must be exactly "
                                      f"{sorted(decl['props'])}", loc))
                continue
            for name, tag in decl["props"].items():
                if not value_matches_tag(op.props[name], tag):
                    out.append(Diagnostic("error", "type-mismatch",
                                          f"prop {name} expects {tag}, "
                                          f"got {op.props[name]!r}", loc))
        elif isinstance(op, Remove):
            if op.entity_id not in spawned:
                out.append(Diagnostic("warning", "remove-unseen-entity",
                                      f"removing {op.entity_id!r} not spawned by this unit; "
                                      "only valid if the initial state contains it", loc))
        elif isinstance(op, SetValue):
            tag = schema.path_type(op.path)
            if tag is None:
                out.append(Diagnostic("error", "unknown-path",
                                      f"path {op.path!r} not constructible under the "
                                      "runtime schema", loc))
                continue
            segs = op.path.split(".")
            if len(segs) >= 2 and op.path not in schema.state_paths:
                owner = segs[1]
                container_types = {decl["container"] for decl in schema.entity_types.values()}
                if segs[0] in container_types and owner not in spawned:
                    out.append(Diagnostic("warning", "set-unseen-entity",
                                          f"path {op.path!r} targets entity {owner!r} not "
                                          "spawned by this unit", loc))
            if not value_matches_tag(op.value, tag):
                out.append(Diagnostic("error", "type-mismatch",
                                      f"{op.path} expects {tag}, got {op.value!r}", loc))
    for index, step in enumerate(unit.interaction):
        loc = f"{ref}:interaction[{index}]"
        params = schema.actions.get(step.action)
        if params is None:
            out.append(Diagnostic("error", "unknown-action",
                                  f"action {step.action!r} not in schema", loc))
            continue
        unknown = set(step.params) - set(params)
        missing = set(params) - set(step.params)
        if unknown:
            out.append(Diagnostic("error", "unknown-param",
                                  f"{step.action} has no param(s) {sorted(unknown)}", loc))
        if missing:
            out.append(Diagnostic("error", "missing-param",
                                  f"{step.action} requires param(s) {sorted(missing)}", loc))
    try:
        expr = judge_mod.parse_assertion(unit.expectation)
    except judge_mod.AssertionSyntaxError as exc:
        out.append(Diagnostic("error", "c3-unparseable",
                              f"expectation does not parse: {exc}", f"{ref}:expectation"))
    else:
        for code, message in judge_mod.schema_problems(expr, schema):
            out.append(Diagnostic("error", code, message, f"{ref}:expectation"))
    return out


# ---------------------------------------------------------------------------
# digests

def canonical_hash(unit: VerificationUnit, game_build_id: str) -> str:
    """64-bit hex digest over the unit's canonical serialization and build id.

    Keys checkpoint records: changes iff any semantic field or the build
    changes, so stale results are never reused after an edit or rebuild.
    """
    return blake64(canonical_dumps({"build": game_build_id, "unit": unit.to_json()}))


__all__ = [
    "Budget", "BudgetPolicy", "CycleError", "DanglingRefError", "Diagnostic",
    "ELEMENT_CATEGORIES", "FAIL_REASONS", "Keypoint", "ParseError", "SpecElement",
    "Specification", "UnitVerdict", "VerificationUnit", "canonical_hash", "has_errors",
    "lint_unit", "load_keypoints", "load_specification", "load_units",
    "read_keypoints", "read_specification", "read_units", "topological_order",
    "validate_keypoint", "validate_unit",
]
