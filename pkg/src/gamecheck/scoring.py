"""Verdict aggregation and verifier-alignment metrics.

Aggregation is falsification-oriented: a failed unit falsifies its keypoint,
a failed keypoint falsifies its specification element, and the failure
propagates to every element that transitively depends on it. Whatever is
left unfalsified is assigned pass -- meaning no executed keypoint exposed a
violation, not that correctness was proven. Keypoints with no surviving
units are reported as uncovered and do not falsify anything.

Alignment metrics extend the usual confusion matrix with an ``unverified``
prediction row (external verifiers may abstain): abstentions count against
accuracy, and abstentions on reference-pass elements count as missed
positives for recall. Pass is the positive class throughout. All arithmetic
is exact (fractions); undefined ratios stay undefined rather than becoming
zero.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .model import Keypoint, Specification, UnitVerdict

PRED_LABELS = ("pass", "fail", "unverified")
REF_LABELS = ("pass", "fail")

PROVENANCES = ("direct_falsification", "propagated", "default_pass", "external_input")


class KeyMismatch(ValueError):
    pass


class ModeViolation(ValueError):
    pass


# ---------------------------------------------------------------------------
# keypoint + element aggregation

def keypoint_verdict(results: Sequence[UnitVerdict]) -> str:
    """fail if any unit failed; pass if at least one unit passed and none
    failed; uncovered when nothing executed (no units, or abstentions only)."""
    kinds = [r.kind for r in results]
    if "fail" in kinds:
        return "fail"
    if "pass" in kinds:
        return "pass"
    return "uncovered"


@dataclass(frozen=True)
class ElementLabel:
    element_id: str
    label: str
    provenance: str

    def to_json(self) -> dict:
        return {"element_id": self.element_id, "label": self.label,
                "provenance": self.provenance}


def _ancestors(spec: Specification) -> dict[str, frozenset[str]]:
    """Transitive depends_on closure per element (everything it relies on)."""
    memo: dict[str, frozenset[str]] = {}

    def climb(eid: str) -> frozenset[str]:
        if eid in memo:
            return memo[eid]
        element = spec.element(eid)
        acc: set[str] = set()
        for dep in (element.depends_on if element else ()):
            acc.add(dep)
            acc |= climb(dep)
        memo[eid] = frozenset(acc)
        return memo[eid]

    for element in spec.elements:
        climb(element.element_id)
    return memo


def propagate(spec: Specification,
              seed_labels: Mapping[str, str]) -> dict[str, ElementLabel]:
    """Spread seed failures to every downstream dependent; default the rest
    to pass. An element fails iff it or something in its dependency ancestry
    carries a seed failure."""
    unknown = set(seed_labels) - set(spec.element_ids())
    if unknown:
        raise KeyMismatch(f"seed labels for unknown elements: {sorted(unknown)}")
    for eid, label in seed_labels.items():
        if label not in REF_LABELS:
            raise ValueError(f"seed label for {eid} must be pass or fail, got {label!r}")
    failed_seeds = {eid for eid, label in seed_labels.items() if label == "fail"}
    ancestry = _ancestors(spec)
    out: dict[str, ElementLabel] = {}
    for element in spec.elements:
        eid = element.element_id
        if eid in failed_seeds:
            out[eid] = ElementLabel(eid, "fail", "direct_falsification")
        elif ancestry[eid] & failed_seeds:
            out[eid] = ElementLabel(eid, "fail", "propagated")
        else:
            out[eid] = ElementLabel(eid, "pass", "default_pass")
    return out


def aggregate_run(spec: Specification, keypoints: Sequence[Keypoint],
                  verdicts_by_keypoint: Mapping[str, Sequence[UnitVerdict]]
                  ) -> tuple[dict[str, str], dict[str, ElementLabel], dict]:
    """Full unit->keypoint->element rollup plus a coverage summary."""
    kp_verdicts = {kp.keypoint_id: keypoint_verdict(verdicts_by_keypoint.get(kp.keypoint_id, ()))
                   for kp in keypoints}
    seeds: dict[str, str] = {}
    for kp in keypoints:
        verdict = kp_verdicts[kp.keypoint_id]
        if verdict == "uncovered":
            continue
        if verdict == "fail":
            seeds[kp.element_id] = "fail"
        else:
            seeds.setdefault(kp.element_id, "pass")
    labels = propagate(spec, seeds)
    covered_elements = sorted({kp.element_id for kp in keypoints
                               if kp_verdicts[kp.keypoint_id] != "uncovered"
                               and spec.element(kp.element_id) is not None})
    total = len(spec.elements)
    coverage = {
        "elements_total": total,
        "elements_covered": len(covered_elements),
        "ratio": len(covered_elements) / total if total else 0.0,
        "uncovered_elements": sorted(set(spec.element_ids()) - set(covered_elements)),
        "uncovered_keypoints": sorted(kid for kid, v in kp_verdicts.items()
                                      if v == "uncovered"),
    }
    return kp_verdicts, labels, coverage


# ---------------------------------------------------------------------------
# alignment metrics

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    u_plus: int = 0   # unverified prediction, reference pass
    u_minus: int = 0  # unverified prediction, reference fail

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn + self.u_plus + self.u_minus

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "u_plus": self.u_plus, "u_minus": self.u_minus, "n": self.n}

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                               self.tn + other.tn, self.u_plus + other.u_plus,
                               self.u_minus + other.u_minus)


def confusion(pred: Mapping[str, str], ref: Mapping[str, str]) -> ConfusionCounts:
    if set(pred) != set(ref):
        missing = sorted(set(ref) - set(pred))
        extra = sorted(set(pred) - set(ref))
        raise KeyMismatch(f"prediction/reference key sets differ "
                          f"(missing={missing}, extra={extra})")
    cells = Counter()
    for eid, predicted in pred.items():
        reference = ref[eid]
        if predicted not in PRED_LABELS:
            raise ValueError(f"prediction for {eid} must be one of {PRED_LABELS}")
        if reference not in REF_LABELS:
            raise ValueError(f"reference for {eid} must be one of {REF_LABELS}")
        cells[(predicted, reference)] += 1
    return ConfusionCounts(
        tp=cells[("pass", "pass")],
        fp=cells[("pass", "fail")],
        fn=cells[("fail", "pass")],
        tn=cells[("fail", "fail")],
        u_plus=cells[("unverified", "pass")],
        u_minus=cells[("unverified", "fail")],
    )


@dataclass
class MetricsReport:
    mode: str
    acc: Fraction | None
    prec: Fraction | None
    rec: Fraction | None
    f1: Fraction | None
    undefined: dict[str, str] = field(default_factory=dict)
    mean_wall_clock_ms: float | None = None

    def to_json(self) -> dict:
        def emit(value: Fraction | None):
            return None if value is None else float(value)

        doc = {
            "mode": self.mode,
            "acc": emit(self.acc), "prec": emit(self.prec),
            "rec": emit(self.rec), "f1": emit(self.f1),
            "exact": {name: (None if value is None else f"{value.numerator}/{value.denominator}")
                      for name, value in
                      [("acc", self.acc), ("prec", self.prec),
                       ("rec", self.rec), ("f1", self.f1)]},
        }
        if self.undefined:
            doc["undefined"] = dict(self.undefined)
        if self.mean_wall_clock_ms is not None:
            doc["mean_wall_clock_ms"] = self.mean_wall_clock_ms
        return doc


def _ratio(numer: int, denom: int) -> Fraction | None:
    return None if denom == 0 else Fraction(numer, denom)


def metrics(counts: ConfusionCounts, mode: str = "extended") -> MetricsReport:
    """Accuracy/precision/recall/F1 with pass as the positive class.

    binary: Acc=(TP+TN)/(TP+FP+FN+TN), Rec=TP/(TP+FN); only legal when no
    abstentions were recorded. extended: Acc=(TP+TN)/n, Rec=TP/(TP+FN+U+).
    Zero denominators yield None plus a reason, never 0.
    """
    if mode not in ("binary", "extended"):
        raise ValueError(f"unknown metrics mode {mode!r}")
    if mode == "binary" and (counts.u_plus or counts.u_minus):
        raise ModeViolation("binary mode requires zero unverified counts")
    undefined: dict[str, str] = {}
    if mode == "binary":
        acc = _ratio(counts.tp + counts.tn, counts.tp + counts.fp + counts.fn + counts.tn)
        rec = _ratio(counts.tp, counts.tp + counts.fn)
    else:
        acc = _ratio(counts.tp + counts.tn, counts.n)
        rec = _ratio(counts.tp, counts.tp + counts.fn + counts.u_plus)
    prec = _ratio(counts.tp, counts.tp + counts.fp)
    if acc is None:
        undefined["acc"] = "no scored elements"
    if prec is None:
        undefined["prec"] = "no pass predictions"
    if rec is None:
        undefined["rec"] = "no reference-pass elements"
    if prec is None or rec is None:
        f1 = None
        undefined["f1"] = "precision or recall undefined"
    elif prec + rec == 0:
        f1 = None
        undefined["f1"] = "precision + recall is zero"
    else:
        f1 = 2 * prec * rec / (prec + rec)
    return MetricsReport(mode, acc, prec, rec, f1, undefined)


# ---------------------------------------------------------------------------
# reference voting

@dataclass(frozen=True)
class VoteResult:
    labels: dict[str, str]
    tie_broken: frozenset[str]


def majority_vote(labelings: Sequence[Mapping[str, str]]) -> VoteResult:
    """Per-element modal label across evaluators; exact ties break to fail
    (conservative) and are recorded."""
    if not labelings:
        raise ValueError("majority_vote needs at least one labeling")
    keys = set(labelings[0])
    for index, labeling in enumerate(labelings[1:], start=2):
        if set(labeling) != keys:
            raise KeyMismatch(f"labeling #{index} has a different element set")
    labels: dict[str, str] = {}
    ties: set[str] = set()
    for eid in sorted(keys):
        votes = Counter()
        for labeling in labelings:
            value = labeling[eid]
            if value not in REF_LABELS:
                raise ValueError(f"vote for {eid} must be pass or fail, got {value!r}")
            votes[value] += 1
        if votes["pass"] > votes["fail"]:
            labels[eid] = "pass"
        elif votes["fail"] > votes["pass"]:
            labels[eid] = "fail"
        else:
            labels[eid] = "fail"
            ties.add(eid)
    return VoteResult(labels, frozenset(ties))
