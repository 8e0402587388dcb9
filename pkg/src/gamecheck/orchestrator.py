"""Two-layer execution substrate: scheduler plus stateless unit workers.

The scheduler owns all shared mutable state (queue, checkpoint writer, rate
limiter); workers are short-lived tasks bound to one self-contained unit
each. A worker runs the four-step pipeline -- launch an isolated runtime,
inject the target state, execute the bounded interaction, judge the
evidence -- inside a fresh session per attempt, seeded reproducibly from
(run seed, unit id, attempt).

Failure handling distinguishes flake from falsification: launch and
injection failures (and an unreachable external judge) burn the retry
budget; an interaction that crashes or times out, and an assertion that
does not hold, are genuine verdicts and never retried.

Completed results are appended to a newline-delimited checkpoint and fsynced
before they count, so a run killed at any point resumes to the same verdict
multiset; a torn trailing record is discarded and its unit re-executed.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import judge as judge_mod
from . import scoring
from .jsonutil import blake64, canonical_dumps, digest_value
from .model import (
    Keypoint,
    Specification,
    UnitVerdict,
    VerificationUnit,
    canonical_hash,
)
from .protocol import (
    Evidence,
    LaunchFailure,
    ProtocolError,
    ProtocolTimeout,
    RuntimeCrash,
    SessionClosed,
)

logger = logging.getLogger(__name__)

RETRYABLE_REASONS = ("build_launch_failure", "injection_failure")


class ConfigError(ValueError):
    pass


class CheckpointIOError(OSError):
    pass


def derive_seed(run_seed: int, unit_id: str, attempt: int) -> int:
    """Stable 64-bit session seed: reproducible, decorrelated across attempts."""
    return int(blake64(canonical_dumps([run_seed, unit_id, attempt])), 16)


@dataclass
class RunConfig:
    max_concurrency: int = field(default_factory=lambda: os.cpu_count() or 4)
    unit_timeout_ms: int = 60000
    retry_budget: int = 2
    judge_rate: float = 5.0       # external-judge permits per second
    judge_burst: int = 10
    run_seed: int = 0
    checkpoint_path: str | Path | None = None
    game_build_id: str = ""

    def validate(self) -> None:
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be positive")
        if self.unit_timeout_ms < 1:
            raise ConfigError("unit_timeout_ms must be positive")
        if self.retry_budget < 0:
            raise ConfigError("retry_budget must be non-negative")
        if self.judge_rate <= 0 or self.judge_burst < 1:
            raise ConfigError("judge rate limit must be positive")
        if self.run_seed < 0:
            raise ConfigError("run_seed must be a non-negative 64-bit integer")

    def to_json(self) -> dict:
        return {
            "max_concurrency": self.max_concurrency,
            "unit_timeout_ms": self.unit_timeout_ms,
            "retry_budget": self.retry_budget,
            "judge_rate": self.judge_rate,
            "judge_burst": self.judge_burst,
            "run_seed": self.run_seed,
            "checkpoint_path": str(self.checkpoint_path) if self.checkpoint_path else None,
            "game_build_id": self.game_build_id,
        }


class TokenBucket:
    """Shared blocking rate limiter for external judge calls."""

    def __init__(self, rate: float, burst: int):
        self._rate = rate
        self._burst = float(burst)
        self._tokens = float(burst)
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._burst, self._tokens + (now - self._stamp) * self._rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                shortfall = (1.0 - self._tokens) / self._rate
            time.sleep(min(shortfall, 0.05))


# ---------------------------------------------------------------------------
# unit execution

@dataclass
class UnitResult:
    unit_id: str
    digest: str
    verdict: UnitVerdict
    judge_trace_digest: str | None = None
    queued_ms: int = 0
    exec_ms: int = 0
    worker_attempts: list[dict] = field(default_factory=list)
    resumed: bool = False
    note: str = ""

    def to_json(self) -> dict:
        doc = {
            "unit_id": self.unit_id,
            "digest": self.digest,
            "verdict": self.verdict.to_json(),
            "attempts": self.verdict.attempts,
            "timing": {"queued_ms": self.queued_ms, "exec_ms": self.exec_ms},
            "worker_attempts": self.worker_attempts,
        }
        if self.judge_trace_digest:
            doc["judge_trace"] = self.judge_trace_digest
        if self.resumed:
            doc["resumed"] = True
        if self.note:
            doc["note"] = self.note
        return doc


@dataclass
class _Attempt:
    outcome: str                      # "pass" | fail reason | "unverified" | "judge-unavailable"
    evidence: Evidence | None = None
    judge_trace: list | None = None
    note: str = ""

    @property
    def retryable(self) -> bool:
        return self.outcome in RETRYABLE_REASONS or self.outcome == "judge-unavailable"


def _judge_attempt(unit: VerificationUnit, evidence: Evidence,
                   external: judge_mod.ExternalJudge | None,
                   limiter: TokenBucket | None) -> _Attempt:
    if unit.judge == "external":
        if external is None:
            return _Attempt("outcome_mismatch", evidence,
                            note="unit requests an external judge but none is configured")
        if limiter is not None:
            limiter.acquire()
        try:
            decision = external(evidence, unit.expectation)
        except judge_mod.JudgeUnavailable as exc:
            return _Attempt("judge-unavailable", evidence, note=str(exc))
        trace = [{"expr": "external", "value": decision.verdict,
                  "rationale": decision.rationale}]
        if decision.verdict == "pass":
            return _Attempt("pass", evidence, trace)
        if decision.verdict == "unverified":
            return _Attempt("unverified", evidence, trace, note=decision.rationale)
        return _Attempt("outcome_mismatch", evidence, trace, note=decision.rationale)
    expr = judge_mod.parse_assertion(unit.expectation)
    outcome = judge_mod.evaluate(expr, evidence)
    return _Attempt("pass" if outcome.holds else "outcome_mismatch", evidence, outcome.trace)


def _run_attempt(unit: VerificationUnit, runtime_factory: Callable, config: RunConfig,
                 attempt: int, external: judge_mod.ExternalJudge | None,
                 limiter: TokenBucket | None) -> _Attempt:
    seed = derive_seed(config.run_seed, unit.unit_id, attempt)
    timeout_ms = min(unit.budget.timeout_ms, config.unit_timeout_ms)
    deadline = time.monotonic() + timeout_ms / 1000.0

    def remaining() -> float:
        return max(0.05, deadline - time.monotonic())

    session = None
    phase = "launch"
    try:
        try:
            session = runtime_factory(seed, remaining())
        except ProtocolTimeout:
            return _Attempt("build_launch_failure", note="launch timed out")
        except (LaunchFailure, RuntimeCrash, OSError) as exc:
            return _Attempt("build_launch_failure", note=str(exc))

        phase = "inject"
        try:
            report = session.apply_patch(unit.patch, timeout=remaining())
        except ProtocolTimeout:
            return _Attempt("injection_failure", note="injection timed out")
        except (ProtocolError, OSError) as exc:
            return _Attempt("injection_failure", note=str(exc))
        if not report.ok:
            error = report.first_error() or {}
            return _Attempt("injection_failure",
                            note=f"{error.get('code', 'patch-failed')}: "
                                 f"{error.get('message', '')}")
        pre = report.realized

        phase = "interact"
        started = time.monotonic()
        try:
            trace, _, logs = session.execute(unit.interaction, timeout=remaining())
            post = session.snapshot(timeout=remaining())
            events = session.events(since=0, timeout=remaining())
        except ProtocolTimeout:
            evidence = Evidence(pre, None, [], [], [], status="timeout",
                                duration_ms=int((time.monotonic() - started) * 1000))
            return _Attempt("interaction_failure", evidence, note="interaction timed out")
        except (ProtocolError, OSError) as exc:
            evidence = Evidence(pre, None, [], [], [], status="runtime_crash",
                                duration_ms=int((time.monotonic() - started) * 1000))
            return _Attempt("interaction_failure", evidence, note=str(exc))
        evidence = Evidence(pre, post, events, trace, logs, status="completed",
                            duration_ms=int((time.monotonic() - started) * 1000))

        phase = "judge"
        return _judge_attempt(unit, evidence, external, limiter)
    except Exception as exc:  # nothing escapes a worker; map to the phase
        logger.exception("unexpected failure in unit %s during %s", unit.unit_id, phase)
        reason = {"launch": "build_launch_failure", "inject": "injection_failure",
                  "interact": "interaction_failure", "judge": "outcome_mismatch"}[phase]
        return _Attempt(reason, note=f"unexpected {type(exc).__name__}: {exc}")
    finally:
        if session is not None:
            try:
                session.shutdown()
            except SessionClosed:
                pass
            except Exception:
                session.kill()


def execute_unit(unit: VerificationUnit, runtime_factory: Callable, config: RunConfig,
                 external_judge: judge_mod.ExternalJudge | None = None,
                 limiter: TokenBucket | None = None,
                 queued_ms: int = 0) -> UnitResult:
    """Run one unit to a verdict: fresh session per attempt, retries only for
    launch/injection/judge-availability failures, session always shut down."""
    started = time.monotonic()
    attempts: list[dict] = []
    attempt_no = 0
    last = _Attempt("build_launch_failure", note="never attempted")
    while attempt_no <= config.retry_budget:
        last = _run_attempt(unit, runtime_factory, config, attempt_no, external_judge, limiter)
        attempts.append({"attempt": attempt_no, "outcome": last.outcome,
                         **({"note": last.note} if last.note else {})})
        attempt_no += 1
        if not last.retryable:
            break
    exec_ms = int((time.monotonic() - started) * 1000)
    if last.outcome == "pass":
        verdict = UnitVerdict("pass", attempts=attempt_no, duration_ms=exec_ms)
    elif last.outcome in ("unverified", "judge-unavailable"):
        # an external judge that stayed unreachable through the retry budget
        # leaves the unit unverified rather than inventing a verdict
        verdict = UnitVerdict("unverified", attempts=attempt_no, duration_ms=exec_ms)
    else:
        verdict = UnitVerdict("fail", last.outcome, attempts=attempt_no, duration_ms=exec_ms)
    return UnitResult(
        unit_id=unit.unit_id,
        digest=canonical_hash(unit, config.game_build_id),
        verdict=verdict,
        judge_trace_digest=digest_value(last.judge_trace) if last.judge_trace else None,
        queued_ms=queued_ms,
        exec_ms=exec_ms,
        worker_attempts=attempts,
        note=last.note,
    )


# ---------------------------------------------------------------------------
# checkpointing

@dataclass(frozen=True)
class CheckpointRecord:
    digest: str
    unit_id: str
    verdict: UnitVerdict
    attempts: int
    exec_ms: int
    ts: float

    def to_json(self) -> dict:
        return {"digest": self.digest, "unit_id": self.unit_id,
                "verdict": self.verdict.to_json(), "attempts": self.attempts,
                "exec_ms": self.exec_ms, "ts": self.ts}


def load_checkpoint(path: str | Path) -> dict[str, CheckpointRecord]:
    """Read the valid prefix of a checkpoint; a torn tail is discarded.

    Later records supersede earlier ones for the same unit id (a unit edited
    between runs appears under a new digest).
    """
    records: dict[str, CheckpointRecord] = {}
    by_unit: dict[str, str] = {}
    file = Path(path)
    if not file.exists():
        return records
    try:
        raw = file.read_text()
    except OSError as exc:
        raise CheckpointIOError(f"cannot read checkpoint {path}: {exc}") from exc
    for line in raw.splitlines():
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            verdict = UnitVerdict(doc["verdict"]["kind"], doc["verdict"].get("fail_reason"),
                                  attempts=doc.get("attempts", 1))
            record = CheckpointRecord(doc["digest"], doc["unit_id"], verdict,
                                      doc.get("attempts", 1), doc.get("exec_ms", 0),
                                      doc.get("ts", 0.0))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            break  # torn or corrupt tail: keep the valid prefix only
        stale = by_unit.get(record.unit_id)
        if stale is not None and stale != record.digest:
            records.pop(stale, None)
        records[record.digest] = record
        by_unit[record.unit_id] = record.digest
    return records


class CheckpointWriter:
    def __init__(self, path: str | Path, fresh: bool):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "w" if fresh else "a", encoding="utf-8")
        except OSError as exc:
            raise CheckpointIOError(f"cannot open checkpoint {path}: {exc}") from exc
        self._lock = threading.Lock()

    def append(self, record: CheckpointRecord) -> None:
        line = canonical_dumps(record.to_json())
        try:
            with self._lock:
                self._handle.write(line + "\n")
                self._handle.flush()
                os.fsync(self._handle.fileno())
        except (OSError, ValueError) as exc:
            raise CheckpointIOError(f"cannot append checkpoint record: {exc}") from exc

    def close(self) -> None:
        try:
            self._handle.close()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# run / resume

@dataclass
class RunReport:
    game_id: str
    config: dict
    unit_results: list[UnitResult]
    keypoint_verdicts: dict[str, str]
    element_labels: dict[str, scoring.ElementLabel]
    coverage: dict
    wall_clock_ms: int
    worker_time_ms: int
    resumed_units: int = 0

    @property
    def any_element_failed(self) -> bool:
        return any(label.label == "fail" for label in self.element_labels.values())

    def element_label_map(self) -> dict[str, str]:
        return {eid: label.label for eid, label in self.element_labels.items()}

    def verdict_multiset(self) -> dict[tuple[str, str, str | None], int]:
        counts: dict[tuple[str, str, str | None], int] = {}
        for result in self.unit_results:
            key = (result.unit_id, result.verdict.kind, result.verdict.fail_reason)
            counts[key] = counts.get(key, 0) + 1
        return counts

    def to_json(self) -> dict:
        return {
            "game_id": self.game_id,
            "config": self.config,
            "unit_results": [r.to_json() for r in self.unit_results],
            "keypoint_verdicts": dict(sorted(self.keypoint_verdicts.items())),
            "element_labels": [self.element_labels[eid].to_json()
                               for eid in sorted(self.element_labels)],
            "coverage": self.coverage,
            "wall_clock_ms": self.wall_clock_ms,
            "worker_time_ms": self.worker_time_ms,
            "resumed_units": self.resumed_units,
        }


def run(spec: Specification, keypoints: Sequence[Keypoint],
        units: Sequence[VerificationUnit], config: RunConfig,
        runtime_factory: Callable,
        external_judge: judge_mod.ExternalJudge | None = None,
        _resume: bool = False) -> RunReport:
    """Execute every unit exactly once under bounded concurrency.

    Results are checkpointed before they count as complete; ``resume`` skips
    units whose digest already has a complete record.
    """
    config.validate()
    if any(u.judge == "external" for u in units) and external_judge is None:
        raise ConfigError("units request an external judge but none is configured")
    started = time.monotonic()
    limiter = TokenBucket(config.judge_rate, config.judge_burst)

    existing: dict[str, CheckpointRecord] = {}
    writer: CheckpointWriter | None = None
    if config.checkpoint_path is not None:
        if _resume:
            existing = load_checkpoint(config.checkpoint_path)
        writer = CheckpointWriter(config.checkpoint_path, fresh=not _resume)
        if _resume:
            # rewrite the valid prefix so a torn tail does not linger
            writer.close()
            writer = CheckpointWriter(config.checkpoint_path, fresh=True)
            for record in existing.values():
                writer.append(record)

    results: dict[str, UnitResult] = {}
    pending: list[VerificationUnit] = []
    for unit in units:
        digest = canonical_hash(unit, config.game_build_id)
        record = existing.get(digest)
        if record is not None:
            results[unit.unit_id] = UnitResult(unit.unit_id, digest, record.verdict,
                                               exec_ms=record.exec_ms, resumed=True)
        else:
            pending.append(unit)
    resumed_count = len(results)

    try:
        if pending:
            with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
                futures = {}
                for unit in pending:
                    queued_ms = int((time.monotonic() - started) * 1000)
                    futures[pool.submit(execute_unit, unit, runtime_factory, config,
                                        external_judge, limiter, queued_ms)] = unit
                outstanding = set(futures)
                failure: Exception | None = None
                while outstanding:
                    done, outstanding = wait(outstanding, return_when=FIRST_COMPLETED)
                    for future in done:
                        unit = futures[future]
                        result = future.result()
                        if writer is not None and failure is None:
                            record = CheckpointRecord(result.digest, result.unit_id,
                                                      result.verdict, result.verdict.attempts,
                                                      result.exec_ms, time.time())
                            try:
                                writer.append(record)
                            except CheckpointIOError as exc:
                                failure = exc
                                for pending_future in outstanding:
                                    pending_future.cancel()
                        results[unit.unit_id] = result
                if failure is not None:
                    raise failure
    finally:
        if writer is not None:
            writer.close()

    by_keypoint: dict[str, list[UnitVerdict]] = {}
    for unit in units:
        if unit.unit_id in results:
            by_keypoint.setdefault(unit.keypoint_id, []).append(results[unit.unit_id].verdict)
    kp_verdicts, labels, coverage = scoring.aggregate_run(spec, keypoints, by_keypoint)

    ordered = [results[u.unit_id] for u in sorted(units, key=lambda u: u.unit_id)
               if u.unit_id in results]
    return RunReport(
        game_id=spec.game_id,
        config=config.to_json(),
        unit_results=ordered,
        keypoint_verdicts=kp_verdicts,
        element_labels=labels,
        coverage=coverage,
        wall_clock_ms=int((time.monotonic() - started) * 1000),
        worker_time_ms=sum(r.exec_ms for r in ordered),
        resumed_units=resumed_count,
    )


def resume(checkpoint_path: str | Path, spec: Specification, keypoints: Sequence[Keypoint],
           units: Sequence[VerificationUnit], config: RunConfig,
           runtime_factory: Callable,
           external_judge: judge_mod.ExternalJudge | None = None) -> RunReport:
    """Continue an interrupted run from its checkpoint file."""
    config.checkpoint_path = checkpoint_path
    return run(spec, keypoints, units, config, runtime_factory, external_judge, _resume=True)
