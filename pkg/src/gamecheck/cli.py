"""Operator entry point: validate, run, resume, fixtures, score.

Exit codes: 0 success; 1 verification completed and at least one element
failed; 2 input or validation error; 3 infrastructure error (checkpoint IO
and the like). CI can tell "the game failed" from "the harness broke".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import fixtures as fixtures_mod
from . import model, orchestrator, scoring
from .protocol import LaunchFailure, ProtocolError, SubprocessRuntime

EXIT_OK = 0
EXIT_ELEMENT_FAILURES = 1
EXIT_INPUT_ERROR = 2
EXIT_INFRA_ERROR = 3

RUNTIME_CMD_ENV = "GGV_RUNTIME_CMD"


def _emit(doc: dict, fmt: str, text_lines: list[str]) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _diagnostic_lines(diagnostics) -> list[str]:
    return [f"{d.severity}[{d.code}] {d.ref}: {d.message}" for d in diagnostics]


def _input_error(fmt: str, code: str, message: str) -> int:
    doc = {"diagnostics": [{"severity": "error", "code": code, "message": message,
                            "ref": "cli"}], "errors": 1, "warnings": 0}
    _emit(doc, fmt, [f"error[{code}] cli: {message}"])
    return EXIT_INPUT_ERROR


def _load_inputs(args, fmt: str):
    for label, path in (("spec", args.spec), ("keypoints", args.keypoints),
                        ("units", args.units)):
        if not Path(path).exists():
            raise _CliExit(_input_error(fmt, "io-not-found", f"{label} file {path} not found"))
    policy = model.BudgetPolicy()
    try:
        spec = model.read_specification(args.spec)
        keypoints = model.read_keypoints(args.keypoints)
        units = model.read_units(args.units, policy)
    except model.ParseError as exc:
        raise _CliExit(_input_error(fmt, "parse-error", str(exc)))
    return spec, keypoints, units, policy


class _CliExit(Exception):
    def __init__(self, code: int):
        self.code = code


def _resolve_runtime_cmd(args, fmt: str) -> str:
    cmd = args.runtime_cmd or os.environ.get(RUNTIME_CMD_ENV)
    if not cmd:
        raise _CliExit(_input_error(
            fmt, "missing-runtime-cmd",
            f"pass --runtime-cmd or set {RUNTIME_CMD_ENV}"))
    return cmd


def _handshake_schema(runtime_cmd: str, game_id: str, fmt: str):
    factory = SubprocessRuntime(runtime_cmd, game_id)
    try:
        session = factory.open(seed=0, timeout=30.0)
    except (LaunchFailure, ProtocolError, OSError) as exc:
        raise _CliExit(_input_error(fmt, "runtime-unavailable",
                                    f"handshake with {runtime_cmd!r} failed: {exc}"))
    try:
        return session.schema
    finally:
        session.shutdown()


def _validate_all(spec, keypoints, units, policy, schema) -> list[model.Diagnostic]:
    diagnostics: list[model.Diagnostic] = []
    for kp in keypoints:
        diagnostics.extend(model.validate_keypoint(kp, spec, policy))
    for unit in units:
        diagnostics.extend(model.validate_unit(unit, keypoints, policy))
        diagnostics.extend(model.lint_unit(unit, schema))
    return diagnostics


def cmd_validate(args) -> int:
    fmt = args.format
    spec, keypoints, units, policy = _load_inputs(args, fmt)
    runtime_cmd = _resolve_runtime_cmd(args, fmt)
    schema = _handshake_schema(runtime_cmd, spec.game_id, fmt)
    diagnostics = _validate_all(spec, keypoints, units, policy, schema)
    errors = sum(1 for d in diagnostics if d.severity == "error")
    warnings = len(diagnostics) - errors
    doc = {"diagnostics": [d.to_json() for d in diagnostics],
           "errors": errors, "warnings": warnings}
    lines = _diagnostic_lines(diagnostics)
    lines.append(f"{errors} error(s), {warnings} warning(s)")
    _emit(doc, fmt, lines)
    return EXIT_OK if errors == 0 else EXIT_INPUT_ERROR


def _run_or_resume(args, resuming: bool) -> int:
    fmt = args.format
    spec, keypoints, units, policy = _load_inputs(args, fmt)
    runtime_cmd = _resolve_runtime_cmd(args, fmt)
    schema = _handshake_schema(runtime_cmd, spec.game_id, fmt)
    diagnostics = _validate_all(spec, keypoints, units, policy, schema)
    if model.has_errors(diagnostics):
        errors = sum(1 for d in diagnostics if d.severity == "error")
        doc = {"diagnostics": [d.to_json() for d in diagnostics],
               "errors": errors, "warnings": len(diagnostics) - errors}
        _emit(doc, fmt, _diagnostic_lines(diagnostics))
        return EXIT_INPUT_ERROR

    checkpoint = Path(args.checkpoint)
    if resuming and not checkpoint.exists():
        return _input_error(fmt, "io-not-found",
                            f"cannot resume: checkpoint {checkpoint} not found")
    config = orchestrator.RunConfig(
        max_concurrency=args.max_concurrency,
        unit_timeout_ms=args.timeout_ms,
        retry_budget=args.retries,
        run_seed=args.seed,
        checkpoint_path=checkpoint,
        game_build_id=args.build_id or runtime_cmd,
    )
    factory = SubprocessRuntime(runtime_cmd, spec.game_id)
    try:
        if resuming:
            report = orchestrator.resume(checkpoint, spec, keypoints, units, config, factory)
        else:
            report = orchestrator.run(spec, keypoints, units, config, factory)
    except orchestrator.CheckpointIOError as exc:
        _emit({"error": {"code": "checkpoint-io", "message": str(exc)}}, fmt,
              [f"error[checkpoint-io]: {exc}"])
        return EXIT_INFRA_ERROR
    except orchestrator.ConfigError as exc:
        return _input_error(fmt, "bad-config", str(exc))

    report_doc = report.to_json()
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report_doc, indent=2, sort_keys=True) + "\n")
    if args.labels_out:
        labels_doc = {
            "game_id": report.game_id,
            "labels": [{"element_id": eid, "label": report.element_labels[eid].label}
                       for eid in sorted(report.element_labels)],
            "wall_clock_ms": report.wall_clock_ms,
        }
        Path(args.labels_out).write_text(json.dumps(labels_doc, indent=2, sort_keys=True) + "\n")

    lines = []
    for kp_id in sorted(report.keypoint_verdicts):
        lines.append(f"keypoint {kp_id}: {report.keypoint_verdicts[kp_id]}")
    lines.append("")
    lines.append(f"{'element':<24} {'label':<6} provenance")
    for eid in sorted(report.element_labels):
        label = report.element_labels[eid]
        lines.append(f"{eid:<24} {label.label:<6} {label.provenance}")
    coverage = report.coverage
    lines.append("")
    lines.append(f"coverage: {coverage['elements_covered']}/{coverage['elements_total']} "
                 f"elements; wall clock {report.wall_clock_ms} ms; "
                 f"resumed {report.resumed_units} unit(s)")
    lines.append(f"report written to {report_path}")
    _emit(report_doc, fmt, lines)
    return EXIT_ELEMENT_FAILURES if report.any_element_failed else EXIT_OK


def cmd_run(args) -> int:
    return _run_or_resume(args, resuming=False)


def cmd_resume(args) -> int:
    return _run_or_resume(args, resuming=True)


def cmd_fixtures(args) -> int:
    fmt = args.format
    out = Path(args.out)
    try:
        written = fixtures_mod.generate_corpus(out, args.template)
    except OSError as exc:
        return _input_error(fmt, "io-unwritable", f"cannot write corpus: {exc}")
    builds = fixtures_mod.build_matrix(args.template)
    doc = {"out_dir": str(out), "builds": [b.build_id for b in builds],
           "files_written": len(written)}
    _emit(doc, fmt, [f"wrote {len(written)} files for {len(builds)} builds under {out}"])
    return EXIT_OK


def _read_label_file(path: Path) -> tuple[dict[str, str], float | None]:
    doc = json.loads(path.read_text())
    wall = None
    if isinstance(doc, dict):
        wall = doc.get("wall_clock_ms")
        doc = doc.get("labels", [])
    labels = {}
    for entry in doc:
        labels[entry["element_id"]] = entry["label"]
    return labels, wall


def _fraction_json(value: Fraction | None):
    return None if value is None else float(value)


def _mean_metrics(reports: list[scoring.MetricsReport], mode: str) -> dict:
    def mean(name: str):
        values = [getattr(r, name) for r in reports]
        if any(v is None for v in values) or not values:
            return None
        return sum(values, Fraction(0)) / len(values)

    return {"mode": mode, "acc": _fraction_json(mean("acc")),
            "prec": _fraction_json(mean("prec")), "rec": _fraction_json(mean("rec")),
            "f1": _fraction_json(mean("f1"))}


def cmd_score(args) -> int:
    fmt = args.format
    for path in [*args.pred, *args.ref]:
        if not Path(path).exists():
            return _input_error(fmt, "io-not-found", f"label file {path} not found")
    try:
        ref_maps = [_read_label_file(Path(p))[0] for p in args.ref]
        pred_runs = [_read_label_file(Path(p)) for p in args.pred]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        return _input_error(fmt, "parse-error", f"bad label file: {exc}")
    try:
        if len(ref_maps) > 1:
            vote = scoring.majority_vote(ref_maps)
            reference, tie_broken = vote.labels, sorted(vote.tie_broken)
        else:
            reference, tie_broken = ref_maps[0], []
        per_run = []
        pooled = scoring.ConfusionCounts()
        for labels, _ in pred_runs:
            counts = scoring.confusion(labels, reference)
            pooled = pooled + counts
            per_run.append((counts, scoring.metrics(counts, args.mode)))
        pooled_metrics = scoring.metrics(pooled, args.mode)
    except (scoring.KeyMismatch, scoring.ModeViolation, ValueError) as exc:
        return _input_error(fmt, type(exc).__name__.lower(), str(exc))

    times = [wall for _, wall in pred_runs if wall is not None]
    mean_time = sum(times) / len(times) if times else None
    doc = {
        "mode": args.mode,
        "k": len(pred_runs),
        "tie_broken": tie_broken,
        "runs": [{"counts": counts.to_json(), "metrics": report.to_json()}
                 for counts, report in per_run],
        "averaged_at_k": {
            "micro_pooled": {"counts": pooled.to_json(), "metrics": pooled_metrics.to_json()},
            "macro_mean": _mean_metrics([report for _, report in per_run], args.mode),
        },
        "mean_wall_clock_ms": mean_time,
    }
    lines = [f"scored {len(pred_runs)} run(s) against {len(ref_maps)} reference file(s) "
             f"[mode={args.mode}]"]
    for index, (counts, report) in enumerate(per_run, start=1):
        rendered = {k: (f"{float(v):.4f}" if v is not None else "null")
                    for k, v in (("acc", report.acc), ("prec", report.prec),
                                 ("rec", report.rec), ("f1", report.f1))}
        lines.append(f"run {index}: acc={rendered['acc']} prec={rendered['prec']} "
                     f"rec={rendered['rec']} f1={rendered['f1']} (n={counts.n})")
    macro = doc["averaged_at_k"]["macro_mean"]
    lines.append(f"macro@{len(per_run)}: acc={macro['acc']} prec={macro['prec']} "
                 f"rec={macro['rec']} f1={macro['f1']}")
    if mean_time is not None:
        lines.append(f"mean wall clock: {mean_time:.0f} ms")
    _emit(doc, fmt, lines)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamecheck",
                                     description="keypoint verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io_flags(p):
        p.add_argument("--spec", required=True)
        p.add_argument("--keypoints", required=True)
        p.add_argument("--units", required=True)
        p.add_argument("--runtime-cmd", default=None,
                       help=f"argv template for the runtime (fallback: ${RUNTIME_CMD_ENV})")
        p.add_argument("--format", choices=["text", "json"], default="text")

    p_validate = sub.add_parser("validate", help="load, validate, and lint inputs")
    add_io_flags(p_validate)
    p_validate.set_defaults(func=cmd_validate)

    for name, func in (("run", cmd_run), ("resume", cmd_resume)):
        p = sub.add_parser(name, help=f"{name} a verification run")
        add_io_flags(p)
        p.add_argument("--max-concurrency", type=int, default=os.cpu_count() or 4)
        p.add_argument("--timeout-ms", type=int, default=60000)
        p.add_argument("--retries", type=int, default=2)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--checkpoint", default="checkpoint.jsonl")
        p.add_argument("--report", default="report.json")
        p.add_argument("--labels-out", default=None,
                       help="also write element labels in the score-command format")
        p.add_argument("--build-id", default=None,
                       help="identity for checkpoint digests (default: runtime command)")
        p.set_defaults(func=func)

    p_fixtures = sub.add_parser("fixtures", help="emit the mutation corpus")
    p_fixtures.add_argument("--out", required=True)
    p_fixtures.add_argument("--template", choices=["collider", "ledger", "quest"],
                            default=None)
    p_fixtures.add_argument("--format", choices=["text", "json"], default="text")
    p_fixtures.set_defaults(func=cmd_fixtures)

    p_score = sub.add_parser("score", help="align predictions with reference labels")
    p_score.add_argument("--pred", nargs="+", required=True)
    p_score.add_argument("--ref", nargs="+", required=True)
    p_score.add_argument("--mode", choices=["binary", "extended"], default="extended")
    p_score.add_argument("--format", choices=["text", "json"], default="text")
    p_score.set_defaults(func=cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliExit as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
