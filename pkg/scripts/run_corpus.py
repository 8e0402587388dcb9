#!/usr/bin/env python3
"""Run the full mutation corpus and report agreement with ground truth.

Generates the 12-build corpus into a scratch directory, verifies every build
end to end through real runtime subprocesses, and prints one agreement row
per build plus totals. Exit 0 iff agreement is 100% everywhere.
"""

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

from gamecheck import fixtures, model
from gamecheck.orchestrator import RunConfig, run
from gamecheck.protocol import SubprocessRuntime


def verify_build(build, corpus_dir: Path, workdir: Path, concurrency: int, seed: int):
    spec = model.read_specification(corpus_dir / f"{build.template}.spec.json")
    keypoints = model.read_keypoints(corpus_dir / f"{build.template}.keypoints.json")
    units = model.read_units(corpus_dir / f"{build.template}.units.json")
    truth = json.loads((corpus_dir / "truth" / f"{build.build_id}.json").read_text())

    config = RunConfig(max_concurrency=concurrency, run_seed=seed,
                       checkpoint_path=workdir / f"{build.build_id}.jsonl",
                       game_build_id=build.build_id)
    factory = SubprocessRuntime(build.runtime_argv(), spec.game_id)
    report = run(spec, keypoints, units, config, factory)

    unit_ok = sum(1 for r in report.unit_results
                  if r.verdict.to_json() == truth["unit_verdicts"][r.unit_id])
    labels_got = {report.element_labels[e].element_id: report.element_labels[e].label
                  for e in report.element_labels}
    labels_want = {e["element_id"]: e["label"] for e in truth["element_labels"]}
    kp_ok = report.keypoint_verdicts == truth["keypoint_verdicts"]
    return {
        "build": build.build_id,
        "units": f"{unit_ok}/{len(report.unit_results)}",
        "units_exact": unit_ok == len(report.unit_results),
        "keypoints_exact": kp_ok,
        "labels_exact": labels_got == labels_want,
        "wall_ms": report.wall_clock_ms,
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--concurrency", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--template", choices=["collider", "ledger", "quest"], default=None)
    args = parser.parse_args()

    started = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="gamecheck-corpus-") as tmp:
        corpus_dir = Path(tmp) / "corpus"
        fixtures.generate_corpus(corpus_dir, args.template)
        workdir = Path(tmp) / "runs"
        workdir.mkdir()

        rows = [verify_build(build, corpus_dir, workdir, args.concurrency, args.seed)
                for build in fixtures.build_matrix(args.template)]

    print(f"{'build':<36} {'units':>7}  kp  labels  wall_ms")
    all_exact = True
    for row in rows:
        ok = row["units_exact"] and row["keypoints_exact"] and row["labels_exact"]
        all_exact &= ok
        print(f"{row['build']:<36} {row['units']:>7}  "
              f"{'ok' if row['keypoints_exact'] else 'XX':>2}  "
              f"{'ok' if row['labels_exact'] else 'XX':>6}  {row['wall_ms']:>7}")
    total = time.monotonic() - started
    print(f"\n{len(rows)} builds in {total:.1f} s: "
          f"{'100% agreement' if all_exact else 'DISAGREEMENT FOUND'}")
    return 0 if all_exact else 1


if __name__ == "__main__":
    sys.exit(main())
