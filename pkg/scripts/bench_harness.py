#!/usr/bin/env python3
"""Harness scaling study: wall clock vs worker count on simulated workloads.

Runs N units with a fixed per-unit latency under several concurrency levels
and prints the wall clock, speedup, and efficiency for each. Demonstrates
the parallel scheduling margin of the orchestration layer in isolation from
game semantics.
"""

import argparse
import sys
import tempfile
import time
from pathlib import Path

from gamecheck import fixtures, model
from gamecheck.orchestrator import RunConfig, run
from gamecheck.toyruntime import LocalRuntime


def latency_units(count: int):
    return model.load_units([{
        "id": f"bench-{i:03d}", "keypoint_id": "kp-col-hud",
        "patch": [], "initial_state": True, "interaction": [],
        "expectation": 'eq(post.phase, "playing")',
        "budget": {"max_actions": 4, "max_ticks": 8, "timeout_ms": 60000},
    } for i in range(count)])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--units", type=int, default=64)
    parser.add_argument("--latency-ms", type=int, default=200)
    parser.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    args = parser.parse_args()

    spec = fixtures.fixture_specification("collider")
    keypoints = fixtures.fixture_keypoints("collider")
    units = latency_units(args.units)
    latency_s = args.latency_ms / 1000.0

    print(f"{args.units} units x {args.latency_ms} ms simulated latency\n")
    print(f"{'K':>3}  {'wall_s':>8}  {'speedup':>8}  {'efficiency':>10}")
    baseline = None
    with tempfile.TemporaryDirectory(prefix="gamecheck-bench-") as tmp:
        for k in args.workers:
            factory = LocalRuntime("collider", act_delay_s=latency_s)
            config = RunConfig(max_concurrency=k, run_seed=0,
                               checkpoint_path=Path(tmp) / f"k{k}.jsonl",
                               game_build_id="bench")
            started = time.monotonic()
            report = run(spec, keypoints, units, config, factory)
            wall = time.monotonic() - started
            assert all(r.verdict.kind == "pass" for r in report.unit_results)
            baseline = baseline or wall
            speedup = baseline / wall
            print(f"{k:>3}  {wall:>8.2f}  {speedup:>7.1f}x  {speedup / k:>9.0%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
