#!/usr/bin/env python3
"""End-to-end smoke run on a reduced training budget.

Walks every pipeline stage in order — corpus, backbones, episodic
meta-training, supervised baseline, both evaluations, report — with a
single seed and a short outer loop, so a fresh checkout can be sanity
checked in minutes rather than the hour the full experiment grid takes.

The numbers this prints are NOT the reference results: 40 outer steps
is enough to see meta-training pull clear of the baseline, not enough
to reach the plateau. Use run_ablations.py for real tables.

Usage:
    python3 scripts/run_smoke.py [--root DIR] [--steps N] [--episodes N]
"""

import argparse
import sys

from ecgmeta.cli import main as ecgmeta


def run(argv):
    code = ecgmeta(argv)
    if code != 0:
        print(f"smoke: step {' '.join(argv)} exited {code}", file=sys.stderr)
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default="artifacts-smoke")
    ap.add_argument("--steps", type=int, default=40,
                    help="outer-loop steps (default 40)")
    ap.add_argument("--episodes", type=int, default=50,
                    help="meta-test episodes (default 50)")
    args = ap.parse_args()

    budget = [
        "--seeds", "0",
        "--set", f"meta_train_steps={args.steps}",
        "--set", f"meta_test_episodes={args.episodes}",
        "--set", f"checkpoint_every={args.steps}",
    ]
    root = ["--root", args.root]

    run(root + ["generate-data"] + budget)
    run(root + ["pretrain"] + budget)
    run(root + ["meta-train"] + budget)
    run(root + ["baseline-train"] + budget)
    run(root + ["evaluate", "--method", "episodic", "--name", "smoke-episodic"]
        + budget)
    run(root + ["evaluate", "--method", "baseline", "--name", "smoke-baseline"]
        + budget)
    run(root + ["report"])
    print(f"\nsmoke run complete; see {args.root}/results/report.txt")


if __name__ == "__main__":
    main()
