#!/usr/bin/env python3
"""Full ablation grid: every suite, three seeds, shared artifacts.

Reproduces the comparative tables — mapper variants, encoder freezing,
meta-knowledge, prompt styles, lead subsets, question expression,
domain shift — against one corpus and one set of frozen backbones.
Suites share trained runs where factors allow (an evaluation-time
factor like lead masking reuses the base run), so the first suites pay
for the training the later ones reuse.

This is the expensive driver: on one desktop core expect roughly ten
minutes per trained run (three seeds per suite variant that trains).
Pick suites with --suites to shorten it.

Usage:
    python3 scripts/run_ablations.py [--root DIR] [--suites a,b] \
        [--episodes N] [--seeds 0,1,2] [--steps N]
"""

import argparse
import sys

from ecgmeta.cli import main as ecgmeta
from ecgmeta.pipeline import SUITES


def run(argv):
    code = ecgmeta(argv)
    if code != 0:
        print(f"ablations: step {' '.join(argv)} exited {code}",
              file=sys.stderr)
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default="artifacts")
    ap.add_argument("--suites", default=",".join(SUITES),
                    help=f"comma-separated subset of {','.join(SUITES)}")
    ap.add_argument("--episodes", type=int, default=None,
                    help="episodes per evaluation (default: meta config)")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--steps", type=int, default=120,
                    help="outer-loop steps per run (default 120)")
    args = ap.parse_args()

    suites = [s for s in args.suites.split(",") if s]
    unknown = set(suites) - set(SUITES)
    if unknown:
        ap.error(f"unknown suites: {sorted(unknown)}")

    shared = [
        "--seeds", args.seeds,
        "--set", f"meta_train_steps={args.steps}",
        "--set", f"checkpoint_every={args.steps}",
    ]
    root = ["--root", args.root]

    run(root + ["generate-data"] + shared)
    run(root + ["pretrain"] + shared)
    for suite in suites:
        argv = root + ["ablate", "--suite", suite] + shared
        if args.episodes is not None:
            argv += ["--episodes", str(args.episodes)]
        run(argv)
    run(root + ["report"])
    print(f"\nablations complete; see {args.root}/results/report.txt")


if __name__ == "__main__":
    main()
