"""Command-line entry point.

Verbs map one-to-one onto pipeline stages:

    ecgmeta generate-data   build the synthetic corpus
    ecgmeta pretrain        pretrain + freeze tokenizer/encoder/decoder
    ecgmeta meta-train      episodic training, one run per seed
    ecgmeta baseline-train  supervised training on the same class pool
    ecgmeta evaluate        meta-test under the configured factors
    ecgmeta ablate          one controlled comparison suite
    ecgmeta report          aggregate everything under results/

Configuration comes from an optional JSON file (--config) overlaid by
flags; unknown keys in either are rejected. Setting ECGMETA_SEED in the
environment replaces the configured seed list with that single seed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data.questions import PROMPT_VARIANTS
from .mapper import MAPPER_VARIANTS
from . import pipeline
from .pipeline import (
    ConfigError,
    ConfigMismatchError,
    ExperimentConfig,
    ExperimentError,
    InvariantError,
    MissingArtifactError,
    QUESTION_TYPE_MAP,
    SUITES,
)

EXIT_CODES = (
    (ConfigError, 2, "config error"),
    (MissingArtifactError, 3, "missing artifact"),
    (ConfigMismatchError, 4, "config mismatch"),
    (InvariantError, 5, "invariant violation"),
    (ExperimentError, 1, "error"),
)


def _add_config_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", metavar="FILE",
                    help="JSON file with experiment fields")
    sp.add_argument("--question-type", choices=sorted(QUESTION_TYPE_MAP))
    sp.add_argument("--n-way", type=int)
    sp.add_argument("--k-shot", type=int)
    sp.add_argument("--mapper", dest="mapper_variant", choices=MAPPER_VARIANTS)
    sp.add_argument("--prompt", dest="prompt_variant", choices=PROMPT_VARIANTS)
    sp.add_argument("--leads", dest="lead_subset", metavar="I,II,...",
                    help="comma-separated lead names kept at evaluation")
    sp.add_argument("--expression", choices=("same", "different"),
                    help="evaluate on seen or held-out question phrasings")
    sp.add_argument("--train-encoder", action="store_true", default=None)
    sp.add_argument("--domain-shift", action="store_true", default=None)
    sp.add_argument("--no-adapt", action="store_true",
                    help="skip support-set fine-tuning at meta-test")
    sp.add_argument("--seeds", metavar="0,1,2",
                    help="comma-separated seeds")
    sp.add_argument("--set", dest="meta_overrides", action="append",
                    metavar="KEY=VALUE", default=[],
                    help="meta-learner override, e.g. --set inner_steps=3")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_file(args.config)
        raw = cfg.as_dict()
    for key in ("question_type", "n_way", "k_shot", "mapper_variant",
                "prompt_variant", "expression", "method"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if getattr(args, "lead_subset", None) is not None:
        raw["lead_subset"] = [s for s in args.lead_subset.split(",") if s]
    if getattr(args, "seeds", None) is not None:
        try:
            raw["seeds"] = [int(s) for s in args.seeds.split(",") if s]
        except ValueError:
            raise ConfigError(f"--seeds must be integers, got {args.seeds!r}")
    if getattr(args, "train_encoder", None):
        raw["train_encoder"] = True
    if getattr(args, "domain_shift", None):
        raw["domain_shift"] = True
    if getattr(args, "no_adapt", False):
        raw["meta_adapt"] = False
    overrides = dict(raw.get("meta", {}))
    for item in getattr(args, "meta_overrides", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = _parse_value(value.strip())
    if overrides:
        raw["meta"] = overrides
    return ExperimentConfig.from_dict(raw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ecgmeta",
        description="few-shot ECG question answering experiments")
    p.add_argument("--root", default="artifacts",
                   help="directory holding all stage artifacts")
    sub = p.add_subparsers(dest="command", required=True)

    for verb in ("generate-data", "pretrain", "meta-train", "baseline-train",
                 "evaluate"):
        sp = sub.add_parser(verb)
        _add_config_flags(sp)
    sub.choices["evaluate"].add_argument(
        "--method", choices=("episodic", "baseline"))
    sub.choices["evaluate"].add_argument(
        "--name", help="basename for the results files")

    sp = sub.add_parser("ablate")
    sp.add_argument("--suite", required=True, choices=SUITES)
    sp.add_argument("--episodes", type=int, default=None,
                    help="episodes per evaluation (default: meta config)")
    _add_config_flags(sp)

    sub.add_parser("report")
    return p


def _dispatch(args: argparse.Namespace) -> None:
    root = args.root
    if args.command == "report":
        report, series = pipeline.emit_report(root)
        print(report)
        print(series)
        return
    cfg = config_from_args(args)
    if args.command == "generate-data":
        for path in pipeline.stage_generate_data(cfg, root):
            print(path)
    elif args.command == "pretrain":
        print(pipeline.stage_pretrain(cfg, root))
    elif args.command == "meta-train":
        for path in pipeline.stage_train(cfg.replace(method="episodic"), root):
            print(path)
    elif args.command == "baseline-train":
        for path in pipeline.stage_train(cfg.replace(method="baseline"), root):
            print(path)
    elif args.command == "evaluate":
        csv_path, json_path = pipeline.stage_evaluate(
            cfg, root, name=getattr(args, "name", None))
        print(csv_path)
        print(json_path)
    elif args.command == "ablate":
        out = pipeline.run_ablation_suite(args.suite, cfg, root,
                                          n_episodes=args.episodes)
        print(out["csv"])
        print(out["json"])


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ExperimentError as e:
        for klass, code, label in EXIT_CODES:
            if isinstance(e, klass):
                print(f"ecgmeta: {label}: {e}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")
    return 0


if __name__ == "__main__":
    sys.exit(main())
