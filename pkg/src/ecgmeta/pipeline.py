"""Experiment pipeline: artifacts, stages, and results emission.

Stages communicate exclusively through files under one root directory:

    root/
      corpus/           synthetic QA corpus (+ corpus_shift/ when shifted)
      backbones/        tokenizer + frozen encoder/decoder checkpoints
      runs/<key>/       one trained parameter set per (method, factors, seed)
      results/          CSV rows plus a structured JSON mirror

Every manifest records the config hash of what produced it and every
results row carries the experiment hash and seed, so any row can be
traced to the exact configuration that made it. Nothing here writes
timestamps or machine identifiers: a rerun with the same config and
seed must reproduce every results file byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .autodiff import load_params, save_params
from .backbones import (
    DecoderConfig,
    EncoderConfig,
    Tokenizer,
    build_tokenizer,
    pretrain_encoder,
    pretrain_lm,
    qa_pretraining_texts,
)
from .data.corpus import (
    Corpus,
    CorpusError,
    GeneratorConfig,
    ShiftConfig,
    generate_corpus,
    load_corpus,
    make_domain_shift_corpus,
    save_corpus,
)
from .data.questions import PROMPT_VARIANTS
from .data.signals import LEAD_NAMES
from .mapper import MAPPER_VARIANTS, MapperConfig, init_mapper
from .meta import (
    FusionModel,
    MetaConfig,
    assemble_model,
    meta_test,
    meta_train,
    supervised_baseline_train,
)
from .utils import canonical_json, config_hash

SEED_ENV_VAR = "ECGMETA_SEED"

QUESTION_TYPE_MAP = {
    "single_verify": "verify",
    "single_choose": "choose",
    "single_query": "query",
    "all_single": "all_single",
}
FEWSHOT_GRID = ((2, 5), (2, 10), (5, 5), (5, 10))
LEAD_SUITE = (("I",), ("I", "II"), ("I", "II", "V3"), None)
SUITES = ("mapper", "freezing", "meta_knowledge", "prompts", "leads",
          "expression", "domain_shift")


class ExperimentError(RuntimeError):
    """Base for pipeline failures; subclasses give distinct diagnostics."""


class ConfigError(ExperimentError):
    """The experiment config itself is malformed."""


class MissingArtifactError(ExperimentError):
    """A required stage artifact does not exist yet."""


class ConfigMismatchError(ExperimentError):
    """An artifact exists but was produced by a different configuration."""


class InvariantError(ExperimentError):
    """A loaded artifact violates a structural invariant."""


# ---------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------

_META_FIELDS = {f.name for f in dataclasses.fields(MetaConfig)}


@dataclass(frozen=True)
class ExperimentConfig:
    question_type: str = "single_verify"
    n_way: int = 2
    k_shot: int = 5
    mapper_variant: str = "attention"
    prompt_variant: str = "qa_scaffold"
    lead_subset: tuple = ()          # empty tuple means all leads
    expression: str = "same"         # question phrasing at eval: same|different
    method: str = "episodic"         # episodic|baseline
    train_encoder: bool = False      # unfreeze the encoder in the inner loop
    domain_shift: bool = False       # evaluate on the shifted corpus
    meta_adapt: bool = True          # fine-tune on support at meta-test
    seeds: tuple = (0, 1, 2)
    corpus_seed: int = 0
    backbone_seed: int = 0
    meta: dict = field(default_factory=dict)   # MetaConfig overrides

    def validate(self) -> None:
        if self.question_type not in QUESTION_TYPE_MAP:
            raise ConfigError(
                f"question_type {self.question_type!r} not in "
                f"{sorted(QUESTION_TYPE_MAP)}")
        if (self.n_way, self.k_shot) not in FEWSHOT_GRID:
            raise ConfigError(
                f"(n_way, k_shot)=({self.n_way}, {self.k_shot}) outside the "
                f"experiment grid {FEWSHOT_GRID}")
        if self.mapper_variant not in MAPPER_VARIANTS:
            raise ConfigError(f"mapper_variant {self.mapper_variant!r} not in "
                              f"{MAPPER_VARIANTS}")
        if self.prompt_variant not in PROMPT_VARIANTS:
            raise ConfigError(f"prompt_variant {self.prompt_variant!r} not in "
                              f"{PROMPT_VARIANTS}")
        for lead in self.lead_subset:
            if lead not in LEAD_NAMES:
                raise ConfigError(f"unknown lead {lead!r}; leads are {LEAD_NAMES}")
        if self.expression not in ("same", "different"):
            raise ConfigError("expression must be 'same' or 'different'")
        if self.method not in ("episodic", "baseline"):
            raise ConfigError("method must be 'episodic' or 'baseline'")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        unknown = set(self.meta) - _META_FIELDS
        if unknown:
            raise ConfigError(f"unknown MetaConfig override keys: {sorted(unknown)}")
        for key in ("seed", "question_type", "prompt_variant", "n_way", "k_shot"):
            if key in self.meta:
                raise ConfigError(
                    f"meta override {key!r} duplicates a top-level field")
        probe = MetaConfig()
        for key, value in self.meta.items():
            current = getattr(probe, key)
            if isinstance(current, bool):
                ok = isinstance(value, bool)
            elif isinstance(current, int):
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif isinstance(current, float):
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            else:
                ok = isinstance(value, type(current))
            if not ok:
                raise ConfigError(f"meta override {key!r} expects "
                                  f"{type(current).__name__}, got {value!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(raw)
        for key in ("lead_subset", "seeds"):
            if key in kw:
                kw[key] = tuple(kw[key])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise MissingArtifactError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path} is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def replace(self, **kw) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **kw)
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lead_subset"] = list(self.lead_subset)
        d["seeds"] = list(self.seeds)
        return d

    def hash(self) -> str:
        return config_hash(self.as_dict())

    def resolved_seeds(self) -> tuple:
        """Seeds to run, honoring the global override environment variable."""
        env = os.environ.get(SEED_ENV_VAR)
        if env is None:
            return tuple(self.seeds)
        try:
            return (int(env),)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}={env!r} is not an integer") from None

    def meta_config(self, seed: int) -> MetaConfig:
        return MetaConfig(
            seed=seed,
            question_type=QUESTION_TYPE_MAP[self.question_type],
            prompt_variant=self.prompt_variant,
            n_way=self.n_way,
            k_shot=self.k_shot,
            **self.meta,
        )

    def run_key(self, seed: int) -> str:
        """Directory name for one trained parameter set.

        Only training-time factors appear: two configs that train the
        same way share artifacts regardless of how they evaluate.
        """
        parts = [self.method, QUESTION_TYPE_MAP[self.question_type],
                 self.mapper_variant, self.prompt_variant]
        if self.train_encoder:
            parts.append("unfrozen")
        relevant = {k: v for k, v in sorted(self.meta.items())}
        if relevant:
            parts.append(config_hash(relevant)[:8])
        parts.append(f"n{self.n_way}k{self.k_shot}")
        parts.append(f"s{seed}")
        return "-".join(parts)


# ---------------------------------------------------------------------
# artifact paths and manifests
# ---------------------------------------------------------------------

def corpus_dir(root: str, shifted: bool = False) -> str:
    return os.path.join(root, "corpus_shift" if shifted else "corpus")


def backbones_dir(root: str) -> str:
    return os.path.join(root, "backbones")


def run_dir(root: str, key: str) -> str:
    return os.path.join(root, "runs", key)


def results_dir(root: str) -> str:
    return os.path.join(root, "results")


def _write_manifest(dirpath: str, payload: dict) -> None:
    with open(os.path.join(dirpath, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_manifest(dirpath: str, kind: str) -> dict:
    path = os.path.join(dirpath, "manifest.json")
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"no {kind} manifest at {path}; run the producing stage first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _status(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------

def stage_generate_data(cfg: ExperimentConfig, root: str) -> list[str]:
    """Build and persist the corpus (plus its shifted twin when needed)."""
    out = []
    gen = GeneratorConfig(seed=cfg.corpus_seed)
    corpus = generate_corpus(gen)
    path = corpus_dir(root)
    save_corpus(corpus, path)
    _status(f"corpus: {len(corpus.triplets)} triplets, "
            f"{len(corpus.classes)} classes -> {path}")
    out.append(path)
    if cfg.domain_shift:
        shifted = make_domain_shift_corpus(gen, ShiftConfig())
        spath = corpus_dir(root, shifted=True)
        save_corpus(shifted, spath)
        _status(f"shifted corpus -> {spath}")
        out.append(spath)
    return out


def load_corpus_checked(root: str, cfg: ExperimentConfig,
                        shifted: bool = False) -> Corpus:
    path = corpus_dir(root, shifted)
    if not os.path.isdir(path):
        raise MissingArtifactError(
            f"no corpus at {path}; run generate-data first")
    try:
        corpus = load_corpus(path)
        corpus.validate()
    except CorpusError as e:
        raise InvariantError(f"corpus at {path} failed validation: {e}") from None
    if corpus.config.seed != cfg.corpus_seed:
        raise ConfigMismatchError(
            f"corpus at {path} was generated with seed {corpus.config.seed}, "
            f"config expects {cfg.corpus_seed}")
    return corpus


def stage_pretrain(cfg: ExperimentConfig, root: str) -> str:
    """Pretrain and freeze the backbones against the stored corpus."""
    corpus = load_corpus_checked(root, cfg)
    path = backbones_dir(root)
    os.makedirs(path, exist_ok=True)

    tokenizer = build_tokenizer(corpus)
    tokenizer.save(os.path.join(path, "tokenizer.txt"))

    enc_cfg = EncoderConfig(t_steps=corpus.config.t_steps,
                            n_leads=corpus.config.n_leads)
    enc_ps, enc_report = pretrain_encoder(enc_cfg, seed=cfg.backbone_seed)
    save_params(os.path.join(path, "encoder.ckpt"), enc_ps, cfg.backbone_seed)
    _status(f"encoder: min probe accuracy "
            f"{enc_report['min_probe_accuracy']:.3f}")

    dec_cfg = DecoderConfig(vocab_size=tokenizer.vocab_size)
    dec_ps, lm_report = pretrain_lm(tokenizer, qa_pretraining_texts(corpus),
                                    dec_cfg, seed=cfg.backbone_seed)
    save_params(os.path.join(path, "decoder.ckpt"), dec_ps, cfg.backbone_seed)
    _status(f"decoder: held-out perplexity "
            f"{lm_report['holdout_ppl_untrained']:.1f} -> "
            f"{lm_report['holdout_ppl_trained']:.2f}")

    _write_manifest(path, {
        "corpus_hash": corpus.config_hash(),
        "backbone_seed": cfg.backbone_seed,
        "encoder_config": dataclasses.asdict(enc_cfg),
        "decoder_config": dataclasses.asdict(dec_cfg),
        "encoder_digest": enc_ps.digest(),
        "decoder_digest": dec_ps.digest(),
        "min_probe_accuracy": enc_report["min_probe_accuracy"],
        "holdout_ppl_trained": lm_report["holdout_ppl_trained"],
        "vocab_size": tokenizer.vocab_size,
    })
    return path


def load_backbones_checked(root: str, corpus: Corpus):
    """Returns (tokenizer, enc_cfg, enc_params, dec_cfg, dec_params)."""
    path = backbones_dir(root)
    manifest = _read_manifest(path, "backbones")
    if manifest["corpus_hash"] != corpus.config_hash():
        raise ConfigMismatchError(
            "backbones were pretrained against a different corpus "
            f"(hash {manifest['corpus_hash']} != {corpus.config_hash()}); "
            "re-run pretrain")
    tokenizer = Tokenizer.load(os.path.join(path, "tokenizer.txt"))
    enc_cfg = EncoderConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in manifest["encoder_config"].items()})
    dec_cfg = DecoderConfig(**manifest["decoder_config"])
    enc_ps, _ = load_params(os.path.join(path, "encoder.ckpt"))
    dec_ps, _ = load_params(os.path.join(path, "decoder.ckpt"))
    if enc_ps.digest() != manifest["encoder_digest"]:
        raise InvariantError("encoder checkpoint digest disagrees with manifest")
    if dec_ps.digest() != manifest["decoder_digest"]:
        raise InvariantError("decoder checkpoint digest disagrees with manifest")
    return tokenizer, enc_cfg, enc_ps, dec_cfg, dec_ps


def build_model(cfg: ExperimentConfig, root: str, corpus: Corpus,
                seed: int) -> FusionModel:
    tokenizer, enc_cfg, enc_ps, dec_cfg, dec_ps = load_backbones_checked(root, corpus)
    map_cfg = MapperConfig(variant=cfg.mapper_variant, d_in=enc_cfg.d_enc,
                           k_e=enc_cfg.n_tokens, m_prefix=dec_cfg.m_prefix,
                           d_model=dec_cfg.d_model)
    map_ps = init_mapper(map_cfg, seed=seed)
    return assemble_model(tokenizer, enc_cfg, enc_ps, dec_cfg, dec_ps,
                          map_cfg, map_ps, train_encoder=cfg.train_encoder)


def stage_train(cfg: ExperimentConfig, root: str) -> list[str]:
    """Train one parameter set per seed for the configured method."""
    corpus = load_corpus_checked(root, cfg)
    out = []
    for seed in cfg.resolved_seeds():
        key = cfg.run_key(seed)
        rdir = run_dir(root, key)
        os.makedirs(rdir, exist_ok=True)
        model = build_model(cfg, root, corpus, seed)
        mcfg = cfg.meta_config(seed)
        if cfg.method == "episodic":
            report = meta_train(model, corpus, mcfg, run_dir=rdir)
            trained = model.params
            _status(f"{key}: meta loss {report['first_loss']:.3f} -> "
                    f"{report['final_loss']:.3f} "
                    f"over {report['steps_run']} steps")
        else:
            trained = supervised_baseline_train(model, corpus, mcfg)
            _status(f"{key}: baseline training done")
        save_params(os.path.join(rdir, "params.ckpt"), trained, seed)
        _write_manifest(rdir, {
            "experiment_hash": cfg.hash(),
            "run_key": key,
            "seed": seed,
            "method": cfg.method,
            "meta_config": dataclasses.asdict(mcfg),
            "params_digest": trained.digest(),
        })
        out.append(rdir)
    return out


def _load_run_params(root: str, cfg: ExperimentConfig, seed: int):
    key = cfg.run_key(seed)
    rdir = run_dir(root, key)
    manifest = _read_manifest(rdir, f"run {key}")
    params, _ = load_params(os.path.join(rdir, "params.ckpt"))
    if params.digest() != manifest["params_digest"]:
        raise InvariantError(f"run {key}: checkpoint digest disagrees "
                             "with manifest")
    return params, manifest


def evaluate_config(cfg: ExperimentConfig, root: str, seed: int,
                    params=None, n_episodes: int | None = None) -> dict:
    """One meta-test pass under the config's evaluation-time factors."""
    corpus = load_corpus_checked(root, cfg, shifted=cfg.domain_shift)
    base = load_corpus_checked(root, cfg)
    model = build_model(cfg, root, base, seed)
    if params is None:
        params, _ = _load_run_params(root, cfg, seed)
    mcfg = cfg.meta_config(seed)
    adapt = cfg.meta_adapt and cfg.method == "episodic"
    res = meta_test(
        model, corpus, mcfg,
        n_episodes=n_episodes,
        finetune_steps=None if adapt else 0,
        lead_keep=list(cfg.lead_subset) or None,
        template_pool="unseen" if cfg.expression == "different" else None,
        params=params,
    )
    res.pop("episodes")
    return res


def _result_row(cfg: ExperimentConfig, seed, res: dict) -> dict:
    row = {
        "method": cfg.method,
        "question_type": cfg.question_type,
        "n_way": cfg.n_way,
        "k_shot": cfg.k_shot,
        "mapper": cfg.mapper_variant,
        "prompt": cfg.prompt_variant,
        "leads": ",".join(cfg.lead_subset) or "all",
        "expression": cfg.expression,
        "domain_shift": cfg.domain_shift,
        "meta_adapt": cfg.meta_adapt,
        "seed": seed,
        "config_hash": cfg.hash(),
    }
    row.update({k: res[k] for k in (
        "n_episodes", "overlap_accuracy", "bleu1", "rougeL_f1",
        "query_nll_before", "query_nll_after", "nll_improved_fraction")})
    return row


_CSV_FIELDS = ["method", "question_type", "n_way", "k_shot", "mapper",
               "prompt", "leads", "expression", "domain_shift", "meta_adapt",
               "seed", "n_episodes", "overlap_accuracy", "bleu1", "rougeL_f1",
               "query_nll_before", "query_nll_after", "nll_improved_fraction",
               "config_hash"]


def _mean_row(rows: list[dict]) -> dict:
    out = dict(rows[0])
    out["seed"] = "mean"
    for k in ("overlap_accuracy", "bleu1", "rougeL_f1", "query_nll_before",
              "query_nll_after", "nll_improved_fraction"):
        out[k] = float(np.mean([r[k] for r in rows]))
    return out


def write_results(root: str, name: str, rows: list[dict],
                  extra: dict | None = None) -> tuple[str, str]:
    """Emit rows as CSV plus a JSON mirror; returns both paths."""
    if not rows:
        raise InvariantError("refusing to write an empty results table")
    rdir = results_dir(root)
    os.makedirs(rdir, exist_ok=True)
    csv_path = os.path.join(rdir, f"{name}.csv")
    json_path = os.path.join(rdir, f"{name}.json")
    fields = list(_CSV_FIELDS)
    for row in rows:
        for k in row:
            if k not in fields:
                fields.append(k)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    payload = {"rows": rows}
    if extra:
        payload.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")
    return csv_path, json_path


def stage_evaluate(cfg: ExperimentConfig, root: str,
                   name: str | None = None) -> tuple[str, str]:
    rows = []
    for seed in cfg.resolved_seeds():
        res = evaluate_config(cfg, root, seed)
        rows.append(_result_row(cfg, seed, res))
        _status(f"seed {seed}: overlap "
                f"{rows[-1]['overlap_accuracy']:.4f}")
    if len(rows) > 1:
        rows.append(_mean_row(rows))
    name = name or f"evaluate-{cfg.method}-{cfg.question_type}" \
                   f"-n{cfg.n_way}k{cfg.k_shot}"
    return write_results(root, name, rows, extra={"config": cfg.as_dict()})


def run_experiment(cfg: ExperimentConfig, root: str) -> str:
    """Config in, results directory out: build whatever is missing."""
    if not os.path.isdir(corpus_dir(root)):
        stage_generate_data(cfg, root)
    elif cfg.domain_shift and not os.path.isdir(corpus_dir(root, shifted=True)):
        stage_generate_data(cfg, root)
    if not os.path.exists(os.path.join(backbones_dir(root), "manifest.json")):
        stage_pretrain(cfg, root)
    for seed in cfg.resolved_seeds():
        if not os.path.exists(os.path.join(run_dir(root, cfg.run_key(seed)),
                                           "params.ckpt")):
            stage_train(cfg.replace(seeds=(seed,)), root)
    stage_evaluate(cfg, root)
    return results_dir(root)


# ---------------------------------------------------------------------
# ablation suites: vary exactly one factor, hold everything else
# ---------------------------------------------------------------------

def _suite_variants(suite: str, cfg: ExperimentConfig):
    """(row label, training config, evaluation config) per suite row.

    A None training config means the row reuses the base row's trained
    parameters (evaluation-time factor) or none at all (untrained row).
    """
    if suite == "mapper":
        return [(v, cfg.replace(mapper_variant=v), cfg.replace(mapper_variant=v))
                for v in MAPPER_VARIANTS]
    if suite == "freezing":
        return [("frozen", cfg, cfg),
                ("unfrozen", cfg.replace(train_encoder=True),
                 cfg.replace(train_encoder=True))]
    if suite == "meta_knowledge":
        return [("with", cfg, cfg),
                ("without", None, cfg.replace(meta_adapt=False))]
    if suite == "prompts":
        return [(v, cfg.replace(prompt_variant=v), cfg.replace(prompt_variant=v))
                for v in PROMPT_VARIANTS]
    if suite == "leads":
        rows = []
        for keep in LEAD_SUITE:
            label = ",".join(keep) if keep else "all"
            rows.append((label, cfg if keep is None else None,
                         cfg.replace(lead_subset=keep or ())))
        return rows
    if suite == "expression":
        return [("same", cfg, cfg),
                ("different", None, cfg.replace(expression="different"))]
    if suite == "domain_shift":
        return [("in_domain", cfg, cfg),
                ("shift_no_adapt", None,
                 cfg.replace(domain_shift=True, meta_adapt=False)),
                ("shift_meta_adapt", None, cfg.replace(domain_shift=True))]
    raise ConfigError(f"unknown ablation suite {suite!r}; "
                      f"suites are {SUITES}")


def run_ablation_suite(suite: str, cfg: ExperimentConfig, root: str,
                       n_episodes: int | None = None) -> dict:
    """Controlled comparison along one factor, means over the seeds."""
    seeds = cfg.resolved_seeds()
    if len(seeds) < 3:
        raise InvariantError(
            f"ablation suites need at least 3 seeds for a mean, got {len(seeds)}")
    variants = _suite_variants(suite, cfg)
    if cfg.domain_shift and suite != "domain_shift":
        raise ConfigError("set domain_shift only for the domain_shift suite")
    if suite == "domain_shift" and not os.path.isdir(corpus_dir(root, True)):
        stage_generate_data(cfg.replace(domain_shift=True), root)
    # rows that reuse the base parameters may run before the row that
    # trains them, so make sure the base runs exist up front
    if any(tc is None for _, tc, _ in variants) and suite != "meta_knowledge":
        for seed in seeds:
            ckpt = os.path.join(run_dir(root, cfg.run_key(seed)), "params.ckpt")
            if not os.path.exists(ckpt):
                stage_train(cfg.replace(seeds=(seed,)), root)

    rows = []
    summary = []
    for label, train_cfg, eval_cfg in variants:
        per_seed = []
        for seed in seeds:
            if train_cfg is not None:
                ckpt = os.path.join(run_dir(root, train_cfg.run_key(seed)),
                                    "params.ckpt")
                if not os.path.exists(ckpt):
                    stage_train(train_cfg.replace(seeds=(seed,)), root)
                params = None
            elif suite == "meta_knowledge":
                # the "without" row evaluates a mapper that never trained
                corpus = load_corpus_checked(root, cfg)
                params = build_model(eval_cfg, root, corpus, seed).params
            else:
                # evaluation-time factor: reuse the base row's parameters
                params, _ = _load_run_params(root, cfg, seed)
            res = evaluate_config(eval_cfg, root, seed, params=params,
                                  n_episodes=n_episodes)
            row = _result_row(eval_cfg, seed, res)
            row["suite"] = suite
            row["variant"] = label
            per_seed.append(row)
            _status(f"{suite}/{label} seed {seed}: "
                    f"overlap {row['overlap_accuracy']:.4f}")
        rows.extend(per_seed)
        mean = _mean_row(per_seed)
        mean["suite"], mean["variant"] = suite, label
        rows.append(mean)
        summary.append({"variant": label,
                        "overlap_accuracy": mean["overlap_accuracy"],
                        "bleu1": mean["bleu1"],
                        "rougeL_f1": mean["rougeL_f1"]})

    csv_path, json_path = write_results(
        root, f"ablate-{suite}", rows,
        extra={"suite": suite, "summary": summary, "config": cfg.as_dict(),
               "seeds": list(seeds)})
    return {"suite": suite, "summary": summary,
            "csv": csv_path, "json": json_path}


# ---------------------------------------------------------------------
# report
# ---------------------------------------------------------------------

def emit_report(root: str) -> tuple[str, str]:
    """Aggregate results/*.json into a text summary + plot-ready series."""
    rdir = results_dir(root)
    if not os.path.isdir(rdir):
        raise MissingArtifactError(f"no results directory at {rdir}")
    names = sorted(n for n in os.listdir(rdir)
                   if n.endswith(".json") and n not in ("report.json",
                                                        "series.json"))
    if not names:
        raise MissingArtifactError(f"no results files in {rdir}")

    lines = ["ecgmeta results", "=" * 15, ""]
    series = {}
    for name in names:
        with open(os.path.join(rdir, name), encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = payload["rows"]
        lines.append(name[:-5])
        lines.append("-" * len(name[:-5]))
        header = f"{'variant':>16} {'seed':>6} {'overlap':>9} " \
                 f"{'bleu1':>7} {'rougeL':>7}"
        lines.append(header)
        points = []
        for row in rows:
            label = row.get("variant") or row["method"]
            lines.append(f"{label:>16} {str(row['seed']):>6} "
                         f"{row['overlap_accuracy']:9.4f} "
                         f"{row['bleu1']:7.4f} {row['rougeL_f1']:7.4f}")
            if row["seed"] == "mean" or len(rows) == 1:
                points.append({"label": label,
                               "overlap_accuracy": row["overlap_accuracy"],
                               "bleu1": row["bleu1"],
                               "rougeL_f1": row["rougeL_f1"]})
        hashes = sorted({row["config_hash"] for row in rows})
        seeds = sorted({row["seed"] for row in rows if row["seed"] != "mean"})
        lines.append(f"provenance: config {','.join(hashes)} seeds {seeds}")
        lines.append("")
        series[name[:-5]] = points

    from . import __version__
    lines.append(f"version: ecgmeta {__version__}")
    report_path = os.path.join(rdir, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    series_path = os.path.join(rdir, "series.json")
    with open(series_path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"series": series}))
        fh.write("\n")
    return report_path, series_path
