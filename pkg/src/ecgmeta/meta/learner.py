"""Episodic meta-training and evaluation.

The inner loop is plain SGD on the support loss; by default its gradient
steps stay on the tape, so the outer gradient differentiates through the
adaptation (the meta-gradient carries the second-order terms). With
``second_order=False`` the inner gradients are detached and the outer
update reduces to the first-order approximation.

The outer update sums query losses over the meta-batch. Because the sum
is linear, each episode is backpropagated separately and the gradients
accumulate numerically, letting every episode's graph be freed before
the next one builds.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from ..autodiff import (
    AdamW,
    DropoutCtx,
    EVAL_CTX,
    ParameterSet,
    Tape,
    Tensor,
    grad_params,
    load_arrays,
    no_grad,
    save_arrays,
)
from ..data.corpus import Corpus
from ..data.episodes import rephrase_episode, sample_episode
from ..metrics import evaluate_pairs
from ..utils import stable_key
from .model import Batch, FeatureCache, FusionModel, generate_answers, prepare_batch, task_loss


@dataclass(frozen=True)
class MetaConfig:
    seed: int = 0
    question_type: str = "verify"
    prompt_variant: str = "qa_scaffold"
    n_way: int = 2
    k_shot: int = 5
    m_query: int = 12
    inner_lr: float = 0.05
    inner_steps: int = 5
    finetune_steps: int = 15
    second_order: bool = True
    outer_lr: float = 5e-4
    outer_weight_decay: float = 0.01
    meta_batch: int = 4
    meta_train_steps: int = 1000
    meta_test_episodes: int = 200
    checkpoint_every: int = 100
    max_answer_tokens: int = 8

    def replace(self, **kw) -> "MetaConfig":
        return replace(self, **kw)


def _detached(grads: dict) -> dict:
    return {p: Tensor(g.data.copy()) for p, g in grads.items()}


def inner_adapt(model: FusionModel, ps: ParameterSet, support: Batch,
                cfg: MetaConfig, ctx: DropoutCtx, steps: int | None = None,
                create_graph: bool | None = None, tag: str = "inner") -> ParameterSet:
    """SGD on the support loss, functionally: returns a new ParameterSet.

    With create_graph the updates stay differentiable with respect to the
    starting parameters; otherwise gradients are detached, which is both
    the first-order training mode and the evaluation-time fine-tuning.
    """
    steps = cfg.inner_steps if steps is None else steps
    create_graph = cfg.second_order if create_graph is None else create_graph
    lr = Tensor(cfg.inner_lr)
    for i in range(steps):
        loss = task_loss(model, ps, support, ctx, tag=f"{tag}{i}")
        grads = grad_params(loss, ps, create_graph=create_graph)
        if not create_graph:
            grads = _detached(grads)
        ps = ps.with_updates({p: ps[p] - lr * g for p, g in grads.items()})
    return ps


def episode_batches(model: FusionModel, corpus: Corpus, cfg: MetaConfig,
                    episode, cache: FeatureCache | None = None,
                    lead_keep=None) -> tuple[Batch, Batch]:
    support = prepare_batch(model, corpus, episode.support, cache,
                            cfg.prompt_variant, lead_keep)
    query = prepare_batch(model, corpus, episode.query, cache,
                          cfg.prompt_variant, lead_keep)
    return support, query


def meta_train_step(model: FusionModel, corpus: Corpus, opt: AdamW,
                    cfg: MetaConfig, step: int, class_pool,
                    cache: FeatureCache | None = None) -> dict:
    """One outer update over a meta-batch of episodes; returns a log row."""
    grad_acc = {p: np.zeros(t.shape) for p, t in model.params.unfrozen_items()}
    meta_loss = 0.0
    episode_ids = []
    ctx = DropoutCtx(seed=cfg.seed, step=step, train=True)
    for i in range(cfg.meta_batch):
        ep = sample_episode(corpus, class_pool, cfg.n_way, cfg.k_shot,
                            cfg.m_query,
                            seed=stable_key(cfg.seed, "metatrain", step, i))
        episode_ids.append(list(ep.class_ids))
        support, query = episode_batches(model, corpus, cfg, ep, cache)
        with Tape():
            adapted = inner_adapt(model, model.params, support, cfg, ctx,
                                  tag=f"ep{i}/in")
            qloss = task_loss(model, adapted, query, ctx, tag=f"ep{i}/q")
            grads = grad_params(qloss, model.params)
        for p, g in grads.items():
            grad_acc[p] += g.data
        meta_loss += float(qloss.data)
    opt.step(grad_acc)
    grad_norm = float(np.sqrt(sum((g * g).sum() for g in grad_acc.values())))
    return {"step": step, "meta_loss": meta_loss, "grad_norm": grad_norm,
            "episodes": episode_ids}


CKPT_NAME = "meta_state.bin"
LOG_NAME = "train_log.jsonl"


def _save_train_state(path: str, model: FusionModel, opt: AdamW,
                      next_step: int, seed: int) -> None:
    arrays = {f"p!{p}": t.data for p, t in model.params.items()}
    arrays.update({f"o!{k}": v for k, v in opt.state_arrays().items()})
    arrays["next_step"] = np.array([float(next_step)])
    frozen = {f"p!{p}" for p, _ in model.params.items()
              if model.params.is_frozen(p)}
    save_arrays(path, arrays, seed=seed, frozen=frozen)


def _load_train_state(path: str, model: FusionModel, opt: AdamW) -> int:
    arrays, _, _, _ = load_arrays(path)
    for p, t in model.params.items():
        t.data = arrays[f"p!{p}"].copy()
    opt.load_state_arrays({k[2:]: v for k, v in arrays.items()
                           if k.startswith("o!")})
    return int(arrays["next_step"][0])


def meta_train(model: FusionModel, corpus: Corpus, cfg: MetaConfig,
               run_dir: str | None = None, resume: bool = False) -> dict:
    """Full outer loop. Mutates model.params in place; returns a report.

    With a run_dir, appends one JSONL row per step and checkpoints every
    cfg.checkpoint_every steps; resume picks up bit-exactly where the
    checkpoint left off (episode draws and dropout masks are keyed by
    step, so the continuation is the run that would have happened).
    """
    class_pool = corpus.split_classes(cfg.question_type, "meta_train")
    cache = None if model.train_encoder else FeatureCache(model, corpus)
    opt = AdamW(model.params, lr=cfg.outer_lr,
                weight_decay=cfg.outer_weight_decay)
    start = 0
    log_rows: list[dict] = []
    ckpt_path = log_path = None
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        ckpt_path = os.path.join(run_dir, CKPT_NAME)
        log_path = os.path.join(run_dir, LOG_NAME)
    if resume:
        if not (ckpt_path and os.path.exists(ckpt_path)):
            raise FileNotFoundError("resume requested but no checkpoint found")
        start = _load_train_state(ckpt_path, model, opt)

    for step in range(start, cfg.meta_train_steps):
        row = meta_train_step(model, corpus, opt, cfg, step, class_pool, cache)
        log_rows.append(row)
        if log_path:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        if ckpt_path and (step + 1) % cfg.checkpoint_every == 0:
            _save_train_state(ckpt_path, model, opt, step + 1, cfg.seed)
    if ckpt_path and cfg.meta_train_steps > start:
        _save_train_state(ckpt_path, model, opt, cfg.meta_train_steps, cfg.seed)

    losses = [r["meta_loss"] for r in log_rows]
    return {
        "steps_run": cfg.meta_train_steps - start,
        "first_loss": losses[0] if losses else None,
        "final_loss": losses[-1] if losses else None,
        "params_digest": model.params.digest(),
    }


def _query_nll(model: FusionModel, ps: ParameterSet, query: Batch) -> float:
    with no_grad():
        return float(task_loss(model, ps, query, EVAL_CTX).data)


def meta_test(model: FusionModel, corpus: Corpus, cfg: MetaConfig,
              n_episodes: int | None = None, split: str = "meta_test",
              finetune_steps: int | None = None, lead_keep=None,
              template_pool: str | None = None, params: ParameterSet | None = None,
              seed_tag: str = "metatest") -> dict:
    """Episodic evaluation: fine-tune on support, score the query set.

    Reports sequence metrics over all query pairs, the query NLL before
    and after adaptation, and the fraction of episodes the NLL improved.
    ``template_pool`` rephrases episodes from that pool ("unseen" asks
    the expression-shift question); ``lead_keep`` restricts the visible
    leads; ``params`` evaluates a parameter set other than the model's.
    """
    ps0 = params if params is not None else model.params
    n_episodes = cfg.meta_test_episodes if n_episodes is None else n_episodes
    finetune_steps = cfg.finetune_steps if finetune_steps is None else finetune_steps
    class_pool = corpus.split_classes(cfg.question_type, split)
    cache = None if model.train_encoder else FeatureCache(model, corpus)

    preds, golds = [], []
    rows = []
    for i in range(n_episodes):
        ep = sample_episode(corpus, class_pool, cfg.n_way, cfg.k_shot,
                            cfg.m_query, seed=stable_key(cfg.seed, seed_tag, i))
        if template_pool is not None:
            ep = rephrase_episode(corpus, ep, template_pool,
                                  seed=stable_key(cfg.seed, seed_tag, "re", i))
        support, query = episode_batches(model, corpus, cfg, ep, cache, lead_keep)
        ctx = DropoutCtx(seed=cfg.seed, step=1_000_000 + i, train=True)
        nll_pre = _query_nll(model, ps0, query)
        with Tape():
            adapted = inner_adapt(model, ps0, support, cfg, ctx,
                                  steps=finetune_steps, create_graph=False,
                                  tag=f"ft{i}/")
            adapted = adapted.clone()   # drop the tape, keep the values
        nll_post = _query_nll(model, adapted, query)
        answers = generate_answers(model, adapted, query,
                                   max_new=cfg.max_answer_tokens)
        ep_metrics = evaluate_pairs(answers, list(query.answers))
        preds.extend(answers)
        golds.extend(query.answers)
        rows.append({
            "episode": i,
            "classes": list(ep.class_ids),
            "overlap_accuracy": ep_metrics.overlap_accuracy,
            "bleu1": ep_metrics.bleu1,
            "rougeL_f1": ep_metrics.rougeL_f1,
            "query_nll_before": nll_pre,
            "query_nll_after": nll_post,
        })

    overall = evaluate_pairs(preds, golds)
    improved = [r["query_nll_after"] < r["query_nll_before"] for r in rows]
    return {
        "n_episodes": n_episodes,
        "overlap_accuracy": overall.overlap_accuracy,
        "bleu1": overall.bleu1,
        "rougeL_f1": overall.rougeL_f1,
        "query_nll_before": float(np.mean([r["query_nll_before"] for r in rows])),
        "query_nll_after": float(np.mean([r["query_nll_after"] for r in rows])),
        "nll_improved_fraction": float(np.mean(improved)),
        "episodes": rows,
    }


def supervised_baseline_train(model: FusionModel, corpus: Corpus,
                              cfg: MetaConfig, steps: int = 600,
                              batch_size: int = 32, lr: float = 1e-3) -> ParameterSet:
    """Non-episodic reference: pooled minibatch training on meta-train
    classes. Returns trained parameters; evaluate with meta_test(params=...).
    """
    from ..utils import stable_rng
    class_pool = corpus.split_classes(cfg.question_type, "meta_train")
    indices = [i for cid in class_pool for i in corpus.by_class[cid]]
    if not indices:
        raise ValueError("no meta-train triplets for baseline training")
    cache = None if model.train_encoder else FeatureCache(model, corpus)
    ps = model.params.clone()
    opt = AdamW(ps, lr=lr, weight_decay=cfg.outer_weight_decay)
    rng = stable_rng(cfg.seed, "baseline")
    for step in range(steps):
        pick = rng.choice(len(indices), size=min(batch_size, len(indices)),
                          replace=False)
        triplets = [corpus.triplets[indices[j]] for j in pick]
        batch = prepare_batch(model, corpus, triplets, cache, cfg.prompt_variant)
        ctx = DropoutCtx(seed=cfg.seed, step=step, train=True)
        with Tape():
            loss = task_loss(model, ps, batch, ctx, tag="base")
            grads = grad_params(loss, ps)
        opt.step(grads)
    return ps
