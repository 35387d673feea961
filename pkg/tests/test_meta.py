"""Meta-learner mechanics on a deliberately tiny fusion model.

Nothing here needs trained backbones — adaptation arithmetic, resume
behavior, and freezing contracts are properties of the machinery, so the
model is kept small enough that every test runs in seconds.
"""

import os

import numpy as np
import pytest

from ecgmeta.autodiff import DropoutCtx, Tape, grad_params
from ecgmeta.backbones import (DecoderConfig, EncoderConfig, build_tokenizer,
                               init_decoder, init_encoder)
from ecgmeta.data import GeneratorConfig, generate_corpus, sample_episode
from ecgmeta.mapper import MapperConfig, init_mapper
from ecgmeta.meta import (FeatureCache, MetaConfig, assemble_model,
                          inner_adapt, meta_test, meta_train,
                          supervised_baseline_train)
from ecgmeta.meta.learner import episode_batches
from ecgmeta.utils import stable_key

TINY_GEN = GeneratorConfig(seed=5, count_verify=9, count_choose=6,
                           count_query=8, max_pairs_per_family=2)
TINY_ENC = EncoderConfig(channels=(6, 6), kernels=(9, 7), strides=(6, 5),
                         n_tokens=4, n_heads=2, ffn_mult=2)
TINY_META = MetaConfig(seed=0, n_way=2, k_shot=2, m_query=3, inner_steps=2,
                       meta_batch=2, meta_train_steps=3, meta_test_episodes=4,
                       finetune_steps=3, checkpoint_every=2)


@pytest.fixture(scope="module")
def tiny_corpus():
    return generate_corpus(TINY_GEN)


def tiny_model(corpus, variant="linear", seed=0, train_encoder=False):
    tok = build_tokenizer(corpus)
    dec_cfg = DecoderConfig(vocab_size=tok.vocab_size, d_model=16, depth=1,
                            n_heads=2, ffn_mult=2, max_len=64, m_prefix=4)
    map_cfg = MapperConfig(variant=variant, d_in=TINY_ENC.d_enc, k_e=4,
                           m_prefix=4, d_model=16, n_layers=2, n_heads=2,
                           mlp_hidden=8)
    return assemble_model(tok, TINY_ENC, init_encoder(TINY_ENC, seed),
                          dec_cfg, init_decoder(dec_cfg, seed),
                          map_cfg, init_mapper(map_cfg, seed),
                          train_encoder=train_encoder)


def support_batch(model, corpus, cfg=TINY_META):
    pool = corpus.split_classes(cfg.question_type, "meta_train")
    ep = sample_episode(corpus, pool, cfg.n_way, cfg.k_shot, cfg.m_query,
                        seed=stable_key(0, "tinytest", 0))
    return episode_batches(model, corpus, cfg, ep, FeatureCache(model, corpus))


# ---------------------------------------------------------------------
# inner loop
# ---------------------------------------------------------------------

def test_inner_adapt_zero_lr_is_identity(tiny_corpus):
    model = tiny_model(tiny_corpus)
    support, _ = support_batch(model, tiny_corpus)
    cfg = TINY_META.replace(inner_lr=0.0)
    with Tape():
        adapted = inner_adapt(model, model.params, support, cfg,
                              DropoutCtx(seed=0, step=0, train=False))
    for name, t in model.params.unfrozen_items():
        assert np.allclose(adapted[name].data, t.data, atol=1e-15)


def test_inner_adapt_single_step_matches_manual_sgd(tiny_corpus):
    from ecgmeta.meta.model import task_loss
    model = tiny_model(tiny_corpus)
    support, _ = support_batch(model, tiny_corpus)
    cfg = TINY_META.replace(inner_steps=1, second_order=False)
    ctx = DropoutCtx(seed=0, step=0, train=False)

    with Tape():
        loss = task_loss(model, model.params, support, ctx, tag="inner0")
        grads = grad_params(loss, model.params)
    with Tape():
        adapted = inner_adapt(model, model.params, support, cfg, ctx)

    for name, g in grads.items():
        manual = model.params[name].data - cfg.inner_lr * g.data
        assert np.allclose(adapted[name].data, manual, atol=1e-12)


def test_inner_adapt_never_touches_frozen_params(tiny_corpus):
    model = tiny_model(tiny_corpus)
    support, _ = support_batch(model, tiny_corpus)
    with Tape():
        adapted = inner_adapt(model, model.params, support, TINY_META,
                              DropoutCtx(seed=0, step=0, train=True))
    for name, t in model.params.items():
        if model.params.is_frozen(name):
            assert adapted[name] is t


def test_second_order_and_first_order_meta_gradients_differ(tiny_corpus):
    from ecgmeta.meta.model import task_loss
    model = tiny_model(tiny_corpus)
    support, query = support_batch(model, tiny_corpus)
    ctx = DropoutCtx(seed=0, step=0, train=False)

    def meta_grads(second_order):
        with Tape():
            adapted = inner_adapt(model, model.params, support,
                                  TINY_META, ctx, create_graph=second_order)
            qloss = task_loss(model, adapted, query, ctx, tag="q")
            return {p: g.data.copy()
                    for p, g in grad_params(qloss, model.params).items()}

    g2, g1 = meta_grads(True), meta_grads(False)
    assert set(g2) == set(g1)
    gap = max(float(np.max(np.abs(g2[p] - g1[p]))) for p in g2)
    assert gap > 1e-8


# ---------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------

def test_meta_train_keeps_backbones_frozen(tiny_corpus):
    model = tiny_model(tiny_corpus, variant="attention")
    before = {p: t.data.copy() for p, t in model.params.items()
              if model.params.is_frozen(p)}
    mapper_before = {p: t.data.copy() for p, t in model.params.unfrozen_items()}
    meta_train(model, tiny_corpus, TINY_META)
    for name, arr in before.items():
        assert np.array_equal(model.params[name].data, arr)
    assert any(not np.array_equal(model.params[p].data, arr)
               for p, arr in mapper_before.items())


def test_unfrozen_encoder_actually_trains(tiny_corpus):
    model = tiny_model(tiny_corpus, train_encoder=True)
    enc_before = {p: t.data.copy() for p, t in model.params.items()
                  if p.startswith("enc/")}
    meta_train(model, tiny_corpus, TINY_META.replace(meta_train_steps=2))
    assert any(not np.array_equal(model.params[p].data, arr)
               for p, arr in enc_before.items())
    # the decoder stays frozen in every mode
    assert all(model.params.is_frozen(p) for p, _ in model.params.items()
               if p.startswith("dec/"))


def test_meta_train_resume_is_bit_exact(tiny_corpus, tmp_path):
    cfg = TINY_META.replace(meta_train_steps=4)

    one_shot = tiny_model(tiny_corpus)
    meta_train(one_shot, tiny_corpus, cfg, run_dir=str(tmp_path / "a"))

    two_phase = tiny_model(tiny_corpus)
    meta_train(two_phase, tiny_corpus, cfg.replace(meta_train_steps=2),
               run_dir=str(tmp_path / "b"))
    report = meta_train(two_phase, tiny_corpus, cfg,
                        run_dir=str(tmp_path / "b"), resume=True)

    assert report["steps_run"] == 2
    assert one_shot.params.digest() == two_phase.params.digest()


def test_meta_train_resume_requires_checkpoint(tiny_corpus, tmp_path):
    model = tiny_model(tiny_corpus)
    with pytest.raises(FileNotFoundError):
        meta_train(model, tiny_corpus, TINY_META,
                   run_dir=str(tmp_path / "none"), resume=True)


def test_meta_train_writes_log_rows(tiny_corpus, tmp_path):
    model = tiny_model(tiny_corpus)
    meta_train(model, tiny_corpus, TINY_META, run_dir=str(tmp_path))
    log = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert len(log) == TINY_META.meta_train_steps


# ---------------------------------------------------------------------
# evaluation and baseline
# ---------------------------------------------------------------------

def test_meta_test_shape_and_determinism(tiny_corpus):
    model = tiny_model(tiny_corpus)
    a = meta_test(model, tiny_corpus, TINY_META, n_episodes=3, finetune_steps=0)
    b = meta_test(model, tiny_corpus, TINY_META, n_episodes=3, finetune_steps=0)
    assert a == b
    assert a["n_episodes"] == 3 and len(a["episodes"]) == 3
    for key in ("overlap_accuracy", "bleu1", "rougeL_f1", "query_nll_before",
                "query_nll_after", "nll_improved_fraction"):
        assert isinstance(a[key], float)
    # no adaptation: the query NLL cannot move
    assert a["query_nll_before"] == a["query_nll_after"]


def test_meta_test_uses_held_out_classes_only(tiny_corpus):
    model = tiny_model(tiny_corpus)
    res = meta_test(model, tiny_corpus, TINY_META, n_episodes=4,
                    finetune_steps=0)
    test_pool = set(tiny_corpus.split_classes("verify", "meta_test"))
    for row in res["episodes"]:
        assert set(row["classes"]) <= test_pool


def test_baseline_training_moves_only_the_mapper(tiny_corpus):
    model = tiny_model(tiny_corpus)
    trained = supervised_baseline_train(model, tiny_corpus, TINY_META,
                                        steps=5, batch_size=8)
    assert trained is not model.params
    for name, t in model.params.items():
        if model.params.is_frozen(name):
            assert np.array_equal(trained[name].data, t.data)
    assert any(not np.array_equal(trained[p].data, model.params[p].data)
               for p, _ in model.params.unfrozen_items())


def test_adaptation_lowers_query_nll_on_tiny_model(tiny_corpus):
    """Even untrained, a few support-set steps should fit the episode."""
    model = tiny_model(tiny_corpus)
    res = meta_test(model, tiny_corpus, TINY_META, n_episodes=3,
                    finetune_steps=5)
    assert res["query_nll_after"] < res["query_nll_before"]