"""Tokenizer, ECG encoder, and decoder LM contracts."""

import numpy as np
import pytest

from ecgmeta.autodiff import Tape, Tensor, grad_params, tsum
from ecgmeta.backbones import (
    DecoderConfig,
    EncoderConfig,
    Tokenizer,
    TokenizerError,
    build_tokenizer,
    coverage_texts,
    decode_answer,
    encode_ecg,
    init_decoder,
    init_encoder,
    lm_logits,
    lm_nll,
    next_token_arrays,
    pack_token_batch,
    pooling_matrix,
    qa_pretraining_texts,
    sequence_rows,
)
from ecgmeta.backbones.tokenizer import BOS, EOS, PAD, SPECIAL_TOKENS
from ecgmeta.data import render_question
from ecgmeta.utils import stable_rng

from helpers import fd_gradient, rel_err


# ---------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------

def test_tokenizer_round_trip(default_corpus):
    tok = build_tokenizer(default_corpus)
    for text in coverage_texts(default_corpus)[:50]:
        assert tok.decode(tok.encode(text)) == text


def test_tokenizer_rejects_oov():
    tok = Tokenizer.from_texts(["yes no maybe"])
    with pytest.raises(TokenizerError):
        tok.encode("definitely")


def test_tokenizer_rejects_reserved_words():
    with pytest.raises(TokenizerError):
        Tokenizer.from_texts([f"a {SPECIAL_TOKENS[0]} b"])


def test_tokenizer_save_load_round_trip(tmp_path):
    tok = Tokenizer.from_texts(["is sinus rhythm present", "yes", "no"])
    path = tmp_path / "vocab.txt"
    tok.save(path)
    assert Tokenizer.load(path).vocab == tok.vocab


def test_tokenizer_decode_checks_range():
    tok = Tokenizer.from_texts(["yes"])
    with pytest.raises(TokenizerError):
        tok.decode([tok.vocab_size])


def test_corpus_vocabulary_covers_all_questions_and_answers(default_corpus):
    tok = build_tokenizer(default_corpus)
    for t in default_corpus.triplets[::37]:
        tok.encode(t.answer)


# ---------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------

TINY_ENC = EncoderConfig(t_steps=120, n_leads=3, channels=(6, 6),
                         kernels=(9, 7), strides=(4, 3), n_tokens=4,
                         n_heads=2)


def test_encoder_output_shape():
    ps = init_encoder(TINY_ENC, seed=1)
    x = stable_rng(0, "enc", "x").standard_normal((5, 120, 3))
    out = encode_ecg(ps, TINY_ENC, x)
    assert out.shape == (5, TINY_ENC.n_tokens, TINY_ENC.d_enc)


def test_pooling_matrix_partitions_unity():
    pool = pooling_matrix(17, 4)
    assert pool.shape == (4, 17)
    assert np.allclose(pool.sum(axis=1), 1.0)
    # every input position feeds exactly one output token
    assert np.all((pool > 0).sum(axis=0) == 1)


def test_encoder_init_is_deterministic_and_freezable():
    a = init_encoder(TINY_ENC, seed=3)
    b = init_encoder(TINY_ENC, seed=3, frozen=True)
    assert a.digest() == b.digest()
    assert not any(a.is_frozen(p) for p, _ in a.items())
    assert all(b.is_frozen(p) for p, _ in b.items())
    assert init_encoder(TINY_ENC, seed=4).digest() != a.digest()


def test_encoder_gradient_matches_finite_differences():
    ps = init_encoder(TINY_ENC, seed=2)
    x = stable_rng(1, "enc", "fd").standard_normal((2, 120, 3))
    r = stable_rng(2, "enc", "fd").standard_normal(
        (2, TINY_ENC.n_tokens, TINY_ENC.d_enc))
    name = "enc/conv0/w"

    with Tape():
        loss = tsum(encode_ecg(ps, TINY_ENC, x) * Tensor(r))
        grads = grad_params(loss, ps)

    w0 = ps[name].data.copy()

    def f(w):
        ps[name].data[...] = w
        out = float(tsum(encode_ecg(ps, TINY_ENC, x) * Tensor(r)).data)
        ps[name].data[...] = w0
        return out

    assert rel_err(grads[name].data, fd_gradient(f, w0)) < 1e-4


def test_pretrained_encoder_separates_every_attribute(backbones):
    rep = backbones.enc_report
    assert rep["min_probe_accuracy"] >= 0.9
    assert all(v >= 0.9 for v in rep["probe_accuracy"].values())


def test_pretrained_encoder_params_are_frozen(backbones):
    assert all(backbones.enc_params.is_frozen(p)
               for p, _ in backbones.enc_params.items())


# ---------------------------------------------------------------------
# decoder
# ---------------------------------------------------------------------

TINY_DEC = DecoderConfig(vocab_size=11, d_model=16, depth=2, n_heads=2,
                         ffn_mult=2, max_len=32, m_prefix=3)


def _tiny_dec():
    return init_decoder(TINY_DEC, seed=0)


def test_decoder_causality():
    """Changing a later token must not move logits at earlier positions."""
    ps = _tiny_dec()
    tokens = np.array([[BOS, 5, 6, 7, 8]])
    base = lm_logits(ps, TINY_DEC, None, tokens).data
    edited = tokens.copy()
    edited[0, 4] = 9
    out = lm_logits(ps, TINY_DEC, None, edited).data
    cut = TINY_DEC.m_prefix + 4
    assert np.allclose(out[:, :cut], base[:, :cut], atol=1e-12)
    assert not np.allclose(out[:, cut:], base[:, cut:])


def test_decoder_padding_is_inert():
    ps = _tiny_dec()
    short = np.array([[BOS, 5, 6]])
    padded = np.array([[BOS, 5, 6, PAD, PAD]])
    a = lm_logits(ps, TINY_DEC, None, short).data
    b = lm_logits(ps, TINY_DEC, None, padded).data
    assert np.allclose(a, b[:, : a.shape[1]], atol=1e-12)


def test_prefix_changes_logits():
    ps = _tiny_dec()
    tokens = np.array([[BOS, 5, 6]])
    prefix = Tensor(stable_rng(0, "dec", "pfx").standard_normal(
        (1, TINY_DEC.m_prefix, TINY_DEC.d_model)))
    a = lm_logits(ps, TINY_DEC, None, tokens).data
    b = lm_logits(ps, TINY_DEC, prefix, tokens).data
    assert not np.allclose(a, b)


def test_next_token_arrays_hand_example():
    tokens = np.array([[BOS, 5, 6, EOS, PAD]])
    targets, mask = next_token_arrays(TINY_DEC, tokens)
    m = TINY_DEC.m_prefix
    # position m+j-1 predicts tokens[:, j]; PAD is never a target
    assert targets[0, m + 0] == 5
    assert targets[0, m + 1] == 6
    assert targets[0, m + 2] == EOS
    assert mask[0, m + 0] == mask[0, m + 1] == mask[0, m + 2] == 1.0
    assert mask[0, m + 3] == 0.0
    assert mask[0, :m].sum() == 0.0


def test_answer_mask_skips_question_positions():
    tokens = np.array([[BOS, 4, 5, 6, EOS]])
    _, mask = next_token_arrays(TINY_DEC, tokens,
                                answer_from=np.array([3]))
    m = TINY_DEC.m_prefix
    assert mask[0, m + 0] == 0.0 and mask[0, m + 1] == 0.0
    assert mask[0, m + 2] == 1.0 and mask[0, m + 3] == 1.0


def test_decode_answer_greedy_is_deterministic_and_legal():
    ps = _tiny_dec()
    q_rows = [[5, 6], [7]]
    a = decode_answer(ps, TINY_DEC, None, q_rows, max_new=6)
    b = decode_answer(ps, TINY_DEC, None, q_rows, max_new=6)
    assert a == b
    for row in a:
        assert len(row) <= 6
        assert all(0 <= t < TINY_DEC.vocab_size for t in row)
        assert EOS not in row and PAD not in row


def test_lm_nll_gradient_matches_finite_differences():
    ps = _tiny_dec()
    tokens = np.array([[BOS, 5, 6, EOS], [BOS, 7, EOS, PAD]])
    name = "dec/head/w"
    with Tape():
        loss = lm_nll(ps, TINY_DEC, tokens)
        grads = grad_params(loss, ps)
    w0 = ps[name].data.copy()

    def f(w):
        ps[name].data[...] = w
        out = float(lm_nll(ps, TINY_DEC, tokens).data)
        ps[name].data[...] = w0
        return out

    assert rel_err(grads[name].data, fd_gradient(f, w0)) < 1e-4


# ---------------------------------------------------------------------
# pretraining contracts (shared session backbones)
# ---------------------------------------------------------------------

def test_lm_pretraining_texts_cover_corpus(default_corpus):
    texts = qa_pretraining_texts(default_corpus)
    assert len(texts) > 100
    assert all(isinstance(q, str) and isinstance(a, str) for q, a in texts)


def test_lm_pretraining_improves_holdout_perplexity(backbones):
    rep = backbones.lm_report
    assert rep["holdout_ppl_trained"] * 5 <= rep["holdout_ppl_untrained"]


def test_trained_lm_answers_stay_in_format_under_noise_prefix(
        default_corpus, backbones):
    """Garbage in the prefix slots must not knock answers out of format.

    The mapper starts untrained, so the LM will see arbitrary prefix
    content; verify questions should still draw yes/no almost always.
    """
    tok, cfg, ps = backbones.tokenizer, backbones.dec_cfg, backbones.dec_params
    questions = []
    for t in default_corpus.triplets:
        if t.class_id.startswith("verify:") and t.question not in questions:
            questions.append(t.question)
        if len(questions) == 6:
            break
    rows = [tok.encode(render_question(q, "qa_scaffold")) for q in questions]
    rng = stable_rng(0, "format", "noise")
    ok = total = 0
    for trial in range(8):
        prefix = Tensor(rng.uniform(0.2, 1.8) * rng.standard_normal(
            (len(rows), cfg.m_prefix, cfg.d_model)))
        for out in decode_answer(ps, cfg, prefix, rows):
            ok += tok.decode(out) in ("yes", "no")
            total += 1
    assert ok / total >= 0.9


def test_sequence_rows_layout(default_corpus, backbones):
    tok = backbones.tokenizer
    t = default_corpus.triplets[0]
    row, answer_from = sequence_rows(tok, t.question, t.answer)
    assert row[0] == BOS and row[-1] == EOS
    assert tok.decode(row) == f"{t.question} {t.answer}"
    assert tok.decode(row[answer_from:]) == t.answer


def test_pack_token_batch_pads_at_end():
    packed = pack_token_batch([[5, 6, 7], [8]])
    assert packed.shape == (2, 3)
    assert packed[1, 1] == PAD and packed[1, 2] == PAD
