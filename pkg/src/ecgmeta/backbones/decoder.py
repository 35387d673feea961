"""Decoder-only language model with a reserved conditioning prefix.

Sequence layout for one sample (M = prefix length):

    pos 0..M-1   prefix embeddings (zeros or random noise at pretraining
                 time; the fusion mapper writes its output here later)
    pos M        <bos>
    pos M+1..    question tokens, then answer tokens, then <eos>

The model is trained next-token style; batches are padded at the *end*
only so the causal mask alone keeps padding out of every attention
window. The LM is pretrained on rendered question/answer text and then
frozen — few-shot adaptation happens entirely in the prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    AdamW,
    ParameterSet,
    Tape,
    Tensor,
    concat,
    cross_entropy_nll,
    embedding,
    grad_params,
    linear,
    no_grad,
    slice_axis,
    uniform_init,
)
from ..utils import stable_rng
from .layers import (
    add_layer_norm,
    add_linear,
    add_transformer_block,
    apply_layer_norm,
    causal_mask,
    transformer_block,
)
from .tokenizer import BOS, EOS, PAD, Tokenizer


@dataclass(frozen=True)
class DecoderConfig:
    vocab_size: int
    d_model: int = 64
    depth: int = 2
    n_heads: int = 4
    ffn_mult: int = 4
    max_len: int = 64
    m_prefix: int = 8


def init_decoder(cfg: DecoderConfig, seed: int, frozen: bool = False) -> ParameterSet:
    rng = stable_rng(seed, "init", "decoder")
    ps = ParameterSet()
    ps.add("dec/tok_emb", uniform_init(rng, (cfg.vocab_size, cfg.d_model), fan_in=cfg.d_model),
           frozen=frozen)
    ps.add("dec/pos_emb", uniform_init(rng, (cfg.max_len, cfg.d_model), fan_in=cfg.d_model),
           frozen=frozen)
    for i in range(cfg.depth):
        add_transformer_block(ps, rng, f"dec/blk{i}", cfg.d_model,
                              ffn_mult=cfg.ffn_mult, frozen=frozen)
    add_layer_norm(ps, "dec/lnf", cfg.d_model, frozen=frozen)
    add_linear(ps, rng, "dec/head", cfg.d_model, cfg.vocab_size, frozen=frozen)
    return ps


# --- batched forward --------------------------------------------------------

def pack_token_batch(rows: list[list[int]]) -> np.ndarray:
    """Right-pad token lists with PAD into one int array [B, L_max]."""
    if not rows:
        raise ValueError("empty token batch")
    l_max = max(len(r) for r in rows)
    out = np.full((len(rows), l_max), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def lm_logits(ps: ParameterSet, cfg: DecoderConfig, prefix: Tensor | None,
              tokens: np.ndarray) -> Tensor:
    """Logits over the full packed sequence.

    prefix: [B, M, d_model] or None for the all-zero prefix;
    tokens: int [B, L]. Returns [B, M+L, vocab]. Positions holding padding
    produce logits too — callers mask them out of any loss.
    """
    b, l = tokens.shape
    m = cfg.m_prefix
    if m + l > cfg.max_len:
        raise ValueError(f"sequence length {m + l} exceeds max_len {cfg.max_len}")
    tok = embedding(ps["dec/tok_emb"], tokens)
    if prefix is None:
        prefix = Tensor(np.zeros((b, m, cfg.d_model)))
    elif prefix.shape != (b, m, cfg.d_model):
        raise ValueError(f"prefix shape {prefix.shape} != {(b, m, cfg.d_model)}")
    h = concat([prefix, tok], axis=1)
    h = h + slice_axis(ps["dec/pos_emb"], 0, 0, m + l)
    mask = causal_mask(m + l)
    for i in range(cfg.depth):
        h = transformer_block(ps, f"dec/blk{i}", h, cfg.n_heads, mask)
    h = apply_layer_norm(ps, "dec/lnf", h)
    return linear(h, ps["dec/head/w"], ps["dec/head/b"])


def next_token_arrays(cfg: DecoderConfig, tokens: np.ndarray,
                      answer_from: np.ndarray | None = None):
    """Targets and loss mask aligned with lm_logits positions.

    Position M+j-1 predicts tokens[:, j]. The mask covers real (non-pad)
    tokens from j=1 on; when ``answer_from`` gives the index of the first
    answer token per row, the mask is restricted to j >= answer_from
    (the answer plus its <eos>).
    """
    b, l = tokens.shape
    m = cfg.m_prefix
    targets = np.zeros((b, m + l), dtype=np.int64)
    mask = np.zeros((b, m + l))
    for j in range(1, l):
        targets[:, m + j - 1] = tokens[:, j]
        valid = tokens[:, j] != PAD
        if answer_from is not None:
            valid = valid & (j >= answer_from)
        mask[:, m + j - 1] = valid.astype(np.float64)
    return targets, mask


def sequence_rows(tokenizer: Tokenizer, question: str, answer: str):
    """(tokens, answer_from) for one rendered question/answer pair."""
    q = tokenizer.encode(question)
    a = tokenizer.encode(answer)
    return [BOS] + q + a + [EOS], 1 + len(q)


def teacher_forced_logits(ps: ParameterSet, cfg: DecoderConfig,
                          prefix: Tensor | None, q_ids: list[int],
                          a_ids: list[int]) -> Tensor:
    """[len(a_ids)+1, vocab] logits at the positions that predict each
    answer token and the closing <eos>. Single sample."""
    tokens = np.asarray([[BOS] + q_ids + a_ids + [EOS]], dtype=np.int64)
    logits = lm_logits(ps, cfg, prefix, tokens)
    start = cfg.m_prefix + len(q_ids)          # predicts a_ids[0]
    sliced = slice_axis(logits, 1, start, start + len(a_ids) + 1)
    from ..autodiff import reshape
    return reshape(sliced, (len(a_ids) + 1, cfg.vocab_size))


def decode_answer(ps: ParameterSet, cfg: DecoderConfig, prefix: Tensor | None,
                  q_rows: list[list[int]], max_new: int = 8) -> list[list[int]]:
    """Greedy decoding for a batch of questions; returns answer ids only.

    Stops each row at <eos> (dropped from the output). Rows are padded to
    a common length during the loop; finished rows receive PAD which the
    causal mask plus end-padding keep inert.
    """
    rows = [[BOS] + q for q in q_rows]
    done = [False] * len(rows)
    answers: list[list[int]] = [[] for _ in rows]
    with no_grad():
        for _ in range(max_new):
            tokens = pack_token_batch(rows)
            logits = lm_logits(ps, cfg, prefix, tokens).data
            for i, row in enumerate(rows):
                if done[i]:
                    row.append(PAD)
                    continue
                pos = cfg.m_prefix + len(row) - 1   # predicts the next token
                nxt = int(np.argmax(logits[i, pos]))
                if nxt == EOS:
                    done[i] = True
                    row.append(PAD)
                else:
                    answers[i].append(nxt)
                    row.append(nxt)
            if all(done):
                break
    return answers


# --- pretraining -------------------------------------------------------------

def lm_nll(ps: ParameterSet, cfg: DecoderConfig, tokens: np.ndarray,
           prefix: Tensor | None = None) -> Tensor:
    """Token-mean next-token NLL over all real positions."""
    targets, mask = next_token_arrays(cfg, tokens)
    logits = lm_logits(ps, cfg, prefix, tokens)
    return cross_entropy_nll(logits, targets, mask) * Tensor(1.0 / max(1.0, mask.sum()))


def perplexity(ps: ParameterSet, cfg: DecoderConfig, token_rows, batch: int = 32) -> float:
    total, count = 0.0, 0.0
    with no_grad():
        for lo in range(0, len(token_rows), batch):
            tokens = pack_token_batch(token_rows[lo:lo + batch])
            targets, mask = next_token_arrays(cfg, tokens)
            nll = cross_entropy_nll(lm_logits(ps, cfg, None, tokens), targets, mask)
            total += float(nll.data)
            count += mask.sum()
    return float(np.exp(total / max(1.0, count)))


def pretrain_lm(tokenizer: Tokenizer, texts: list[tuple[str, str]], cfg: DecoderConfig,
                seed: int, steps: int = 500, batch: int = 32, lr: float = 3e-3,
                holdout_every: int = 10, noise_prefix_rate: float = 0.5,
                noise_prefix_scale: float = 2.0):
    """Pretrain on (question, answer) text pairs and freeze the result.

    Half the batches (``noise_prefix_rate``) see a random Gaussian prefix
    instead of the zero one, with a scale drawn up to
    ``noise_prefix_scale``. The text conditional must hold no matter what
    occupies the prefix slots, so answers stay within the answer
    vocabulary even when an untrained mapper later writes garbage there;
    informative prefixes remain free to steer the model once the mapper
    trains. Every ``holdout_every``-th pair is held out for the
    perplexity report; returns (frozen params, report) where the report
    carries held-out perplexity before and after training.
    """
    rows = [sequence_rows(tokenizer, q, a)[0] for q, a in texts]
    held = rows[::holdout_every]
    train = [r for i, r in enumerate(rows) if i % holdout_every != 0]
    if not train or not held:
        raise ValueError("not enough text pairs to split a holdout")

    ps = init_decoder(cfg, seed)
    ppl_before = perplexity(ps, cfg, held)
    opt = AdamW(ps, lr=lr, weight_decay=0.0)
    rng = stable_rng(seed, "pretrain", "decoder")
    noise = stable_rng(seed, "pretrain", "decoder", "prefix")
    losses = []
    for _ in range(steps):
        idx = rng.integers(0, len(train), size=min(batch, len(train)))
        tokens = pack_token_batch([train[i] for i in idx])
        prefix = None
        if noise.random() < noise_prefix_rate:
            scale = noise.uniform(0.0, noise_prefix_scale)
            prefix = Tensor(scale * noise.standard_normal(
                (len(idx), cfg.m_prefix, cfg.d_model)))
        with Tape():
            loss = lm_nll(ps, cfg, tokens, prefix=prefix)
            grads = grad_params(loss, ps)
        opt.step(grads)
        losses.append(float(loss.data))
    ppl_after = perplexity(ps, cfg, held)

    frozen = ParameterSet()
    for path, t in ps.items():
        frozen.add(path, t.data.copy(), frozen=True)
    report = {
        "holdout_ppl_untrained": ppl_before,
        "holdout_ppl_trained": ppl_after,
        "ppl_improvement": ppl_before / ppl_after,
        "n_train_texts": len(train),
        "n_holdout_texts": len(held),
        "steps": steps,
        "final_loss": losses[-1] if losses else None,
        "digest": frozen.digest(),
    }
    return frozen, report


def qa_pretraining_texts(corpus) -> list[tuple[str, str]]:
    """Rendered (question, answer) pairs covering all templates and variants."""
    from ..data.corpus import build_classes
    from ..data.questions import PROMPT_VARIANTS, instantiate, paraphrase_pool, render_question

    pairs = []
    for cls in build_classes(corpus.config):
        arg = cls.attributes if cls.question_type == "choose" else cls.attributes[0]
        for pid in paraphrase_pool(cls.question_type, arg, "all"):
            q = instantiate(cls.question_type, arg, pid)
            for variant in PROMPT_VARIANTS:
                pairs.append((render_question(q, variant), cls.answer))
    return pairs
