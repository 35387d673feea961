"""The fused QA model: frozen backbones around a trainable mapper.

Everything lives in one ParameterSet whose freeze flags decide what
trains; by default that is the mapper alone. Feature tokens for frozen
encoders are memoised per (signal, lead subset) since they never change
during adaptation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import DropoutCtx, EVAL_CTX, ParameterSet, Tensor, cross_entropy_nll, no_grad
from ..backbones import (
    DecoderConfig,
    EncoderConfig,
    Tokenizer,
    decode_answer,
    encode_ecg,
    lm_logits,
    next_token_arrays,
    pack_token_batch,
    sequence_rows,
)
from ..data.corpus import Corpus
from ..data.questions import render_question
from ..data.signals import apply_lead_mask
from ..mapper import MapperConfig, map_prefix


@dataclass
class FusionModel:
    tokenizer: Tokenizer
    enc_cfg: EncoderConfig
    dec_cfg: DecoderConfig
    map_cfg: MapperConfig
    params: ParameterSet          # enc/* and dec/* frozen, map/* trainable
    train_encoder: bool = False   # when True, features are computed live

    def with_params(self, params: ParameterSet) -> "FusionModel":
        return FusionModel(self.tokenizer, self.enc_cfg, self.dec_cfg,
                           self.map_cfg, params, self.train_encoder)


def assemble_model(tokenizer: Tokenizer, enc_cfg: EncoderConfig,
                   enc_params: ParameterSet, dec_cfg: DecoderConfig,
                   dec_params: ParameterSet, map_cfg: MapperConfig,
                   map_params: ParameterSet,
                   train_encoder: bool = False) -> FusionModel:
    """Merge the three stages into one set; backbones arrive pretrained.

    The encoder is unfrozen only for the freezing ablation; the decoder
    is always kept frozen so answers must flow through the prefix.
    """
    ps = ParameterSet()
    for path, t in enc_params.items():
        ps.add(path, t.data.copy(), frozen=not train_encoder)
    for path, t in dec_params.items():
        ps.add(path, t.data.copy(), frozen=True)
    for path, t in map_params.items():
        ps.add(path, t.data.copy(), frozen=False)
    return FusionModel(tokenizer, enc_cfg, dec_cfg, map_cfg, ps,
                       train_encoder=train_encoder)


class FeatureCache:
    """Frozen-encoder feature tokens per (signal index, kept leads)."""

    def __init__(self, model: FusionModel, corpus: Corpus):
        self.model = model
        self.corpus = corpus
        self._store: dict[tuple, np.ndarray] = {}

    def features(self, signal_indices, lead_keep=None, batch: int = 64) -> np.ndarray:
        key_leads = tuple(sorted(lead_keep)) if lead_keep is not None else None
        missing = [i for i in signal_indices
                   if (int(i), key_leads) not in self._store]
        for lo in range(0, len(missing), batch):
            chunk = missing[lo:lo + batch]
            x = np.stack([self._signal(i, lead_keep) for i in chunk])
            with no_grad():
                toks = encode_ecg(self.model.params, self.model.enc_cfg, x)
            for j, i in enumerate(chunk):
                self._store[(int(i), key_leads)] = toks.data[j]
        return np.stack([self._store[(int(i), key_leads)] for i in signal_indices])

    def _signal(self, index: int, lead_keep) -> np.ndarray:
        sig = self.corpus.signal(int(index))
        if lead_keep is not None:
            sig = apply_lead_mask(sig, lead_keep)
        return sig.samples


@dataclass
class Batch:
    """One prepared task batch: features plus packed token arrays."""
    feats: np.ndarray             # [B, k_e, d_enc]
    tokens: np.ndarray            # [B, L] padded token rows
    targets: np.ndarray           # [B, M+L] next-token targets
    mask: np.ndarray              # [B, M+L] answer-position weights
    questions: list[str]          # rendered prompts
    answers: list[str]            # gold answer strings
    signals: np.ndarray | None = None   # [B, T, C], only when encoding live

    @property
    def size(self) -> int:
        return len(self.tokens)


def prepare_batch(model: FusionModel, corpus: Corpus, triplets,
                  cache: FeatureCache | None = None,
                  prompt_variant: str = "qa_scaffold",
                  lead_keep=None) -> Batch:
    questions = [render_question(t.question, prompt_variant) for t in triplets]
    answers = [t.answer for t in triplets]
    rows, starts = [], []
    for q, a in zip(questions, answers):
        row, answer_from = sequence_rows(model.tokenizer, q, a)
        rows.append(row)
        starts.append(answer_from)
    tokens = pack_token_batch(rows)
    targets, mask = next_token_arrays(model.dec_cfg, tokens,
                                      answer_from=np.asarray(starts))

    indices = [t.signal_index for t in triplets]
    signals = None
    if model.train_encoder:
        sigs = []
        for i in indices:
            sig = corpus.signal(int(i))
            if lead_keep is not None:
                sig = apply_lead_mask(sig, lead_keep)
            sigs.append(sig.samples)
        signals = np.stack(sigs)
        feats = np.zeros((len(triplets), model.enc_cfg.n_tokens, model.enc_cfg.d_enc))
    else:
        if cache is None:
            cache = FeatureCache(model, corpus)
        feats = cache.features(indices, lead_keep=lead_keep)
    return Batch(feats=feats, tokens=tokens, targets=targets, mask=mask,
                 questions=questions, answers=answers, signals=signals)


def task_loss(model: FusionModel, ps: ParameterSet, batch: Batch,
              ctx: DropoutCtx = EVAL_CTX, tag: str = "task") -> Tensor:
    """Mean NLL of the answer tokens (plus <eos>) under teacher forcing."""
    if model.train_encoder and batch.signals is not None:
        feats = encode_ecg(ps, model.enc_cfg, batch.signals)
    else:
        feats = Tensor(batch.feats)
    prefix = map_prefix(ps, model.map_cfg, feats, ctx=ctx, tag=tag)
    logits = lm_logits(ps, model.dec_cfg, prefix, batch.tokens)
    nll = cross_entropy_nll(logits, batch.targets, batch.mask)
    return nll * Tensor(1.0 / batch.mask.sum())


def generate_answers(model: FusionModel, ps: ParameterSet, batch: Batch,
                     max_new: int = 8) -> list[str]:
    """Greedy answers for every question in the batch (eval mode)."""
    with no_grad():
        if model.train_encoder and batch.signals is not None:
            feats = encode_ecg(ps, model.enc_cfg, batch.signals)
        else:
            feats = Tensor(batch.feats)
        prefix = map_prefix(ps, model.map_cfg, feats, ctx=EVAL_CTX)
        q_rows = [model.tokenizer.encode(q) for q in batch.questions]
        id_rows = decode_answer(ps, model.dec_cfg, prefix, q_rows, max_new=max_new)
    return [model.tokenizer.decode(r) for r in id_rows]
