from types import SimpleNamespace

import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def default_corpus():
    """Full-size corpus at seed 0: the one every experiment starts from."""
    from ecgmeta.data import GeneratorConfig, generate_corpus
    return generate_corpus(GeneratorConfig(seed=0))


@pytest.fixture(scope="session")
def backbones(default_corpus):
    """Pretrained frozen backbones over the session corpus.

    Expensive (about a minute for the encoder), so everything that needs
    trained weights shares this one instance.
    """
    from ecgmeta.backbones import (DecoderConfig, EncoderConfig,
                                   build_tokenizer, pretrain_encoder,
                                   pretrain_lm, qa_pretraining_texts)
    tokenizer = build_tokenizer(default_corpus)
    enc_cfg = EncoderConfig()
    enc_params, enc_report = pretrain_encoder(enc_cfg, seed=0)
    dec_cfg = DecoderConfig(vocab_size=tokenizer.vocab_size)
    dec_params, lm_report = pretrain_lm(
        tokenizer, qa_pretraining_texts(default_corpus), dec_cfg, seed=0)
    return SimpleNamespace(tokenizer=tokenizer, enc_cfg=enc_cfg,
                           enc_params=enc_params, enc_report=enc_report,
                           dec_cfg=dec_cfg, dec_params=dec_params,
                           lm_report=lm_report)
