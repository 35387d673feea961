from .tokenizer import (
    BOS,
    EOS,
    PAD,
    SEP,
    SPECIAL_TOKENS,
    Tokenizer,
    TokenizerError,
    build_tokenizer,
    coverage_texts,
)
from .layers import (
    causal_mask,
    multi_head_attention,
    transformer_block,
)
from .encoder import (
    EncoderConfig,
    EncoderPretrainError,
    calibration_labels,
    encode_ecg,
    init_encoder,
    make_calibration_pool,
    pooled_features,
    pooling_matrix,
    pretrain_encoder,
    probe_detectability,
)
from .decoder import (
    DecoderConfig,
    decode_answer,
    init_decoder,
    lm_logits,
    lm_nll,
    next_token_arrays,
    pack_token_batch,
    perplexity,
    pretrain_lm,
    qa_pretraining_texts,
    sequence_rows,
    teacher_forced_logits,
)

__all__ = [
    "BOS", "EOS", "PAD", "SEP", "SPECIAL_TOKENS",
    "Tokenizer", "TokenizerError", "build_tokenizer", "coverage_texts",
    "causal_mask", "multi_head_attention", "transformer_block",
    "EncoderConfig", "EncoderPretrainError", "calibration_labels",
    "encode_ecg", "init_encoder", "make_calibration_pool", "pooled_features",
    "pooling_matrix", "pretrain_encoder", "probe_detectability",
    "DecoderConfig", "decode_answer", "init_decoder", "lm_logits", "lm_nll",
    "next_token_arrays", "pack_token_batch", "perplexity", "pretrain_lm",
    "qa_pretraining_texts", "sequence_rows", "teacher_forced_logits",
]
