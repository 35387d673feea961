"""Transformer building blocks shared by the encoder, decoder and mapper."""

from __future__ import annotations

import numpy as np

from ..autodiff import (
    ParameterSet,
    Tensor,
    gelu,
    layer_norm,
    linear,
    matmul,
    mul,
    reshape,
    softmax,
    swap_last,
    transpose,
    uniform_init,
)

NEG_INF = -1e9


def add_linear(ps: ParameterSet, rng, path: str, d_in: int, d_out: int,
               frozen: bool = False) -> None:
    ps.add(f"{path}/w", uniform_init(rng, (d_in, d_out)), frozen=frozen)
    ps.add(f"{path}/b", np.zeros(d_out), frozen=frozen)


def add_layer_norm(ps: ParameterSet, path: str, d: int, frozen: bool = False) -> None:
    ps.add(f"{path}/g", np.ones(d), frozen=frozen)
    ps.add(f"{path}/b", np.zeros(d), frozen=frozen)


def apply_linear(ps: ParameterSet, path: str, x: Tensor) -> Tensor:
    return linear(x, ps[f"{path}/w"], ps[f"{path}/b"])


def apply_layer_norm(ps: ParameterSet, path: str, x: Tensor) -> Tensor:
    return layer_norm(x, ps[f"{path}/g"], ps[f"{path}/b"])


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, t, d = x.shape
    dk = d // n_heads
    return transpose(reshape(x, (b, t, n_heads, dk)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, h, t, dk = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, t, h * dk))


def causal_mask(t_len: int) -> Tensor:
    """Additive [1, 1, T, T] mask: position i sees positions <= i."""
    m = np.triu(np.full((t_len, t_len), NEG_INF), k=1)
    return Tensor(m[None, None])


def add_attention(ps: ParameterSet, rng, path: str, d: int,
                  frozen: bool = False) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        add_linear(ps, rng, f"{path}/{name}", d, d, frozen=frozen)


def multi_head_attention(ps: ParameterSet, path: str, q_in: Tensor,
                         kv_in: Tensor, n_heads: int,
                         mask: Tensor | None = None) -> Tensor:
    """softmax(QK^T / sqrt(d_k)) V with per-head projections.

    q_in: [B, Tq, D]; kv_in: [B, Tk, D]; mask broadcast-adds to the
    [B, H, Tq, Tk] score tensor before the softmax.
    """
    d = q_in.shape[-1]
    dk = d // n_heads
    q = split_heads(apply_linear(ps, f"{path}/wq", q_in), n_heads)
    k = split_heads(apply_linear(ps, f"{path}/wk", kv_in), n_heads)
    v = split_heads(apply_linear(ps, f"{path}/wv", kv_in), n_heads)
    scores = mul(matmul(q, swap_last(k)), Tensor(1.0 / np.sqrt(dk)))
    if mask is not None:
        scores = scores + mask
    attn = softmax(scores, axis=-1)
    out = merge_heads(matmul(attn, v))
    return apply_linear(ps, f"{path}/wo", out)


def add_transformer_block(ps: ParameterSet, rng, path: str, d: int,
                          ffn_mult: int = 4, frozen: bool = False) -> None:
    add_layer_norm(ps, f"{path}/ln1", d, frozen=frozen)
    add_attention(ps, rng, f"{path}/attn", d, frozen=frozen)
    add_layer_norm(ps, f"{path}/ln2", d, frozen=frozen)
    add_linear(ps, rng, f"{path}/ffn/fc1", d, d * ffn_mult, frozen=frozen)
    add_linear(ps, rng, f"{path}/ffn/fc2", d * ffn_mult, d, frozen=frozen)


def transformer_block(ps: ParameterSet, path: str, x: Tensor, n_heads: int,
                      mask: Tensor | None = None) -> Tensor:
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x))."""
    h = apply_layer_norm(ps, f"{path}/ln1", x)
    x = x + multi_head_attention(ps, f"{path}/attn", h, h, n_heads, mask)
    h = apply_layer_norm(ps, f"{path}/ln2", x)
    h = gelu(apply_linear(ps, f"{path}/ffn/fc1", h))
    return x + apply_linear(ps, f"{path}/ffn/fc2", h)
