"""Trainable fusion mapper: encoder feature tokens -> LM prefix.

This is the only module that trains during meta-learning; both backbones
stay frozen around it. Three variants share one interface:

* ``attention`` — stacked cross-attention blocks whose learned query seeds
  read from the feature tokens. No residual path: with a single feature
  token, softmax over one key makes every output row the transformed value
  row, which gives a closed-form check that the stack is wired correctly.
* ``mlp`` — per-token MLP followed by a learned pooling matrix down to the
  prefix length.
* ``linear`` — affine projection plus learned pooling; at matching widths
  an identity-initialised instance reproduces its input exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    DropoutCtx,
    EVAL_CTX,
    ParameterSet,
    Tensor,
    dropout,
    layer_norm,
    linear,
    matmul,
    relu,
    uniform_init,
)
from .backbones.layers import multi_head_attention
from .utils import stable_rng

MAPPER_VARIANTS = ("attention", "mlp", "linear")


@dataclass(frozen=True)
class MapperConfig:
    variant: str = "attention"
    d_in: int = 48              # encoder token width
    d_model: int = 64           # LM embedding width
    k_e: int = 16               # encoder tokens in
    m_prefix: int = 8           # prefix tokens out
    n_layers: int = 4           # attention variant
    n_heads: int = 8
    mlp_hidden: int = 64        # mlp variant
    p_drop: float = 0.5

    def __post_init__(self):
        if self.variant not in MAPPER_VARIANTS:
            raise ValueError(f"unknown mapper variant: {self.variant!r}")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must divide into heads")


def init_mapper(cfg: MapperConfig, seed: int) -> ParameterSet:
    rng = stable_rng(seed, "init", "mapper", cfg.variant)
    ps = ParameterSet()
    if cfg.variant == "attention":
        ps.add("map/in/w", uniform_init(rng, (cfg.d_in, cfg.d_model)))
        ps.add("map/in/b", np.zeros(cfg.d_model))
        ps.add("map/seeds", uniform_init(rng, (cfg.m_prefix, cfg.d_model)))
        for i in range(cfg.n_layers):
            for name in ("wq", "wk", "wv", "wo"):
                ps.add(f"map/l{i}/attn/{name}/w",
                       uniform_init(rng, (cfg.d_model, cfg.d_model)))
                ps.add(f"map/l{i}/attn/{name}/b", np.zeros(cfg.d_model))
            ps.add(f"map/l{i}/ln/g", np.ones(cfg.d_model))
            ps.add(f"map/l{i}/ln/b", np.zeros(cfg.d_model))
    elif cfg.variant == "mlp":
        h = cfg.mlp_hidden
        ps.add("map/fc0/w", uniform_init(rng, (cfg.d_in, h)))
        ps.add("map/fc0/b", np.zeros(h))
        ps.add("map/fc1/w", uniform_init(rng, (h, h)))
        ps.add("map/fc1/b", np.zeros(h))
        ps.add("map/fc2/w", uniform_init(rng, (h, cfg.d_model)))
        ps.add("map/fc2/b", np.zeros(cfg.d_model))
        ps.add("map/pool", uniform_init(rng, (cfg.m_prefix, cfg.k_e), fan_in=cfg.k_e))
    else:
        ps.add("map/w", uniform_init(rng, (cfg.d_in, cfg.d_model)))
        ps.add("map/b", np.zeros(cfg.d_model))
        ps.add("map/pool", uniform_init(rng, (cfg.m_prefix, cfg.k_e), fan_in=cfg.k_e))
    return ps


def identity_mapper(cfg: MapperConfig) -> ParameterSet:
    """Linear variant wired to copy its input (needs matching dims)."""
    if cfg.variant != "linear":
        raise ValueError("identity wiring only exists for the linear variant")
    if cfg.d_in != cfg.d_model or cfg.k_e != cfg.m_prefix:
        raise ValueError("identity wiring needs d_in == d_model and k_e == m_prefix")
    ps = ParameterSet()
    ps.add("map/w", np.eye(cfg.d_in))
    ps.add("map/b", np.zeros(cfg.d_model))
    ps.add("map/pool", np.eye(cfg.m_prefix))
    return ps


def mapper_param_count(cfg: MapperConfig) -> int:
    """Closed-form size of init_mapper's output."""
    d, m = cfg.d_model, cfg.m_prefix
    if cfg.variant == "attention":
        return (cfg.d_in * d + d) + m * d + cfg.n_layers * (4 * (d * d + d) + 2 * d)
    if cfg.variant == "mlp":
        h = cfg.mlp_hidden
        return ((cfg.d_in * h + h) + (h * h + h) + (h * d + d)
                + m * cfg.k_e)
    return cfg.d_in * d + d + m * cfg.k_e


def map_prefix(ps: ParameterSet, cfg: MapperConfig, feats: Tensor,
               ctx: DropoutCtx = EVAL_CTX, tag: str = "map") -> Tensor:
    """[B, k_e, d_in] feature tokens -> [B, m_prefix, d_model] prefix."""
    if feats.ndim != 3 or feats.shape[1:] != (cfg.k_e, cfg.d_in):
        raise ValueError(f"expected [B, {cfg.k_e}, {cfg.d_in}], got {feats.shape}")
    b = feats.shape[0]

    if cfg.variant == "attention":
        kv = linear(feats, ps["map/in/w"], ps["map/in/b"])
        # broadcast the learned seeds across the batch
        h = ps["map/seeds"] + Tensor(np.zeros((b, 1, 1)))
        for i in range(cfg.n_layers):
            h = multi_head_attention(ps, f"map/l{i}/attn", h, kv, cfg.n_heads)
            h = layer_norm(h, ps[f"map/l{i}/ln/g"], ps[f"map/l{i}/ln/b"])
            if i < cfg.n_layers - 1:
                h = dropout(h, cfg.p_drop, ctx, f"{tag}/l{i}")
        return h

    if cfg.variant == "mlp":
        h = relu(linear(feats, ps["map/fc0/w"], ps["map/fc0/b"]))
        h = dropout(h, cfg.p_drop, ctx, f"{tag}/fc0")
        h = relu(linear(h, ps["map/fc1/w"], ps["map/fc1/b"]))
        h = dropout(h, cfg.p_drop, ctx, f"{tag}/fc1")
        h = linear(h, ps["map/fc2/w"], ps["map/fc2/b"])
        return matmul(ps["map/pool"], h)

    h = linear(feats, ps["map/w"], ps["map/b"])
    return matmul(ps["map/pool"], h)
