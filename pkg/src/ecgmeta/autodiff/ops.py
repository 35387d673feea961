"""Neural-net building blocks composed from the tensor primitives.

Everything here is an ordinary function of Tensors; nothing defines its
own backward rule. Because each block is a composition of primitives,
first- and second-order gradients come out of the engine for free.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .tensor import (
    Tensor,
    as_tensor,
    concat,
    div,
    embedding,
    exp,
    gather_windows,
    log,
    matmul,
    mul,
    pow_scalar,
    reshape,
    sub,
    tanh,
    tmean,
    tsum,
)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    # constant shift for stability; softmax is invariant to it, so
    # treating the max as a constant leaves the gradient exact.
    m = Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = exp(sub(x, m))
    return div(e, tsum(e, axis=axis, keepdims=True))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    m = Tensor(np.max(x.data, axis=axis, keepdims=True))
    shifted = sub(x, m)
    lse = log(tsum(exp(shifted), axis=axis, keepdims=True))
    return sub(shifted, lse)


def cross_entropy_nll(logits: Tensor, targets, mask=None) -> Tensor:
    """Summed negative log-likelihood of integer targets.

    logits: [..., T, V] raw scores; targets: int array [..., T];
    mask: float array [..., T] or None (all ones). Returns the scalar
    -sum_t mask_t * log p(target_t). Callers wanting a mean divide by
    the mask weight themselves.
    """
    logits = as_tensor(logits)
    v = logits.shape[-1]
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise ValueError("target id out of vocabulary range")
    if mask is None:
        mask_arr = np.ones(targets.shape, dtype=np.float64)
    else:
        mask_arr = np.asarray(mask, dtype=np.float64)
        if mask_arr.shape != targets.shape:
            raise ValueError("mask shape does not match targets")
    onehot = np.zeros(targets.shape + (v,), dtype=np.float64)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    lp = log_softmax(logits, axis=-1)
    picked = tsum(mul(lp, Tensor(onehot)), axis=-1)
    return mul(Tensor(-1.0), tsum(mul(picked, Tensor(mask_arr))))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = tmean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = tmean(mul(xc, xc), axis=-1, keepdims=True)
    inv = pow_scalar(var + Tensor(eps), -0.5)
    return mul(mul(xc, inv), gamma) + beta


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    inner = mul(Tensor(_GELU_C), x + mul(Tensor(0.044715), mul(x, mul(x, x))))
    return mul(mul(Tensor(0.5), x), Tensor(1.0) + tanh(inner))


def sigmoid(x: Tensor) -> Tensor:
    return div(Tensor(1.0), Tensor(1.0) + exp(mul(Tensor(-1.0), x)))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else out + b


def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1) -> Tensor:
    """1-D convolution over time.

    x: [..., T, C_in]; w: [size*C_in, C_out]; returns [..., T_out, C_out].
    Implemented as window gathering followed by one matmul, so both
    weight and input gradients fall out of the primitive VJPs.
    """
    size_cin = w.shape[0]
    cin = x.shape[-1]
    if size_cin % cin != 0:
        raise ValueError(f"kernel rows {size_cin} not a multiple of input channels {cin}")
    size = size_cin // cin
    win = gather_windows(x, size, stride)
    out = matmul(win, w)
    return out if b is None else out + b


# ---------------------------------------------------------------------
# seeded dropout
# ---------------------------------------------------------------------

class DropoutCtx:
    """Counter-based dropout randomness.

    Masks are a pure function of (seed, step, call path): the same
    triple always yields the same mask, so reruns and resumed runs are
    bit-identical without any shared RNG state being threaded through
    the model code. train=False turns every dropout into the identity.
    """

    def __init__(self, seed: int, step: int = 0, train: bool = False):
        self.seed = int(seed)
        self.step = int(step)
        self.train = bool(train)

    def at_step(self, step: int) -> "DropoutCtx":
        return DropoutCtx(self.seed, step, self.train)

    def rng(self, path: str) -> np.random.Generator:
        tag = f"{self.seed}:{self.step}:{path}".encode()
        key = int.from_bytes(hashlib.sha256(tag).digest()[:16], "little")
        return np.random.Generator(np.random.Philox(key=key))


EVAL_CTX = DropoutCtx(seed=0, step=0, train=False)


def dropout(x: Tensor, p: float, ctx: DropoutCtx, path: str) -> Tensor:
    if not ctx.train or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    keep = (ctx.rng(path).random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return mul(x, Tensor(keep))
