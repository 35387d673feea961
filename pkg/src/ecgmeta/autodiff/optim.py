"""Optimizers operating on ParameterSet leaves.

Updates replace each leaf's array rather than mutating it in place, so
graphs recorded against the old values stay valid until dropped.
"""

from __future__ import annotations

import numpy as np

from .params import ParameterSet
from .tensor import Tensor


def sgd_step(params: ParameterSet, grads: dict, lr: float) -> None:
    """Plain in-place SGD on the unfrozen entries (used by tests/scripts)."""
    for path, t in params.unfrozen_items():
        g = grads[path]
        garr = g.data if isinstance(g, Tensor) else np.asarray(g)
        t.data = t.data - lr * garr


class AdamW:
    """AdamW with decoupled weight decay, standard defaults."""

    def __init__(self, params: ParameterSet, lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = params
        self.lr = float(lr)
        self.b1, self.b2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = {p: np.zeros(t.shape) for p, t in params.unfrozen_items()}
        self.v = {p: np.zeros(t.shape) for p, t in params.unfrozen_items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for path, tensor in self.params.unfrozen_items():
            g = grads[path]
            garr = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
            self.m[path] = self.b1 * self.m[path] + (1.0 - self.b1) * garr
            self.v[path] = self.b2 * self.v[path] + (1.0 - self.b2) * garr * garr
            mhat = self.m[path] / b1t
            vhat = self.v[path] / b2t
            tensor.data = tensor.data - self.lr * (
                mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * tensor.data
            )

    # -- state round-trip (for bit-exact resume) -------------------------
    def state_arrays(self) -> dict:
        out = {"__step__": np.array([float(self.t)])}
        for p in self.m:
            out[f"m/{p}"] = self.m[p]
            out[f"v/{p}"] = self.v[p]
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.t = int(arrays["__step__"][0])
        for p in self.m:
            self.m[p] = arrays[f"m/{p}"].copy()
            self.v[p] = arrays[f"v/{p}"].copy()
