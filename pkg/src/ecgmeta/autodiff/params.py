"""Named parameter collections with per-entry freeze flags."""

from __future__ import annotations

import hashlib

import numpy as np

from .tensor import AutodiffError, Tensor, grad as _tensor_grad


class ParameterSet:
    """An ordered mapping of path -> Tensor, each entry frozen or not.

    Paths are unique slash-separated names ("mapper/layer0/wq"). Frozen
    entries participate in forward passes but are never returned by
    unfrozen_items() and never receive updates; that is the whole
    freezing mechanism — there is no other switch.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self._frozen: set[str] = set()

    # -- construction ---------------------------------------------------
    def add(self, path: str, value, frozen: bool = False) -> Tensor:
        if path in self._entries:
            raise KeyError(f"duplicate parameter path: {path}")
        t = value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))
        t.requires_grad = not frozen
        self._entries[path] = t
        if frozen:
            self._frozen.add(path)
        return t

    # -- access ----------------------------------------------------------
    def __getitem__(self, path: str) -> Tensor:
        return self._entries[path]

    def __contains__(self, path: str) -> bool:
        return path in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def paths(self):
        return list(self._entries.keys())

    def items(self):
        return list(self._entries.items())

    def is_frozen(self, path: str) -> bool:
        return path in self._frozen

    def unfrozen_items(self):
        return [(p, t) for p, t in self._entries.items() if p not in self._frozen]

    def n_params(self) -> int:
        return int(sum(t.size for t in self._entries.values()))

    # -- functional update -------------------------------------------------
    def clone(self) -> "ParameterSet":
        """Fresh leaves with copied values; graph links are not carried over."""
        out = ParameterSet()
        for p, t in self._entries.items():
            out.add(p, t.data.copy(), frozen=(p in self._frozen))
        return out

    def with_updates(self, updates: dict[str, Tensor]) -> "ParameterSet":
        """A new set where some unfrozen entries are replaced by graph nodes.

        This is how adapted parameters are built during inner-loop
        updates: the replacement tensors keep their history, so a loss
        computed through the new set differentiates back to whatever the
        updates were computed from. Frozen entries are shared unchanged.
        """
        out = ParameterSet()
        for p, t in self._entries.items():
            if p in updates:
                if p in self._frozen:
                    raise AutodiffError(f"attempted update of frozen parameter {p}")
                out._entries[p] = updates[p]
            else:
                out._entries[p] = t
                if p in self._frozen:
                    out._frozen.add(p)
        return out

    # -- provenance ---------------------------------------------------------
    def digest(self) -> str:
        """SHA-256 over paths, shapes and exact float64 bytes."""
        h = hashlib.sha256()
        for p in sorted(self._entries):
            t = self._entries[p]
            h.update(p.encode())
            h.update(str(t.shape).encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()


def grad_params(loss: Tensor, params: ParameterSet, create_graph: bool = False):
    """Gradients of a scalar loss for every unfrozen entry, keyed by path."""
    names = [p for p, _ in params.unfrozen_items()]
    tensors = [t for _, t in params.unfrozen_items()]
    try:
        gs = _tensor_grad(loss, tensors, create_graph=create_graph)
    except AutodiffError as e:
        raise AutodiffError(f"{e} (requested paths: {names})") from None
    return dict(zip(names, gs))


# ---------------------------------------------------------------------
# init helpers
# ---------------------------------------------------------------------

def uniform_init(rng: np.random.Generator, shape, fan_in: int | None = None) -> np.ndarray:
    """Scaled-uniform init, bound 1/sqrt(fan_in)."""
    if fan_in is None:
        fan_in = shape[0] if len(shape) > 1 else max(1, shape[0])
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)
