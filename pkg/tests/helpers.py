"""Shared test oracles.

Finite differences and tape replay are deliberately independent of the
engine's own backward pass: FD only ever calls forward code, and the
replay walks the recorded tape in reverse creation order instead of
doing the graph traversal grad() does.
"""

import numpy as np

from ecgmeta.autodiff import Tensor, no_grad


def fd_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    x = x.astype(np.float64).copy()
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error with a unit floor on the scale."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def replay_tape_grad(tape, loss, leaves):
    """Reverse-creation-order replay of a recorded tape.

    Creation order is topological (parents precede children), so
    walking tape.nodes backwards and applying each node's VJP yields
    gradients for every requires_grad leaf without any graph search.
    """
    grads = {id(loss): Tensor(np.ones(loss.shape))}
    with no_grad():
        for node in reversed(tape.nodes):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for p, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not p.requires_grad:
                    continue
                held = grads.get(id(p))
                grads[id(p)] = pg if held is None else Tensor(held.data + pg.data)
    return [grads.get(id(leaf)) for leaf in leaves]
