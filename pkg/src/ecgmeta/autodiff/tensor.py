"""Reverse-mode automatic differentiation on float64 numpy arrays.

The engine is deliberately small: a Tensor wraps an ndarray plus the
bookkeeping needed to run backpropagation, and every differentiable
operation is a module-level function that records its inputs and a
vector-Jacobian closure. The closures are themselves written in terms
of these same operations, so running a backward pass with
``create_graph=True`` produces gradients that are again differentiable.
That is what makes second-order meta-gradients work without any special
casing: the backward pass of the inner loop is just more tape.

Nesting is capped at two levels of differentiation (grad of grad),
which is exactly what MAML needs. Anything deeper raises.

Everything is float64 and single-threaded; given the same seed and the
same call sequence, forward values and gradients are bit-identical
across runs.
"""

from __future__ import annotations

import math

import numpy as np


class AutodiffError(RuntimeError):
    """Misuse of the tape/grad machinery (non-scalar loss, depth, NaN...)."""


class ShapeError(ValueError):
    """Operands with incompatible dimensions."""


MAX_GRAD_DEPTH = 2

# Module state. A stack of recording tapes (the bottom one is an ambient
# default so small scripts and tests never have to think about tapes),
# a grad-enabled flag, and the nesting generation stamped onto tensors
# created while a create_graph backward pass is running.
_GRAD_ENABLED = True
_GEN_FLOOR = 0


class Tape:
    """Ordered record of executed operations.

    Creation order is a valid topological order of the graph (parents
    are always created before children), which the tests exploit to
    replay gradients independently of `grad`. Entering a Tape pushes it
    as the active recording target; leaving discards nothing explicitly
    but lets the record (and the graph hanging off it) be garbage
    collected once out of scope.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        assert popped is self
        return False


_TAPES = [Tape()]


def active_tape() -> Tape:
    return _TAPES[-1]


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A float64 ndarray plus reverse-mode bookkeeping."""

    __slots__ = ("data", "requires_grad", "_parents", "_vjp", "_gen")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._gen = 0

    # -- introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- operator sugar ----------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def _raise_not_scalar(t):
    raise AutodiffError(f"expected a scalar tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    """Wrap an op result, recording it when gradients are being tracked.

    The generation stamp records the differentiation depth of the
    creation context (how many backward passes enclose this op), not
    anything about the ancestry: a tensor assembled from gradients in
    ordinary forward code is an ordinary tensor, and differentiating it
    once is still a first derivative of everything downstream.
    """
    # one fused reduction instead of isfinite().all(): nan and inf both
    # propagate through the sum, and this runs on every op
    if not math.isfinite(np.sum(data)):
        if not np.all(np.isfinite(data)):
            raise AutodiffError("non-finite value produced by a forward op")
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._vjp = vjp
        out._gen = _GEN_FLOOR
        _TAPES[-1].nodes.append(out)
    return out


# ---------------------------------------------------------------------
# broadcast helper: reduce a gradient back to the shape of its operand.
# Written in terms of tsum/reshape so it stays differentiable.
# ---------------------------------------------------------------------

def reduce_to(g: Tensor, shape: tuple) -> Tensor:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = tsum(g, axis=0)
    for ax, (have, want) in enumerate(zip(g.shape, shape)):
        if want == 1 and have != 1:
            g = tsum(g, axis=ax, keepdims=True)
    if g.shape != tuple(shape):
        raise ShapeError(f"cannot reduce gradient of shape {g.shape} to {shape}")
    return g


# ---------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        return reduce_to(g, a.shape), reduce_to(g, b.shape)

    return _result(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def vjp(g):
        return reduce_to(g, a.shape), reduce_to(neg(g), b.shape)

    return _result(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        return reduce_to(mul(g, b), a.shape), reduce_to(mul(g, a), b.shape)

    return _result(data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def vjp(g):
        ga = div(g, b)
        gb = neg(div(mul(g, a), mul(b, b)))
        return reduce_to(ga, a.shape), reduce_to(gb, b.shape)

    return _result(data, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (neg(g),)

    return _result(-a.data, (a,), vjp)


def pow_scalar(a, p: float) -> Tensor:
    """a ** p for a python-scalar exponent."""
    a = as_tensor(a)
    p = float(p)
    data = a.data ** p

    def vjp(g):
        return (mul(g, mul(Tensor(p), pow_scalar(a, p - 1.0))),)

    return _result(data, (a,), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.exp(a.data), (a,), None)
    if out.requires_grad:
        out._vjp = lambda g: (mul(g, out),)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (div(g, a),)

    return _result(np.log(a.data), (a,), vjp)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.tanh(a.data), (a,), None)
    if out.requires_grad:
        out._vjp = lambda g: (mul(g, sub(Tensor(1.0), mul(out, out))),)
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = Tensor((a.data > 0).astype(np.float64))

    def vjp(g):
        return (mul(g, mask),)

    return _result(np.maximum(a.data, 0.0), (a,), vjp)


# ---------------------------------------------------------------------
# linear-algebra / structural primitives
# ---------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects operands with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ga = reduce_to(matmul(g, swap_last(b)), a.shape)
        gb = reduce_to(matmul(swap_last(a), g), b.shape)
        return ga, gb

    return _result(data, (a, b), vjp)


def swap_last(a) -> Tensor:
    """Transpose the last two axes (the matmul companion)."""
    a = as_tensor(a)
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(int(x) for x in axes)
    inv = tuple(int(x) for x in np.argsort(axes))

    def vjp(g):
        return (transpose(g, inv),)

    return _result(np.transpose(a.data, axes), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape

    def vjp(g):
        return (reshape(g, orig),)

    return _result(np.reshape(a.data, shape), (a,), vjp)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    axis = axis % parts[0].ndim
    data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + [p.shape[axis] for p in parts])

    def vjp(g):
        return tuple(
            slice_axis(g, axis, int(offsets[i]), int(offsets[i + 1]))
            for i in range(len(parts))
        )

    return _result(data, tuple(parts), vjp)


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    axis = axis % a.ndim
    total = a.shape[axis]
    idx = tuple(slice(None) if d != axis else slice(start, stop) for d in range(a.ndim))

    def vjp(g):
        return (pad_axis(g, axis, start, total),)

    return _result(a.data[idx].copy(), (a,), vjp)


def pad_axis(a, axis: int, start: int, total: int) -> Tensor:
    """Embed `a` into zeros along `axis` (adjoint of slice_axis)."""
    a = as_tensor(a)
    axis = axis % a.ndim
    width = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = total
    data = np.zeros(shape, dtype=np.float64)
    idx = tuple(slice(None) if d != axis else slice(start, start + width) for d in range(a.ndim))
    data[idx] = a.data

    def vjp(g):
        return (slice_axis(g, axis, start, start + width),)

    return _result(data, (a,), vjp)


def embedding(weight, ids) -> Tensor:
    """Row gather: weight[V, D] indexed by an int array of any shape."""
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeError("embedding id out of range")
    nrows = weight.shape[0]

    def vjp(g):
        return (scatter_rows(g, ids, nrows),)

    return _result(weight.data[ids], (weight,), vjp)


def scatter_rows(src, ids, nrows: int) -> Tensor:
    """Adjoint of embedding: sum rows of src into a [nrows, D] table."""
    src = as_tensor(src)
    ids = np.asarray(ids, dtype=np.int64)
    d = src.shape[-1]
    data = np.zeros((nrows, d), dtype=np.float64)
    np.add.at(data, ids.reshape(-1), src.data.reshape(-1, d))

    def vjp(g):
        return (embedding(g, ids),)

    return _result(data, (src,), vjp)


def gather_windows(x, size: int, stride: int) -> Tensor:
    """Sliding windows over the time axis for 1-D convolution.

    x has shape [..., T, C]; the result is [..., T_out, size*C] with
    T_out = (T - size)//stride + 1. Gathering is linear, so its VJP is
    the matching scatter and second-order differentiation is exact.
    """
    x = as_tensor(x)
    t = x.shape[-2]
    c = x.shape[-1]
    if size > t:
        raise ShapeError(f"window size {size} exceeds length {t}")
    win = np.lib.stride_tricks.sliding_window_view(x.data, size, axis=-2)
    win = win[..., ::stride, :, :]          # [..., T_out, C, size]
    win = np.swapaxes(win, -1, -2)          # [..., T_out, size, C]
    t_out = win.shape[-3]
    data = np.ascontiguousarray(win).reshape(x.shape[:-2] + (t_out, size * c))

    def vjp(g):
        return (scatter_windows(g, size, stride, t),)

    return _result(data, (x,), vjp)


def scatter_windows(g, size: int, stride: int, total_t: int) -> Tensor:
    """Adjoint of gather_windows: overlap-add windows back to [..., T, C]."""
    g = as_tensor(g)
    t_out = g.shape[-2]
    c = g.shape[-1] // size
    win = g.data.reshape(g.shape[:-2] + (t_out, size, c))
    data = np.zeros(g.shape[:-2] + (total_t, c), dtype=np.float64)
    for i in range(t_out):
        data[..., i * stride: i * stride + size, :] += win[..., i, :, :]

    def vjp(gg):
        return (gather_windows(gg, size, stride),)

    return _result(data, (g,), vjp)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = np.sum(a.data, axis=axis, keepdims=keepdims)
    ones = Tensor(np.ones(a.shape))

    def vjp(g):
        if axis is None:
            gexp = reshape(g, (1,) * a.ndim)
        elif not keepdims:
            kept = list(np.shape(data))
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % a.ndim for ax in axes)
            full = list(a.shape)
            for ax in sorted(axes):
                full[ax] = 1
            gexp = reshape(g, tuple(full))
        else:
            gexp = g
        return (mul(ones, gexp),)

    return _result(data, (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= a.shape[ax % a.ndim]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / n))


# ---------------------------------------------------------------------
# grad
# ---------------------------------------------------------------------

def _topo_from(output: Tensor):
    """Iterative post-order over the recorded graph rooted at `output`."""
    topo = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return topo


def grad(output: Tensor, wrt, create_graph: bool = False, allow_unused: bool = False):
    """Gradients of a scalar `output` w.r.t. a list of tensors.

    With create_graph=True the returned gradients are differentiable,
    i.e. they can appear in a later loss whose own grad() is then a
    second-order derivative. The nesting level of a call is one more
    than the deepest backward pass whose products it has to
    differentiate, so any number of sequential first-order updates stays
    at level one and differentiating through one of them is level two.
    Two levels are supported; deeper nesting raises AutodiffError.

    Gradient flow stops at the requested tensors: anything upstream of
    `wrt` is never visited, so chained updates do not drag the graphs
    that produced their inputs back through every later backward.
    """
    global _GRAD_ENABLED, _GEN_FLOOR
    if output.size != 1:
        raise AutodiffError(f"grad expects a scalar loss, got shape {output.shape}")
    if not output.requires_grad:
        raise AutodiffError("loss does not depend on any tracked tensor")
    wrt = list(wrt)
    wrt_ids = {id(w) for w in wrt}

    topo = _topo_from(output)

    # Corridor between output and wrt: a node matters only if it is one
    # of the requested tensors or sits downstream of one. VJPs of other
    # nodes are never executed.
    contrib = set()
    for node in topo:
        if id(node) in wrt_ids or any(id(p) in contrib for p in node._parents):
            contrib.add(id(node))

    level = 1
    for node in topo:
        if node._vjp is not None and any(id(p) in contrib for p in node._parents):
            if node._gen + 1 > level:
                level = node._gen + 1
    if level > MAX_GRAD_DEPTH:
        raise AutodiffError(
            f"tape supports {MAX_GRAD_DEPTH} nesting levels of differentiation; "
            f"this grad would be level {level}"
        )

    grads = {id(output): Tensor(np.ones(output.shape))}

    prev_enabled, prev_floor = _GRAD_ENABLED, _GEN_FLOOR
    _GRAD_ENABLED = bool(create_graph)
    _GEN_FLOOR = level if create_graph else 0
    try:
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None:
                continue
            if node._vjp is not None and any(id(p) in contrib for p in node._parents):
                parent_grads = node._vjp(g)
                for p, pg in zip(node._parents, parent_grads):
                    if pg is None or not p.requires_grad or id(p) not in contrib:
                        continue
                    held = grads.get(id(p))
                    grads[id(p)] = pg if held is None else add(held, pg)
            if id(node) not in wrt_ids:
                grads.pop(id(node), None)  # free intermediates as we go
    finally:
        _GRAD_ENABLED, _GEN_FLOOR = prev_enabled, prev_floor

    out = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            if not allow_unused:
                raise AutodiffError("a requested tensor is not on the tape for this loss")
            g = Tensor(np.zeros(w.shape))
        out.append(g)
    return out
