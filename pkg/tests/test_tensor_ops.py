"""Forward values and first-order gradients of every primitive."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecgmeta import autodiff as ad
from ecgmeta.autodiff import (
    AutodiffError,
    DropoutCtx,
    ShapeError,
    Tape,
    Tensor,
    grad,
    no_grad,
)
from helpers import fd_gradient, rel_err, replay_tape_grad


def t(x, rg=True):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=rg)


# ---------------------------------------------------------------------
# forward values, small hand examples
# ---------------------------------------------------------------------

def test_matmul_hand_example():
    out = ad.matmul(t([[1.0, 2.0], [3.0, 4.0]]), t([[1.0], [1.0]]))
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(t(np.ones((2, 3))), t(np.ones((2, 3))))


def test_elementwise_values():
    assert ad.add(t([1.0]), t([2.0])).data[0] == 3.0
    assert ad.sub(t([1.0]), t([2.0])).data[0] == -1.0
    assert ad.mul(t([2.0]), t([3.0])).data[0] == 6.0
    assert ad.div(t([1.0]), t([4.0])).data[0] == 0.25
    assert ad.neg(t([2.0])).data[0] == -2.0
    assert ad.pow_scalar(t([3.0]), 2).data[0] == 9.0
    assert np.isclose(ad.exp(t([0.0])).data[0], 1.0)
    assert np.isclose(ad.log(t([math.e])).data[0], 1.0)
    assert np.isclose(ad.tanh(t([0.0])).data[0], 0.0)


def test_relu_values():
    out = ad.relu(t([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])


def test_structural_values():
    x = t(np.arange(6.0).reshape(2, 3))
    assert ad.transpose(x, (1, 0)).shape == (3, 2)
    assert np.array_equal(ad.reshape(x, (3, 2)).data.reshape(-1), np.arange(6.0))
    cat = ad.concat([x, x], axis=0)
    assert cat.shape == (4, 3)
    sl = ad.slice_axis(cat, 0, 2, 4)
    assert np.array_equal(sl.data, x.data)
    padded = ad.pad_axis(x, 0, 1, 4)
    assert padded.shape == (4, 3)
    assert np.all(padded.data[0] == 0) and np.array_equal(padded.data[1:3], x.data)


def test_embedding_selects_rows():
    w = t(np.arange(12.0).reshape(4, 3))
    out = ad.embedding(w, np.array([2, 0]))
    assert np.array_equal(out.data, w.data[[2, 0]])
    with pytest.raises(ShapeError):
        ad.embedding(w, np.array([4]))


def test_scatter_rows_accumulates_duplicates():
    src = t([[1.0, 1.0], [2.0, 2.0]])
    out = ad.scatter_rows(src, np.array([1, 1]), 3)
    assert np.array_equal(out.data, [[0, 0], [3.0, 3.0], [0, 0]])


def test_gather_windows_moving_sum():
    # conv with an all-ones kernel is a moving sum
    x = t(np.arange(5.0).reshape(5, 1))
    w = t(np.ones((2, 1)))
    out = ad.conv1d(x, w, None, stride=1)
    assert np.array_equal(out.data.reshape(-1), [1.0, 3.0, 5.0, 7.0])
    strided = ad.conv1d(x, w, None, stride=2)
    assert np.array_equal(strided.data.reshape(-1), [1.0, 5.0])


def test_sum_mean_values():
    x = t([[1.0, 2.0], [3.0, 4.0]])
    assert ad.tsum(x).data == 10.0
    assert np.array_equal(ad.tsum(x, axis=0).data, [4.0, 6.0])
    assert ad.tmean(x).data == 2.5
    assert np.array_equal(ad.tmean(x, axis=1, keepdims=True).data, [[1.5], [3.5]])


def test_softmax_hand_oracle():
    # independent scalar-math oracle
    xs = [1.0, 2.0, 3.0]
    es = [math.exp(v) for v in xs]
    expected = [e / sum(es) for e in es]
    out = ad.softmax(t(xs))
    assert np.allclose(out.data, expected, atol=1e-12)


@given(st.integers(0, 10 ** 6))
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=5.0, size=(3, 7))
    out = ad.softmax(t(x), axis=-1)
    assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(out.data >= 0)


def test_cross_entropy_uniform_logits():
    # all-equal logits, one unmasked position -> exactly ln(V)
    logits = t(np.zeros((3, 4)))
    targets = np.array([1, 2, 0])
    mask = np.array([0.0, 1.0, 0.0])
    loss = ad.cross_entropy_nll(logits, targets, mask)
    assert math.isclose(loss.item(), math.log(4.0), rel_tol=1e-12)


def test_cross_entropy_rejects_bad_targets():
    logits = t(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        ad.cross_entropy_nll(logits, np.array([0, 4]))


def test_layer_norm_statistics():
    x = t(np.random.default_rng(0).normal(size=(4, 8)) * 3 + 1)
    gamma, beta = t(np.ones(8)), t(np.zeros(8))
    out = ad.layer_norm(x, gamma, beta)
    assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-9)
    assert np.allclose(out.data.var(axis=-1), 1.0, atol=1e-3)


def test_gelu_fixed_points():
    assert ad.gelu(t([0.0])).data[0] == 0.0
    # large positive ~ identity, large negative ~ 0
    assert abs(ad.gelu(t([6.0])).data[0] - 6.0) < 1e-6
    assert abs(ad.gelu(t([-6.0])).data[0]) < 1e-6


def test_sigmoid_midpoint():
    assert math.isclose(ad.sigmoid(t([0.0])).data[0], 0.5, rel_tol=1e-12)


# ---------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------

def test_dropout_identity_when_eval_or_zero():
    x = t(np.ones((5, 5)))
    out = ad.dropout(x, 0.5, DropoutCtx(seed=1, train=False), "p")
    assert out is x
    out2 = ad.dropout(x, 0.0, DropoutCtx(seed=1, train=True), "p")
    assert out2 is x


def test_dropout_deterministic_per_key():
    x = t(np.ones((16, 16)))
    ctx = DropoutCtx(seed=7, step=3, train=True)
    a = ad.dropout(x, 0.5, ctx, "layer0")
    b = ad.dropout(x, 0.5, DropoutCtx(seed=7, step=3, train=True), "layer0")
    c = ad.dropout(x, 0.5, ctx, "layer1")
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    kept = a.data[a.data != 0]
    assert np.allclose(kept, 2.0)  # survivors scaled by 1/(1-p)


def test_dropout_mask_rate():
    ctx = DropoutCtx(seed=11, train=True)
    x = t(np.ones(10_000))
    out = ad.dropout(x, 0.5, ctx, "rate")
    frac = np.mean(out.data == 0.0)
    assert abs(frac - 0.5) < 0.02


# ---------------------------------------------------------------------
# gradients: FD oracle per primitive
# ---------------------------------------------------------------------

def _check(fn, *arrays, seed=0, tol=1e-4):
    """Compare grad() with central differences on sum(fn(x...) * R)."""
    rng = np.random.default_rng(seed)
    tensors = [t(a) for a in arrays]
    r = Tensor(rng.normal(size=fn(*tensors).shape))

    for i, arr in enumerate(arrays):
        def scalar(x, i=i):
            vals = [Tensor(a) for a in arrays]
            vals[i] = Tensor(x)
            with no_grad():
                return ad.tsum(ad.mul(fn(*vals), r)).item()

        loss = ad.tsum(ad.mul(fn(*tensors), r))
        g = grad(loss, [tensors[i]], allow_unused=True)[0]
        fd = fd_gradient(scalar, np.asarray(arr, dtype=np.float64))
        assert rel_err(g.data, fd) < tol, f"operand {i}: {rel_err(g.data, fd)}"


def test_grad_add_broadcast():
    _check(ad.add, np.random.default_rng(1).normal(size=(3, 4)), np.random.default_rng(2).normal(size=(4,)))


def test_grad_mul_broadcast():
    _check(ad.mul, np.random.default_rng(3).normal(size=(2, 3, 4)), np.random.default_rng(4).normal(size=(3, 4)))


def test_grad_sub_div():
    a = np.random.default_rng(5).normal(size=(3, 3))
    b = np.random.default_rng(6).normal(size=(3, 3)) + 3.0
    _check(ad.sub, a, b)
    _check(ad.div, a, b)


def test_grad_unary():
    x = np.random.default_rng(7).normal(size=(4, 3))
    _check(ad.exp, x)
    _check(ad.tanh, x)
    _check(lambda a: ad.log(a), np.abs(x) + 0.5)
    _check(lambda a: ad.pow_scalar(a, 3), x)
    _check(lambda a: ad.pow_scalar(a, -0.5), np.abs(x) + 0.5)
    _check(ad.neg, x)
    # keep relu inputs away from the kink
    _check(ad.relu, x + 0.2 * np.sign(x))


def test_grad_matmul_2d_3d():
    rng = np.random.default_rng(8)
    _check(ad.matmul, rng.normal(size=(3, 4)), rng.normal(size=(4, 2)))
    _check(ad.matmul, rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 2)))
    _check(ad.matmul, rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 2)))
    _check(ad.matmul, rng.normal(size=(2, 2, 3, 4)), rng.normal(size=(2, 2, 4, 3)))


def test_grad_structural():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(3, 4))
    _check(lambda a: ad.transpose(a, (1, 0)), x)
    _check(lambda a: ad.reshape(a, (2, 6)), x)
    _check(lambda a: ad.slice_axis(a, 1, 1, 3), x)
    _check(lambda a: ad.pad_axis(a, 0, 2, 7), x)
    _check(lambda a, b: ad.concat([a, b], axis=1), x, rng.normal(size=(3, 2)))


def test_grad_embedding_scatter():
    rng = np.random.default_rng(10)
    w = rng.normal(size=(5, 3))
    ids = np.array([[0, 2], [2, 4]])
    _check(lambda a: ad.embedding(a, ids), w)
    src = rng.normal(size=(4, 3))
    _check(lambda a: ad.scatter_rows(a, np.array([1, 1, 0, 3]), 5), src)


def test_grad_windows_and_conv():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(6, 2))
    _check(lambda a: ad.gather_windows(a, 3, 2), x)
    g = rng.normal(size=(3, 6))
    _check(lambda a: ad.scatter_windows(a, 3, 2, 7), g)
    w = rng.normal(size=(6, 4))
    b = rng.normal(size=(4,))
    _check(lambda a, ww, bb: ad.conv1d(a, ww, bb, stride=2), x, w, b)
    xb = rng.normal(size=(3, 6, 2))
    _check(lambda a, ww: ad.conv1d(a, ww, None, stride=1), xb, w)


def test_grad_reductions():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(3, 4, 2))
    _check(lambda a: ad.tsum(a), x)
    _check(lambda a: ad.tsum(a, axis=1), x)
    _check(lambda a: ad.tsum(a, axis=2, keepdims=True), x)
    _check(lambda a: ad.tmean(a, axis=0), x)


def test_grad_softmax_layernorm_gelu():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(3, 5))
    _check(lambda a: ad.softmax(a, axis=-1), x)
    _check(lambda a: ad.log_softmax(a, axis=-1), x)
    _check(ad.gelu, x)
    _check(ad.sigmoid, x)
    g = rng.normal(size=(5,)) + 1.0
    b = rng.normal(size=(5,))
    _check(lambda a, gg, bb: ad.layer_norm(a, gg, bb), x, g, b)


def test_grad_cross_entropy():
    rng = np.random.default_rng(14)
    logits = rng.normal(size=(4, 5))
    targets = np.array([0, 3, 2, 1])
    mask = np.array([1.0, 0.0, 1.0, 1.0])

    def scalar(x):
        with no_grad():
            return ad.cross_entropy_nll(Tensor(x), targets, mask).item()

    lt = t(logits)
    loss = ad.cross_entropy_nll(lt, targets, mask)
    g = grad(loss, [lt])[0]
    assert rel_err(g.data, fd_gradient(scalar, logits)) < 1e-4


def test_grad_half_sq_norm_is_theta():
    theta = t([1.0, -2.0])
    loss = ad.mul(Tensor(0.5), ad.tsum(ad.mul(theta, theta)))
    g = grad(loss, [theta])[0]
    assert np.allclose(g.data, [1.0, -2.0], atol=1e-12)


def test_grad_dropout_scales_by_mask():
    ctx = DropoutCtx(seed=3, train=True)
    x = t(np.ones((8, 8)))
    out = ad.dropout(x, 0.5, ctx, "gm")
    g = grad(ad.tsum(out), [x])[0]
    assert np.array_equal(g.data, out.data)  # mask of 0 / (1/(1-p))


# ---------------------------------------------------------------------
# engine behaviour
# ---------------------------------------------------------------------

def test_non_scalar_loss_rejected():
    x = t(np.ones(3))
    with pytest.raises(AutodiffError):
        grad(ad.mul(x, x), [x])


def test_unused_parameter_policy():
    x, y = t([1.0]), t([2.0])
    loss = ad.tsum(ad.mul(x, x))
    with pytest.raises(AutodiffError):
        grad(loss, [y])
    g = grad(loss, [y], allow_unused=True)[0]
    assert np.array_equal(g.data, [0.0])


def test_nonfinite_forward_raises():
    with np.errstate(all="ignore"):
        with pytest.raises(AutodiffError):
            ad.log(t([-1.0]))
        with pytest.raises(AutodiffError):
            ad.div(t([1.0]), t([0.0]))


def test_no_grad_blocks_recording():
    x = t([2.0])
    with no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad
    with pytest.raises(AutodiffError):
        grad(y, [x])


def test_grad_accumulates_over_reuse():
    x = t([3.0])
    y = ad.add(ad.mul(x, x), ad.mul(x, x))  # 2x^2 -> dy/dx = 4x
    g = grad(y, [x])[0]
    assert np.allclose(g.data, [12.0])


def test_tape_records_in_topological_order():
    with Tape() as tape:
        x = t(np.array([1.0, 2.0]))
        y = ad.tsum(ad.mul(ad.add(x, x), x))
        positions = {id(n): i for i, n in enumerate(tape.nodes)}
        for node in tape.nodes:
            for p in node._parents:
                if id(p) in positions:
                    assert positions[id(p)] < positions[id(node)]
        assert y in tape.nodes


def test_tape_replay_matches_grad():
    rng = np.random.default_rng(21)
    with Tape() as tape:
        a = t(rng.normal(size=(3, 3)))
        b = t(rng.normal(size=(3, 3)))
        loss = ad.tsum(ad.mul(ad.softmax(ad.matmul(a, b)), ad.tanh(a)))
        ga, gb = grad(loss, [a, b])
        ra, rb = replay_tape_grad(tape, loss, [a, b])
    assert np.allclose(ga.data, ra.data, atol=1e-12)
    assert np.allclose(gb.data, rb.data, atol=1e-12)


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(99)
        x = t(rng.normal(size=(4, 4)))
        w = t(rng.normal(size=(4, 4)))
        out = ad.tsum(ad.softmax(ad.matmul(ad.gelu(x), w)))
        g = grad(out, [w])[0]
        return out.data.tobytes(), g.data.tobytes()

    assert run() == run()
