"""Toy ECG encoder: strided conv stack -> fixed pooling -> one attention block.

The encoder is pretrained once per experiment with a multi-label motif
detection head under random lead masking, then frozen. A linear probe on the
pooled features acts as a self-check that the features actually carry the
attribute information the downstream QA tasks need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import (
    AdamW,
    ParameterSet,
    Tape,
    Tensor,
    concat,
    conv1d,
    cross_entropy_nll,
    gelu,
    grad_params,
    matmul,
    no_grad,
    reshape,
    tmean,
    uniform_init,
)
from ..data.attributes import BY_NAME, presence_attributes, value_attributes
from ..data.signals import synth_base
from ..utils import stable_rng
from .layers import add_transformer_block, transformer_block


class EncoderPretrainError(RuntimeError):
    """Raised when the detectability self-check fails after pretraining."""


@dataclass(frozen=True)
class EncoderConfig:
    t_steps: int = 500
    n_leads: int = 12
    channels: tuple[int, ...] = (48, 48, 48)
    kernels: tuple[int, ...] = (9, 7, 5)
    strides: tuple[int, ...] = (4, 3, 2)
    n_tokens: int = 16
    n_heads: int = 4
    ffn_mult: int = 2

    @property
    def d_enc(self) -> int:
        return self.channels[-1]

    def conv_out_len(self) -> int:
        t = self.t_steps
        for k, s in zip(self.kernels, self.strides):
            t = (t - k) // s + 1
        return t


def pooling_matrix(t_in: int, n_tokens: int) -> np.ndarray:
    """[n_tokens, t_in] segment-mean matrix (fixed, not learned)."""
    if t_in < n_tokens:
        raise ValueError(f"cannot pool {t_in} positions into {n_tokens} tokens")
    bounds = [round(i * t_in / n_tokens) for i in range(n_tokens + 1)]
    m = np.zeros((n_tokens, t_in))
    for i in range(n_tokens):
        lo, hi = bounds[i], bounds[i + 1]
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


def init_encoder(cfg: EncoderConfig, seed: int, frozen: bool = False) -> ParameterSet:
    rng = stable_rng(seed, "init", "encoder")
    ps = ParameterSet()
    c_in = cfg.n_leads
    for i, (c_out, k) in enumerate(zip(cfg.channels, cfg.kernels)):
        ps.add(f"enc/conv{i}/w", uniform_init(rng, (k * c_in, c_out)), frozen=frozen)
        ps.add(f"enc/conv{i}/b", np.zeros(c_out), frozen=frozen)
        c_in = c_out
    add_transformer_block(ps, rng, "enc/blk", cfg.d_enc,
                          ffn_mult=cfg.ffn_mult, frozen=frozen)
    return ps


def encode_ecg(ps: ParameterSet, cfg: EncoderConfig, x) -> Tensor:
    """[B, T, C] signals -> [B, n_tokens, d_enc] feature tokens."""
    h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    if h.ndim != 3:
        raise ValueError(f"encode_ecg expects [B, T, C], got {h.shape}")
    for i, stride in enumerate(cfg.strides):
        h = gelu(conv1d(h, ps[f"enc/conv{i}/w"], ps[f"enc/conv{i}/b"], stride))
    pool = Tensor(pooling_matrix(cfg.conv_out_len(), cfg.n_tokens))
    tokens = matmul(pool, h)
    return transformer_block(ps, "enc/blk", tokens, cfg.n_heads)


# --- pretraining -----------------------------------------------------------

def calibration_labels() -> tuple[str, ...]:
    """Label axis for the motif-detection head: one column per presence
    attribute plus one per value of each value attribute."""
    labels = [spec.name for spec in presence_attributes()]
    for spec in value_attributes():
        labels.extend(f"{spec.name}={v}" for v in spec.values)
    return tuple(labels)


def make_calibration_pool(cfg: EncoderConfig, seed: int, n_per_label: int = 12,
                          mask_rate: float = 0.0, tag: str = "calib"):
    """Labelled motif signals for encoder pretraining.

    Generated independently of any QA corpus: signals here exist only to
    teach the encoder what each motif looks like. With ``mask_rate`` > 0 a
    matching fraction of samples has a random lead subset zeroed, which is
    the augmentation that keeps features usable under missing leads.
    Returns (x [N, T, C], y [N, L] multi-hot, label names).
    """
    from ..data.attributes import inject_motif
    from ..data.signals import ECGSignal, apply_lead_mask, random_lead_keep

    labels = calibration_labels()
    col = {name: j for j, name in enumerate(labels)}
    presence = [s.name for s in presence_attributes()]
    stage_values = BY_NAME["infarction stage"].values

    targets: list[tuple[str, str | None]] = [(a, None) for a in presence]
    targets += [("infarction stage", v) for v in stage_values]
    targets += [("__clean__", None)]

    xs, ys = [], []
    for attr, value in targets:
        for i in range(n_per_label):
            rng = stable_rng(seed, tag, attr, str(value), i)
            axis = ["normal", "leftward", "rightward"][rng.integers(3)]
            rr = ["short", "normal", "long"][rng.integers(3)]
            x, beats = synth_base(rng, cfg.t_steps, cfg.n_leads, axis=axis, rr=rr)
            y = np.zeros(len(labels))
            y[col[f"heart axis={axis}"]] = 1.0
            y[col[f"rr interval={rr}"]] = 1.0
            strength = rng.uniform(0.85, 1.2)
            if attr == "infarction stage":
                x = inject_motif(x, beats, attr, rng, strength=strength, value=value)
                y[col[f"{attr}={value}"]] = 1.0
            elif attr != "__clean__":
                x = inject_motif(x, beats, attr, rng, strength=strength)
                y[col[attr]] = 1.0
            # occasional second motif so the head sees co-occurring labels
            if attr != "__clean__" and rng.random() < 0.3:
                extra = presence[rng.integers(len(presence))]
                if extra != attr:
                    x = inject_motif(x, beats, extra, rng,
                                     strength=rng.uniform(0.85, 1.2))
                    y[col[extra]] = 1.0
            if mask_rate > 0 and rng.random() < mask_rate:
                keep = random_lead_keep(rng, cfg.n_leads)
                sig = apply_lead_mask(
                    ECGSignal(samples=x, lead_mask=np.ones(cfg.n_leads, dtype=bool)),
                    keep)
                x = sig.samples
            xs.append(x)
            ys.append(y)
    return np.stack(xs), np.stack(ys), labels


def _pool_tokens(tokens: Tensor) -> Tensor:
    """[B, K, D] -> [B, 2D]: token mean plus log-sum-exp.

    The LSE slice is a smooth max that keeps motifs alive which light up
    only one or two tokens (a single ectopic beat says nothing after a
    plain mean over sixteen positions).
    """
    from ..autodiff import exp, log, tsum
    mean = tmean(tokens, axis=1)
    lse = log(tsum(exp(tokens), axis=1))
    return concat([mean, lse], axis=-1)


def pooled_features(ps: ParameterSet, cfg: EncoderConfig, x: np.ndarray,
                    batch: int = 32) -> np.ndarray:
    outs = []
    with no_grad():
        for i in range(0, len(x), batch):
            tok = encode_ecg(ps, cfg, x[i:i + batch])
            outs.append(_pool_tokens(tok).data)
    return np.concatenate(outs)


def probe_detectability(ps: ParameterSet, cfg: EncoderConfig,
                        x_fit: np.ndarray, y_fit: np.ndarray,
                        x_test: np.ndarray, y_test: np.ndarray,
                        labels) -> dict[str, float]:
    """Per-label balanced accuracy of a ridge probe on pooled features.

    The probe is fit on one pool and scored on a second, independently
    generated one. Labels are heavily imbalanced (each motif is positive
    in a small slice of the pool), so the decision threshold sits at the
    midpoint of the projected class means rather than zero.
    """
    f_fit = pooled_features(ps, cfg, x_fit)
    f_te = pooled_features(ps, cfg, x_test)
    f_fit = np.concatenate([f_fit, np.ones((len(f_fit), 1))], axis=1)
    f_te = np.concatenate([f_te, np.ones((len(f_te), 1))], axis=1)
    out = {}
    lam = 1e-3 * np.eye(f_fit.shape[1])
    xtx = f_fit.T @ f_fit + lam
    for j, name in enumerate(labels):
        pos_f, neg_f = y_fit[:, j] > 0.5, y_fit[:, j] < 0.5
        pos_t, neg_t = y_test[:, j] > 0.5, y_test[:, j] < 0.5
        if min(pos_f.sum(), neg_f.sum(), pos_t.sum(), neg_t.sum()) == 0:
            continue
        t = 2.0 * y_fit[:, j] - 1.0
        w = np.linalg.solve(xtx, f_fit.T @ t)
        proj = f_fit @ w
        thr = 0.5 * (proj[pos_f].mean() + proj[neg_f].mean())
        pred = f_te @ w > thr
        out[name] = 0.5 * (pred[pos_t].mean() + (~pred[neg_t]).mean())
    return out


def _augment_batch(xb: np.ndarray, rng, cfg: EncoderConfig,
                   mask_rate: float) -> np.ndarray:
    """Fresh per-draw jitter: additive noise, amplitude scale, lead drops.

    Applied at batch time rather than baked into the pool, so the model
    never sees the exact same array twice and cannot memorise textures.
    """
    from ..data.signals import random_lead_keep

    xb = xb * rng.uniform(0.8, 1.2, size=(len(xb), 1, 1))
    xb = xb + rng.normal(0.0, 0.05, size=xb.shape)
    for i in range(len(xb)):
        if rng.random() < mask_rate:
            keep = random_lead_keep(rng, cfg.n_leads)
            drop = np.setdiff1d(np.arange(cfg.n_leads), keep)
            xb[i][:, drop] = 0.0
    return xb


def _bce_from_logits(z: Tensor, y: np.ndarray,
                     weights: np.ndarray | None = None) -> Tensor:
    """Weighted binary cross-entropy via a stable two-class softmax
    (logit vs 0). ``weights`` matches y and rebalances rare labels."""
    stacked = concat([Tensor(np.zeros(z.shape + (1,))),
                      reshape(z, z.shape + (1,))], axis=-1)
    if weights is None:
        weights = np.ones_like(y, dtype=np.float64)
    nll = cross_entropy_nll(stacked, y.astype(np.int64), mask=weights)
    return nll * Tensor(1.0 / weights.sum())


def _balance_weights(y: np.ndarray) -> np.ndarray:
    """Per-label weights so positives and negatives contribute equally.

    Most labels are positive in only a small slice of the pool; unweighted
    BCE reaches a low mean loss by ignoring them entirely.
    """
    pos_rate = y.mean(axis=0).clip(1e-6, 1 - 1e-6)
    w_pos, w_neg = 0.5 / pos_rate, 0.5 / (1.0 - pos_rate)
    return np.where(y > 0.5, w_pos, w_neg)


def pretrain_encoder(cfg: EncoderConfig, seed: int, epochs: int = 18,
                     n_per_label: int = 140, lr: float = 3e-3,
                     batch: int = 32, mask_rate: float = 0.5,
                     detect_threshold: float = 0.9, check: bool = True):
    """Train the motif head, discard it, return (frozen params, report).

    Random lead masking at rate ``mask_rate`` augments the pool so the
    features stay informative when leads are dropped at evaluation time.
    """
    ps = init_encoder(cfg, seed)
    rng = stable_rng(seed, "pretrain", "encoder")
    x, y, labels = make_calibration_pool(cfg, seed, n_per_label)

    joint = ps.clone()
    joint.add("head/w", uniform_init(rng, (2 * cfg.d_enc, len(labels))))
    joint.add("head/b", np.zeros(len(labels)))

    opt = AdamW(joint, lr=lr, weight_decay=0.0)
    weights = _balance_weights(y)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(x), batch):
            idx = order[lo:lo + batch]
            xb = _augment_batch(x[idx], rng, cfg, mask_rate)
            with Tape():
                tokens = encode_ecg(joint, cfg, xb)
                feats = _pool_tokens(tokens)
                logits = matmul(feats, joint["head/w"]) + joint["head/b"]
                loss = _bce_from_logits(logits, y[idx], weights[idx])
                grads = grad_params(loss, joint)
            opt.step(grads)
            losses.append(float(loss.data))

    trained = ParameterSet()
    for path, t in joint.items():
        if not path.startswith("head/"):
            trained.add(path, t.data.copy(), frozen=True)

    # detectability is claimed on full signals: fit the probe on the
    # training pool, score it on a freshly generated one
    px, py, labels = make_calibration_pool(cfg, seed, n_per_label, mask_rate=0.0,
                                           tag="probe")
    probe = probe_detectability(trained, cfg, x, y, px, py, labels)
    report = {
        "labels": list(labels),
        "probe_accuracy": probe,
        "min_probe_accuracy": min(probe.values()),
        "final_loss": losses[-1] if losses else None,
        "epochs": epochs,
        "n_pool": len(x),
        "digest": trained.digest(),
    }
    if check and report["min_probe_accuracy"] < detect_threshold:
        worst = min(probe, key=probe.get)
        raise EncoderPretrainError(
            f"probe accuracy {probe[worst]:.3f} for {worst!r} is below "
            f"{detect_threshold}; features are not usable")
    return trained, report
