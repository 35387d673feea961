"""Attribute registry and waveform motif injection.

Six families. Presence attributes (statement is either in the signal or
not) drive yes/no and choose questions; value attributes (always have
exactly one value per signal, or are absent entirely) drive query
questions. Each motif writes a distinct, linearly separable signature:
scp morphology changes live on the limb leads, infarction offsets on
the chest leads, noise everywhere — so no motif masquerades as another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import _bump

LIMB = slice(0, 6)
CHEST = slice(6, 12)


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    family: str
    kind: str            # "presence" or "value"
    values: tuple = ()   # value domain for kind == "value"


REGISTRY = (
    # scp morphology codes
    AttributeSpec("first degree av block", "scp_code", "presence"),
    AttributeSpec("t wave abnormality", "scp_code", "presence"),
    AttributeSpec("st elevation", "scp_code", "presence"),
    AttributeSpec("bundle branch block", "scp_code", "presence"),
    AttributeSpec("atrial fibrillation", "scp_code", "presence"),
    AttributeSpec("ventricular hypertrophy", "scp_code", "presence"),
    # additive noise artifacts
    AttributeSpec("baseline drift", "noise", "presence"),
    AttributeSpec("static noise", "noise", "presence"),
    AttributeSpec("muscle artifact", "noise", "presence"),
    AttributeSpec("powerline interference", "noise", "presence"),
    AttributeSpec("electrode motion", "noise", "presence"),
    # ectopic beats
    AttributeSpec("ventricular extra systole", "extra_systole", "presence"),
    AttributeSpec("atrial extra systole", "extra_systole", "presence"),
    # value attributes
    AttributeSpec("heart axis", "heart_axis", "value",
                  ("normal", "leftward", "rightward")),
    AttributeSpec("rr interval", "numeric_feature", "value",
                  ("short", "normal", "long")),
    AttributeSpec("infarction stage", "infarction_stage", "value",
                  ("early", "acute", "chronic")),
)

BY_NAME = {spec.name: spec for spec in REGISTRY}
FAMILIES = tuple(dict.fromkeys(spec.family for spec in REGISTRY))


def presence_attributes(families=None):
    return [s for s in REGISTRY if s.kind == "presence"
            and (families is None or s.family in families)]


def value_attributes(families=None):
    return [s for s in REGISTRY if s.kind == "value"
            and (families is None or s.family in families)]


# ---------------------------------------------------------------------
# motif injectors
# ---------------------------------------------------------------------

def _beat_anchored(x, beats, offset, width, amp, leads):
    t_len = x.shape[0]
    add = np.zeros(t_len)
    for b in beats:
        c = b + offset
        if 0 <= c < t_len:
            add += _bump(t_len, c, width, amp)
    x[:, leads] += add[:, None]


def inject_motif(x: np.ndarray, beats: np.ndarray, name: str,
                 rng: np.random.Generator, strength: float = 1.0,
                 value: str | None = None) -> np.ndarray:
    """Add one attribute's signature to a copy of x and return it.

    `value` must be given exactly for value-kind attributes. The rng
    only draws phases/positions, so the signature's energy is stable.
    """
    spec = BY_NAME.get(name)
    if spec is None:
        raise KeyError(f"unknown attribute: {name}")
    if (spec.kind == "value") != (value is not None):
        raise ValueError(f"attribute {name}: value argument mismatch")
    if value is not None and value not in spec.values:
        raise ValueError(f"attribute {name}: unknown value {value!r}")

    x = x.copy()
    t_len = x.shape[0]
    t = np.arange(t_len)
    s = float(strength)

    if name == "first degree av block":
        _beat_anchored(x, beats, -6, 2.5, 0.9 * s, LIMB)
    elif name == "t wave abnormality":
        _beat_anchored(x, beats, 8, 3.0, -1.3 * s, LIMB)
    elif name == "st elevation":
        add = np.zeros(t_len)
        for b in beats:
            add[b + 3: b + 9] += 0.9 * s
        x[:, LIMB] += add[:, None]
    elif name == "bundle branch block":
        # wide complex starting ahead of the R peak with a deep S after,
        # well clear of the post-QRS window where st changes live
        _beat_anchored(x, beats, -2, 1.3, 1.4 * s, LIMB)
        _beat_anchored(x, beats, 3, 1.3, -1.0 * s, LIMB)
    elif name == "atrial fibrillation":
        phase = rng.uniform(0, 2 * np.pi)
        x[:, LIMB] += (0.5 * s * np.sin(0.9 * t + phase))[:, None]
    elif name == "ventricular hypertrophy":
        _beat_anchored(x, beats, 0, 1.6, 1.8 * s, CHEST)

    elif name == "baseline drift":
        x += (1.6 * s * t / t_len)[:, None]
    elif name == "static noise":
        x += 0.45 * s * rng.normal(size=x.shape)
    elif name == "muscle artifact":
        burst = np.zeros(t_len)
        for _ in range(3):
            start = int(rng.integers(0, max(1, t_len - 40)))
            burst[start: start + 40] = 1.0
        hf = np.diff(rng.normal(size=t_len + 1))
        x += (0.8 * s * burst * hf)[:, None]
    elif name == "powerline interference":
        phase = rng.uniform(0, 2 * np.pi)
        x += (0.35 * s * np.sin(np.pi / 2.0 * t + phase))[:, None]
    elif name == "electrode motion":
        level = 0.0
        steps = np.zeros(t_len)
        edges = sorted(rng.integers(10, t_len - 10, size=3).tolist())
        prev = 0
        for e in edges:
            steps[prev:e] = level
            level += rng.choice([-0.9, 0.9]) * s
            prev = e
        steps[prev:] = level
        x += steps[:, None]

    elif name == "ventricular extra systole":
        pos = _ectopic_position(beats, t_len, rng)
        x += _bump(t_len, pos, 5.5, 2.6 * s)[:, None]
    elif name == "atrial extra systole":
        # frequent ectopy: two narrow biphasic events in different gaps,
        # distinct from the single wide ventricular form
        for pos in _ectopic_positions(beats, t_len, rng, n=2):
            x += _bump(t_len, pos, 1.2, 2.2 * s)[:, None]
            x += _bump(t_len, min(pos + 4, t_len - 1), 2.6, -1.1 * s)[:, None]

    elif name == "infarction stage":
        # stages differ in shape, not just amplitude: early is a biphasic
        # dip-then-rise, acute a long positive plateau, chronic a negative
        # deflection
        add = np.zeros(t_len)
        if value == "early":
            for b in beats:
                add[b + 2: b + 5] -= 0.9 * s
                add[b + 5: b + 9] += 1.3 * s
        else:
            offset, until = {"acute": (1.4, 9), "chronic": (-0.9, 7)}[value]
            for b in beats:
                add[b + 2: b + until] += offset * s
        x[:, CHEST] += add[:, None]
    elif name in ("heart axis", "rr interval"):
        # realized by the base generator (polarity pattern / beat period);
        # injecting them post-hoc is a contract error
        raise ValueError(f"{name} is a base-signal attribute, set it at synthesis")
    else:  # pragma: no cover - registry and dispatch must stay in sync
        raise KeyError(f"no injector for attribute {name}")

    return x


def _ectopic_position(beats, t_len, rng):
    """A spot halfway between two beats, away from existing spikes."""
    if len(beats) < 2:
        return t_len // 2
    k = int(rng.integers(0, len(beats) - 1))
    return int((beats[k] + beats[k + 1]) / 2)


def _ectopic_positions(beats, t_len, rng, n):
    """Midpoints of `n` distinct inter-beat gaps (fewer if the strip is short)."""
    if len(beats) < 2:
        return [t_len // 2]
    n_gaps = len(beats) - 1
    ks = rng.permutation(n_gaps)[:n]
    return [int((beats[k] + beats[k + 1]) / 2) for k in ks]
