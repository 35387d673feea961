"""Synthetic 12-lead ECG-like signals.

Nothing here aspires to physiological fidelity. Signals are a periodic
spike train plus small structured perturbations ("motifs") that stand
in for clinical attributes; what matters is that every motif is
reliably detectable from the waveform and that injection is exactly
reproducible from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")

# per-lead base gain: distinct, fixed, roughly realistic spread
_LEAD_GAINS = np.linspace(0.7, 1.3, 12)

# axis patterns flip polarity of characteristic lead groups
_AXIS_SIGNS = {
    "normal": np.ones(12),
    "leftward": np.array([1, -1, -1, 1, 1, -1, 1, -1, -1, 1, 1, 1], dtype=float),
    "rightward": np.array([-1, 1, 1, -1, -1, 1, -1, 1, 1, -1, 1, 1], dtype=float),
}

# beat spacing in samples per RR category (nominal 100 Hz)
RR_PERIODS = {"short": 25, "normal": 36, "long": 50}

AMPLITUDE_LIMIT = 10.0


@dataclass
class ECGSignal:
    samples: np.ndarray                  # [T, C] float64
    lead_mask: np.ndarray = field(default=None)  # [C] bool, True = visible

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("signal must be [T, C]")
        if self.lead_mask is None:
            self.lead_mask = np.ones(self.samples.shape[1], dtype=bool)
        else:
            self.lead_mask = np.asarray(self.lead_mask, dtype=bool)
            if self.lead_mask.shape != (self.samples.shape[1],):
                raise ValueError("lead mask must have one flag per lead")


def _bump(t_len: int, center: float, width: float, amp: float) -> np.ndarray:
    t = np.arange(t_len)
    return amp * np.exp(-0.5 * ((t - center) / width) ** 2)


def beat_positions(t_len: int, period: int, phase: int) -> np.ndarray:
    return np.arange(phase, t_len, period)


def synth_base(rng: np.random.Generator, t_len: int, n_leads: int,
               axis: str, rr: str, noise_floor: float = 0.02):
    """Base quasi-ECG: QRS spikes + T bumps + respiration + floor noise.

    Returns (samples [T, C], beats) where beats are the spike centers
    that motif injectors anchor to.
    """
    period = RR_PERIODS[rr]
    phase = int(rng.integers(2, period))
    beats = beat_positions(t_len, period, phase)

    trace = np.zeros(t_len)
    for b in beats:
        trace += _bump(t_len, b, 1.6, 2.2)          # QRS
        trace += _bump(t_len, b + 8, 3.0, 0.45)     # T wave
    trace += 0.05 * np.sin(2 * np.pi * np.arange(t_len) / t_len * 1.3
                           + rng.uniform(0, 2 * np.pi))

    gains = _LEAD_GAINS * _AXIS_SIGNS[axis]
    x = trace[:, None] * gains[None, :]
    x += noise_floor * rng.normal(size=(t_len, n_leads))
    return x, beats


def clip_amplitude(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -AMPLITUDE_LIMIT, AMPLITUDE_LIMIT)


# ---------------------------------------------------------------------
# lead masking
# ---------------------------------------------------------------------

def apply_lead_mask(sig: ECGSignal, keep) -> ECGSignal:
    """Zero all leads outside `keep` (names or indices); original untouched."""
    mask = np.zeros(sig.samples.shape[1], dtype=bool)
    for lead in keep:
        idx = LEAD_NAMES.index(lead) if isinstance(lead, str) else int(lead)
        mask[idx] = True
    if not mask.any():
        raise ValueError("lead mask would remove every lead")
    out = sig.samples.copy()
    out[:, ~mask] = 0.0
    return ECGSignal(out, lead_mask=mask)


def random_lead_keep(rng: np.random.Generator, n_leads: int, p_mask: float = 0.5):
    """Training-time random masking: each lead dropped independently.

    Returns the list of kept indices; a draw that would drop everything
    keeps all leads instead (masking noise should never erase the input).
    """
    dropped = rng.random(n_leads) < p_mask
    if dropped.all():
        return list(range(n_leads))
    return [i for i in range(n_leads) if not dropped[i]]
