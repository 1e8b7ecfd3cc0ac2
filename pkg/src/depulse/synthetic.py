"""Synthetic test signals and pulse layouts."""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .pipeline import InjectionSpec, PulseSpec
from .pulses import TABLE_I_TRUTH, ShapeTailParams
from .signal_io import Signal

# two weak resonances (about 440 Hz and 1.9 kHz at 44.1 kHz): close to white on the
# time scale of a pulse tail, which is what the order-zero tail model assumes
DEFAULT_POLES = ((0.1, 440.0), (0.05, 1900.0))


def resonant_ar(poles=DEFAULT_POLES, sample_rate: float = 44100.0) -> np.ndarray:
    """AR coefficients ``a`` (``x[n] = sum a_i x[n-i] + e[n]``) from pole radii and frequencies."""
    den = np.array([1.0])
    for r, f in poles:
        w = 2 * np.pi * f / sample_rate
        den = np.convolve(den, [1.0, -2 * r * np.cos(w), r * r])
    return -den[1:]


def ar_signal(duration_s: float = 3.0, sample_rate: int = 44100, rms: float = 0.02,
              a=None, seed: int = 0) -> Signal:
    """Stationary AR process scaled to the requested RMS level."""
    a = resonant_ar(sample_rate=sample_rate) if a is None else np.asarray(a, dtype=np.float64)
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    warm = 4096
    e = rng.standard_normal(n + warm)
    x = lfilter([1.0], np.concatenate(([1.0], -a)), e)[warm:]
    x *= rms / np.sqrt(np.mean(x**2))
    return Signal(x, sample_rate)


def table_i_spec(n0: int, tail_len: int, seed: int = 0, params: ShapeTailParams = TABLE_I_TRUTH) -> InjectionSpec:
    return InjectionSpec([PulseSpec(n0, 10, 0.5, params, tail_len)], seed)


def uniform_pulses(n_pulses: int, length: int, tail_len: int, M: int = 10, sigma_d2: float = 0.5,
                   params: ShapeTailParams = TABLE_I_TRUTH, margin: int = 1000, seed: int = 0) -> InjectionSpec:
    """Pulses at uniformly spaced starts, leaving ``margin`` samples at both ends."""
    span = length - 2 * margin - M - tail_len
    if n_pulses < 1 or span < 0:
        raise ValueError("signal too short for the requested pulses")
    starts = np.linspace(margin, margin + span, n_pulses).round().astype(int)
    if n_pulses > 1 and np.min(np.diff(starts)) <= M + tail_len:
        raise ValueError("pulses would overlap")
    return InjectionSpec([PulseSpec(int(s), M, sigma_d2, params, tail_len) for s in starts], seed)
