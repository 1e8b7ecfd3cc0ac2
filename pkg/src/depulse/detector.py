"""Locate initial discontinuities from bursts of high-frequency energy.

The signal is cut into blocks of ``L`` samples with a hop of ``L/2``. Block
``b`` (0-based) covers samples ``[b*L/2, b*L/2 + L)``. For each block the mean
DFT magnitude above the cut-off bin is compared with its running median; the
normalized excess flags blocks hit by a discontinuity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NoPulseEvidenceError
from .signal_io import Signal

NO_EVIDENCE_EPS = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    L: int = 16
    xi: float = 0.3
    c: int = 5
    f_co_hz: float = 3000.0
    normalize: bool = True

    def validate(self, sample_rate: float | None = None) -> None:
        if self.L < 2 or self.L % 2:
            raise ConfigError(f"block length L must be even and >= 2, got {self.L}")
        if not 0 < self.xi <= 1 and self.normalize:
            raise ConfigError(f"threshold xi must lie in (0, 1], got {self.xi}")
        if self.c < 1 or self.c % 2 == 0:
            raise ConfigError(f"median window c must be odd and positive, got {self.c}")
        if self.f_co_hz < 0:
            raise ConfigError("cut-off frequency must be non-negative")
        if sample_rate is not None and self.f_co_hz >= sample_rate / 2 and self.f_co_hz > 0:
            raise ConfigError(f"cut-off {self.f_co_hz} Hz is not below Nyquist")


@dataclass(frozen=True)
class Detection:
    """``n0`` is the first sample of the first flagged block, ``M`` the span length."""

    n0: int
    M: int
    score: float

    @property
    def stop(self) -> int:
        return self.n0 + self.M


@dataclass(frozen=True)
class DetectorTrace:
    """Per-block intermediate values, handy for plotting."""

    mu: np.ndarray
    mu_median: np.ndarray
    delta_mu: np.ndarray
    hop: int


def _cutoff_bin(config: DetectorConfig, sample_rate: float) -> tuple[int, int]:
    alpha = int(round(config.f_co_hz * config.L / sample_rate))
    beta = config.L // 2
    if alpha > beta:
        raise ConfigError(f"cut-off bin {alpha} exceeds the last DFT bin {beta}")
    return alpha, beta


def high_band_mean(signal: Signal, config: DetectorConfig) -> np.ndarray:
    """Mean DFT magnitude over bins ``alpha_co .. L/2`` for every half-overlapping block."""
    config.validate(signal.sample_rate_hz)
    L = config.L
    x = signal.samples
    if x.size < L:
        raise DimensionError(f"signal shorter than one block ({x.size} < {L})")
    alpha, beta = _cutoff_bin(config, signal.sample_rate_hz)
    blocks = np.lib.stride_tricks.sliding_window_view(x, L)[:: L // 2]
    spectrum = np.abs(np.fft.rfft(blocks, axis=1))
    return spectrum[:, alpha:beta + 1].mean(axis=1)


def median_filter(seq, c: int) -> np.ndarray:
    """Running median over a window of ``c`` values with ``c // 2`` zeros padded at each end."""
    if c < 1 or c % 2 == 0:
        raise ConfigError(f"median window must be odd and positive, got {c}")
    seq = np.asarray(seq, dtype=np.float64)
    half = c // 2
    padded = np.concatenate((np.zeros(half), seq, np.zeros(half)))
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, c), axis=1)


def detector_trace(signal: Signal, config: DetectorConfig = DetectorConfig()) -> DetectorTrace:
    mu = high_band_mean(signal, config)
    mu_m = median_filter(mu, config.c)
    excess = mu - mu_m
    if config.normalize:
        peak = excess.max()
        if not peak > NO_EVIDENCE_EPS:
            raise NoPulseEvidenceError(
                "no block rises above its running median; the signal shows no pulse"
            )
        delta = excess / peak
    else:
        delta = excess
    return DetectorTrace(mu, mu_m, delta, config.L // 2)


def _group_runs(flags):
    idx = np.flatnonzero(flags)
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[cuts + 1]))
    stops = np.concatenate((idx[cuts], [idx[-1]]))
    return list(zip(starts.tolist(), stops.tolist()))


def detect_pulses(signal: Signal, config: DetectorConfig = DetectorConfig()) -> list[Detection]:
    """Return one :class:`Detection` per run of contiguous flagged blocks.

    A block is flagged when ``|delta_mu| >= xi``. Runs holding only negative
    excursions (dips left by the median filter) are not reported on their
    own: they extend the preceding positive run when they start within
    ``c // 2`` blocks of it and are dropped otherwise.
    """
    trace = detector_trace(signal, config)
    return detections_from_trace(trace, config)


def detections_from_trace(trace: DetectorTrace, config: DetectorConfig) -> list[Detection]:
    delta = trace.delta_mu
    hop, L = trace.hop, config.L
    groups = []
    for b_first, b_last in _group_runs(np.abs(delta) >= config.xi):
        seg = delta[b_first:b_last + 1]
        if seg.max() < config.xi:
            if groups and b_first - groups[-1][1] - 1 <= config.c // 2:
                groups[-1][1] = b_last
                groups[-1][2] = max(groups[-1][2], float(np.abs(seg).max()))
            continue
        groups.append([b_first, b_last, float(np.abs(seg).max())])
    return [
        Detection(n0=b_first * hop, M=(b_last - b_first) * hop + L, score=score)
        for b_first, b_last, score in groups
    ]
