"""Mono PCM-16 WAV input/output, excerpt handling and CSV dumps."""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundsError, DimensionError, FormatError, TruncatedFileError

FULL_SCALE = 2**15
MAX_SAMPLE = 1.0 - 2.0**-15


def _frozen(samples) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Signal:
    """A mono recording: real samples nominally in [-1, 1] and a sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = 44100

    def __post_init__(self):
        arr = _frozen(self.samples)
        if arr.size == 0:
            raise DimensionError("a Signal needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Signal samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class Excerpt:
    """A copy of ``samples[start:start + N]`` of some parent signal."""

    start: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.start < 0:
            raise BoundsError("excerpt start must be non-negative")
        object.__setattr__(self, "samples", _frozen(self.samples))

    @property
    def N(self) -> int:
        return self.samples.size

    @property
    def stop(self) -> int:
        return self.start + self.N

    def with_samples(self, samples) -> "Excerpt":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size != self.N:
            raise DimensionError("replacement samples must keep the excerpt length")
        return Excerpt(self.start, samples)


def read_wav(path) -> Signal:
    """Read a mono 16-bit PCM WAV file.

    Raw integers are divided by 2**15, so full negative scale maps to -1.0.
    """
    path = Path(path)
    try:
        wf = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise TruncatedFileError(f"{path}: truncated header") from exc
    with wf:
        if wf.getnchannels() != 1:
            raise FormatError(f"{path}: expected 1 channel, found {wf.getnchannels()}")
        if wf.getsampwidth() != 2:
            raise FormatError(f"{path}: expected 16-bit samples, found {8 * wf.getsampwidth()}-bit")
        if wf.getcomptype() != "NONE":
            raise FormatError(f"{path}: compressed WAV is not supported")
        n_frames = wf.getnframes()
        raw = wf.readframes(n_frames)
        rate = wf.getframerate()
    if len(raw) != 2 * n_frames:
        raise TruncatedFileError(
            f"{path}: header announces {n_frames} frames, data holds {len(raw) // 2}"
        )
    ints = np.frombuffer(raw, dtype="<i2")
    return Signal(ints.astype(np.float64) / FULL_SCALE, rate)


def quantize(samples) -> np.ndarray:
    """Clamp to [-1, 1 - 2**-15] and round to the nearest 16-bit integer."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, MAX_SAMPLE)
    return np.rint(x * FULL_SCALE).astype("<i2")


def write_wav(path, signal: Signal) -> None:
    ints = quantize(signal.samples)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate_hz)
        wf.writeframes(ints.tobytes())


def extract_excerpt(signal: Signal, start: int, N: int) -> Excerpt:
    start, N = int(start), int(N)
    if start < 0 or N <= 0 or start + N > len(signal):
        raise BoundsError(
            f"excerpt [{start}, {start + N}) does not fit in a signal of length {len(signal)}"
        )
    return Excerpt(start, signal.samples[start:start + N])


def replace_excerpt(signal: Signal, excerpt: Excerpt) -> Signal:
    if excerpt.stop > len(signal):
        raise BoundsError(
            f"excerpt [{excerpt.start}, {excerpt.stop}) does not fit in a signal "
            f"of length {len(signal)}"
        )
    out = signal.samples.copy()
    out[excerpt.start:excerpt.stop] = excerpt.samples
    return Signal(out, signal.sample_rate_hz)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None):
    """Write a CSV with an optional leading ``# comment`` line and a header row."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns ``(comments, header, rows)``."""
    comments = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{path}: no header row") from None
    return comments, header, [row for row in reader]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return v
