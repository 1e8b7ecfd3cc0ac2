"""Detection-to-restoration orchestration, pulse injection and the SNR metric."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .ar import DEFAULT_ORDER, estimate_ar_covariance
from .block import BlockModel, GpTailPrior
from .detector import Detection
from .errors import ConfigError, ContextError, DepulseError, DimensionError, SpecError
from .pulses import SHAPE_FIELDS, TABLE_I_INITIAL, ShapeTailParams, fit_gp_hyperparams, synth_shape_tail
from .sampler import (
    Chain,
    Models,
    PosteriorEstimate,
    SamplerConfig,
    chain_estimate,
    initial_state,
    rng_for,
    run_gibbs,
)
from .signal_io import Excerpt, Signal, read_csv, write_csv

SNR_CAP_DB = 300.0
SPEC_HEADER = ["n0", "M", "sigma_d2", *SHAPE_FIELDS, "tail_len"]


# --- injection ----------------------------------------------------------------

@dataclass(frozen=True)
class PulseSpec:
    n0: int
    M: int
    sigma_d2: float
    params: ShapeTailParams
    tail_len: int

    @property
    def stop(self) -> int:
        return self.n0 + self.M + self.tail_len


@dataclass(frozen=True)
class InjectionSpec:
    pulses: list
    seed: int = 0

    def validate(self, length: int) -> None:
        ordered = sorted(self.pulses, key=lambda p: p.n0)
        for p in ordered:
            if p.n0 < 0 or p.M < 0 or p.tail_len < 0 or p.stop > length:
                raise SpecError(f"pulse at n0={p.n0} does not fit in {length} samples")
            if p.sigma_d2 < 0:
                raise SpecError("sigma_d2 must be non-negative")
        for a, b in zip(ordered, ordered[1:]):
            if b.n0 < a.stop:
                raise SpecError(f"pulses at {a.n0} and {b.n0} overlap")


def inject_pulse(clean: Signal, spec: InjectionSpec) -> Signal:
    """Add a white burst and a parametric tail for every pulse in the spec."""
    spec.validate(len(clean))
    rng = np.random.default_rng(spec.seed)
    y = clean.samples.copy()
    for p in spec.pulses:
        y[p.n0:p.n0 + p.M] += np.sqrt(p.sigma_d2) * rng.standard_normal(p.M)
        y[p.n0 + p.M:p.stop] += synth_shape_tail(p.params, p.tail_len, clean.sample_rate_hz)
    return Signal(y, clean.sample_rate_hz)


def write_spec_csv(path, spec: InjectionSpec, comment: str | None = None) -> None:
    rows = [[p.n0, p.M, p.sigma_d2, *p.params.as_array().tolist(), p.tail_len] for p in spec.pulses]
    write_csv(path, SPEC_HEADER, rows, comment)


def read_spec_csv(path, seed: int = 0) -> InjectionSpec:
    _, header, rows = read_csv(path)
    if header != SPEC_HEADER:
        raise SpecError(f"{path}: expected columns {','.join(SPEC_HEADER)}")
    pulses = []
    for k, row in enumerate(rows, start=1):
        if len(row) != len(SPEC_HEADER):
            raise SpecError(f"{path}: row {k} has {len(row)} fields")
        try:
            vals = dict(zip(SPEC_HEADER, row))
            params = ShapeTailParams(*(float(vals[f]) for f in SHAPE_FIELDS))
            pulses.append(PulseSpec(int(vals["n0"]), int(vals["M"]), float(vals["sigma_d2"]),
                                    params, int(vals["tail_len"])))
        except ValueError as exc:
            raise SpecError(f"{path}: row {k}: {exc}") from None
    return InjectionSpec(pulses, seed)


# --- metrics and post-processing ---------------------------------------------

def snr_db(reference: Signal, test: Signal) -> float:
    ref = reference.samples if isinstance(reference, Signal) else np.asarray(reference, float)
    tst = test.samples if isinstance(test, Signal) else np.asarray(test, float)
    if ref.shape != tst.shape:
        raise DimensionError("SNR needs signals of equal length")
    err = np.sum((ref - tst) ** 2)
    if err == 0:
        return SNR_CAP_DB
    return float(min(10.0 * np.log10(np.sum(ref**2) / err), SNR_CAP_DB))


def fade_out_tail(v_t, n_fade: int) -> np.ndarray:
    """Scale the last ``n_fade`` samples by a linear ramp ending at exactly zero."""
    v = np.array(v_t, dtype=np.float64)
    n_fade = int(n_fade)
    if not 0 <= n_fade <= v.size:
        raise ValueError(f"fade length {n_fade} outside [0, {v.size}]")
    if n_fade:
        v[v.size - n_fade:] *= np.arange(n_fade - 1, -1, -1) / n_fade
    return v


# --- restoration --------------------------------------------------------------

@dataclass(frozen=True)
class RestoreConfig:
    kind: str = "gp"
    excerpt_len: int = 8000
    pre_context: int = 500
    ar_order: int = DEFAULT_ORDER
    ar_fit_len: int = 450
    fade_len: Optional[int] = None  # None: 1000 for the GP model, 0 for the shape model
    sampler: Optional[SamplerConfig] = None  # None: the model's default protocol
    shape_init: ShapeTailParams = TABLE_I_INITIAL
    sigma_d2_init: Optional[float] = None
    gp_fit_points: int = 1024
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.kind not in ("shape", "gp"):
            raise ConfigError(f"model must be 'shape' or 'gp', got {self.kind!r}")
        if self.ar_fit_len > self.pre_context:
            raise ConfigError("the AR fit window must lie before the pulse start")
        if self.pre_context >= self.excerpt_len:
            raise ConfigError("pre-context must be shorter than the excerpt")
        if self.fade_len is not None and self.fade_len < 0:
            raise ConfigError("fade length must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        self.sampler_config().validate()

    def sampler_config(self) -> SamplerConfig:
        if self.sampler is not None:
            return replace(self.sampler, ar_fit_len=self.ar_fit_len, seed=self.seed)
        proto = SamplerConfig.gp_protocol if self.kind == "gp" else SamplerConfig.shape_protocol
        return proto(ar_fit_len=self.ar_fit_len, seed=self.seed)

    @property
    def effective_fade(self) -> int:
        if self.fade_len is not None:
            return self.fade_len
        return 1000 if self.kind == "gp" else 0


@dataclass
class PulseReport:
    detection: Detection
    excerpt_start: int
    estimate: Optional[PosteriorEstimate] = None
    acceptance: dict = field(default_factory=dict)
    acceptance_post_burn: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: Optional[str] = None
    chain: Optional[Chain] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def n0_abs(self) -> Optional[int]:
        return None if self.estimate is None else self.excerpt_start + self.estimate.n0


@dataclass
class RestorationReport:
    pulses: list
    snr_before: Optional[float] = None
    snr_after: Optional[float] = None

    @property
    def failures(self) -> list:
        return [p for p in self.pulses if not p.ok]


def restore_excerpt(excerpt: Excerpt, detection: Detection, config: RestoreConfig, rng,
                    sample_rate: float = 44100.0):
    """Restore one pulse; ``detection.n0`` is relative to the excerpt start.

    Returns ``(restored excerpt, PulseReport)``.
    """
    config.validate()
    t0 = time.perf_counter()
    y = np.asarray(excerpt.samples)
    n0, M = int(detection.n0), int(detection.M)
    if n0 < config.ar_fit_len:
        raise ContextError(
            f"pulse starts {n0} samples into the excerpt; {config.ar_fit_len} clean samples are needed"
        )
    ar = estimate_ar_covariance(y[:config.ar_fit_len], config.ar_order)
    scfg = config.sampler_config()
    block = BlockModel(y, ar, scfg.exact_normalizer)
    if y.size - n0 - M < ar.order + 1:
        raise ContextError("not enough samples after the detected discontinuity")
    if config.kind == "gp":
        tail0 = fit_gp_hyperparams(y[n0 + M:], config.gp_fit_points)
        n_max = y.size - max(config.ar_fit_len, ar.order) - 1
        models = Models(block, "gp", sample_rate, scfg,
                        gp_prior=GpTailPrior(tail0.hyper, n_max))
    else:
        tail0 = config.shape_init
        models = Models(block, "shape", sample_rate, scfg)
    init = initial_state(models, n0, M, config.sigma_d2_init, tail0)
    chain = run_gibbs(models, init, rng)
    est = chain_estimate(chain, y, models.sample_rate)

    restored = y.copy()
    restored[est.n0:est.n0 + est.M] = est.x1
    restored[est.n0 + est.M:] = y[est.n0 + est.M:] - fade_out_tail(est.v_t, min(config.effective_fade, est.v_t.size))
    report = PulseReport(
        detection, excerpt.start, est,
        acceptance=chain.acceptance(0), acceptance_post_burn=chain.acceptance(scfg.burn_in),
        seconds=time.perf_counter() - t0, chain=chain,
    )
    return excerpt.with_samples(restored), report


def restore_signal(signal: Signal, detections, config: RestoreConfig = RestoreConfig()):
    """Restore every detection in its own excerpt and splice the results back.

    Each excerpt places the detected start ``pre_context`` samples in, shifted
    as needed to stay inside the signal. Failures are recorded per pulse.
    """
    config.validate()
    detections = sorted(detections, key=lambda d: d.n0)
    for a, b in zip(detections, detections[1:]):
        if b.n0 < a.stop:
            raise SpecError("detections overlap")
    N = min(config.excerpt_len, len(signal))

    def work(i_det):
        i, det = i_det
        start = min(max(det.n0 - config.pre_context, 0), len(signal) - N)
        ex = Excerpt(start, signal.samples[start:start + N])
        local = Detection(det.n0 - start, det.M, det.score)
        try:
            restored, rep = restore_excerpt(ex, local, config, rng_for(config.seed, i),
                                           signal.sample_rate_hz)
            rep.detection = det
            return restored, rep
        except (DepulseError, np.linalg.LinAlgError) as exc:
            return None, PulseReport(det, start, error=f"{type(exc).__name__}: {exc}")

    jobs = list(enumerate(detections))
    if config.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    out = signal.samples.copy()
    reports = []
    for restored, rep in results:
        reports.append(rep)
        if restored is None:
            continue
        lo = rep.excerpt_start + rep.estimate.n0
        out[lo:restored.stop] = restored.samples[rep.estimate.n0:]
    return Signal(out, signal.sample_rate_hz), RestorationReport(reports)

