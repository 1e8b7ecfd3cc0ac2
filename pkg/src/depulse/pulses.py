"""Pulse tail models: the parametric decaying sinusoid and the SE-kernel GP."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .errors import DegenerateFitError, DimensionError

SHAPE_FIELDS = ("V_t", "tau_m", "tau_f", "f_max", "f_min", "phi")


@dataclass(frozen=True)
class ShapeTailParams:
    """Decaying sinusoid with exponentially gliding frequency.

    Time constants are in seconds, frequencies in Hz, ``phi`` in radians.
    """

    V_t: float = 0.1
    tau_m: float = 0.1
    tau_f: float = 0.19
    f_max: float = 50.0
    f_min: float = 30.0
    phi: float = 0.5

    def __post_init__(self):
        if self.f_max < self.f_min and self.is_valid():
            warnings.warn("f_max < f_min: the tail frequency will rise", RuntimeWarning, stacklevel=3)

    def is_valid(self) -> bool:
        """Support of the improper uniform prior: positive times and frequencies."""
        return self.tau_m > 0 and self.tau_f > 0 and self.f_max > 0 and self.f_min > 0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in SHAPE_FIELDS])

    @classmethod
    def from_array(cls, values) -> "ShapeTailParams":
        return cls(*(float(v) for v in values))

    def replace(self, **changes) -> "ShapeTailParams":
        """Copy with some fields changed; does not repeat the ordering warning."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return replace(self, **changes)


# initial values recommended for the shape sampler, and the synthetic truth
# used to exercise it
TABLE_I_INITIAL = ShapeTailParams(V_t=0.1, tau_m=0.1, tau_f=0.19, f_max=50.0, f_min=30.0, phi=0.5)
TABLE_I_TRUTH = ShapeTailParams(V_t=0.3, tau_m=0.07, tau_f=0.013, f_max=60.0, f_min=20.0, phi=0.0)


@dataclass(frozen=True)
class GpHyper:
    sigma_f2: float
    sigma_l2: float
    sigma_n2: float = 1e-6

    def __post_init__(self):
        if not (self.sigma_f2 > 0 and self.sigma_l2 > 0 and self.sigma_n2 > 0):
            raise ValueError("GP hyperparameters must be strictly positive")


@dataclass(frozen=True)
class GpTail:
    v_t: np.ndarray = field(repr=False)
    hyper: GpHyper

    def __post_init__(self):
        v = np.array(self.v_t, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("GP tail samples must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "v_t", v)


def instantaneous_frequency(params: ShapeTailParams, tail_len: int, sample_rate: float) -> np.ndarray:
    m = np.arange(int(tail_len), dtype=np.float64)
    return (params.f_max - params.f_min) * np.exp(-m / (sample_rate * params.tau_f)) + params.f_min


def synth_shape_tail(params: ShapeTailParams, tail_len: int, sample_rate: float) -> np.ndarray:
    """Sample the parametric tail; offset 0 is the first sample after the discontinuity."""
    if tail_len < 0:
        raise DimensionError("tail length must be non-negative")
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")
    m = np.arange(int(tail_len), dtype=np.float64)
    fm = instantaneous_frequency(params, tail_len, sample_rate)
    envelope = params.V_t * np.exp(-m / (sample_rate * params.tau_m))
    return envelope * np.sin(2.0 * np.pi * m * fm / sample_rate + params.phi)


def se_kernel(dt, hyper: GpHyper):
    dt = np.asarray(dt, dtype=np.float64)
    return hyper.sigma_f2 * np.exp(-(dt**2) / (2.0 * hyper.sigma_l2))


def gram_matrix(n_points: int, hyper: GpHyper, jitter: float | None = None) -> np.ndarray:
    """Kernel matrix over sample positions ``0 .. n_points-1`` plus ``jitter * I``."""
    if n_points < 1:
        raise DimensionError("need at least one point")
    if jitter is None:
        jitter = 1e-8 * hyper.sigma_f2
    col = se_kernel(np.arange(n_points), hyper)
    col[0] += jitter
    return la.toeplitz(col)


# --- maximum-likelihood fit of the hyperparameters ---------------------------

MAX_FIT_POINTS = 1024
N_LENGTH_STARTS = 4


def _kernel_parts(t, log_theta):
    sf2, sl2, sn2 = np.exp(log_theta)
    d2 = (t[:, None] - t[None, :]) ** 2
    k = np.exp(-d2 / (2.0 * sl2))
    K = sf2 * k
    K[np.diag_indices_from(K)] += sn2
    return K, k, d2, (sf2, sl2, sn2)


def gp_log_evidence(y, t, hyper: GpHyper) -> float:
    """Log marginal likelihood of ``y = f(t) + noise`` under the SE kernel."""
    log_theta = np.log([hyper.sigma_f2, hyper.sigma_l2, hyper.sigma_n2])
    return -_neg_log_evidence(log_theta, np.asarray(y, float), np.asarray(t, float))[0]


def _neg_log_evidence(log_theta, y, t):
    K, k, d2, (sf2, sl2, sn2) = _kernel_parts(t, log_theta)
    try:
        cf = la.cho_factor(K, lower=True)
    except la.LinAlgError:
        return np.inf, np.zeros(3)
    alpha = la.cho_solve(cf, y)
    n = y.size
    nll = 0.5 * y @ alpha + np.log(np.diag(cf[0])).sum() + 0.5 * n * np.log(2 * np.pi)
    Kinv, info = la.lapack.dpotri(cf[0], lower=1)
    if info != 0:
        return np.inf, np.zeros(3)
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    dK_f = sf2 * k
    dK_l = dK_f * d2 / (2.0 * sl2)
    grad = np.array([
        0.5 * np.sum(W * dK_f),
        0.5 * np.sum(W * dK_l),
        0.5 * sn2 * np.trace(W),
    ])
    return nll, -grad


def initial_guesses(y, t) -> list[GpHyper]:
    """Multi-start points: one per log-spaced length scale."""
    var = float(np.var(y))
    step = float(t[1] - t[0]) if t.size > 1 else 1.0
    span = float(t[-1] - t[0]) if t.size > 1 else 1.0
    lengths = np.geomspace(2.0 * step, max(span / 2.0, 4.0 * step), N_LENGTH_STARTS)
    return [GpHyper(var, float(ell**2), 0.1 * var) for ell in lengths]


def fit_gp_hyperparams(y2_init, max_points: int = MAX_FIT_POINTS) -> GpTail:
    """Fit ``(sigma_f2, sigma_l2, sigma_n2)`` by maximum likelihood and smooth ``y2_init``.

    Long inputs are fit on an evenly decimated grid of at most ``max_points``
    samples (length scales stay in units of the original samples); the
    returned tail is the posterior mean at every original sample.
    """
    y = np.asarray(y2_init, dtype=np.float64).reshape(-1)
    n = y.size
    if n < 16:
        raise DimensionError("need at least 16 tail samples to fit the GP")
    if not np.all(np.isfinite(y)) or not np.any(y):
        raise DegenerateFitError("cannot fit a GP to an all-zero or non-finite tail", {"n": n})
    var = float(np.var(y))
    if not var > 0:
        raise DegenerateFitError("tail has zero variance", {"n": n})

    q = max(1, math.ceil(n / max_points))
    t_fit = np.arange(0, n, q, dtype=np.float64)
    y_fit = y[::q]

    span = max(float(n), 2.0)
    bounds = [
        (np.log(var * 1e-6), np.log(var * 1e3)),
        (np.log(0.25 * q * q), np.log((100.0 * span) ** 2)),
        (np.log(var * 1e-10), np.log(var * 10.0)),
    ]
    best, failures = None, []
    for guess in initial_guesses(y_fit, t_fit):
        x0 = np.log([guess.sigma_f2, guess.sigma_l2, guess.sigma_n2])
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(
            _neg_log_evidence, x0, args=(y_fit, t_fit), jac=True, method="L-BFGS-B",
            bounds=bounds, options={"ftol": 1e-6, "gtol": 1e-6, "maxiter": 500},
        )
        if not np.isfinite(res.fun):
            failures.append(res.message)
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise DegenerateFitError("GP evidence optimization failed from every start",
                                 {"messages": failures, "n": n, "var": var})
    sf2, sl2, sn2 = np.exp(best.x)
    hyper = GpHyper(float(sf2), float(sl2), float(sn2))
    return GpTail(gp_posterior_mean(y_fit, t_fit, np.arange(n, dtype=np.float64), hyper), hyper)


def gp_posterior_mean(y, t, t_out, hyper: GpHyper) -> np.ndarray:
    """Noisy-GP regression mean at ``t_out`` given observations ``y`` at ``t``."""
    K = se_kernel(t[:, None] - t[None, :], hyper)
    K[np.diag_indices_from(K)] += hyper.sigma_n2
    alpha = la.cho_solve(la.cho_factor(K, lower=True), y)
    out = np.empty(t_out.size)
    for lo in range(0, t_out.size, 4096):
        chunk = t_out[lo:lo + 4096]
        out[lo:lo + chunk.size] = se_kernel(chunk[:, None] - t[None, :], hyper) @ alpha
    return out
