"""Gibbs sampler over the pulse location, tail, hidden samples and burst variance.

Each sweep runs, in order: a Metropolis-Hastings move on ``(n0, M)``, the
tail block (shape parameters by MH then the amplitude and ``x1`` exactly, or
the GP posterior mean then ``x1``), and an exact Inverse-Gamma draw of
``sigma_d2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .block import BlockModel, GpTailPrior
from .errors import ConfigError, DimensionError, SamplerError
from .inference import ALPHA_D, BETA_D, sigma_d2_posterior_params
from .pulses import SHAPE_FIELDS, GpTail, ShapeTailParams, TABLE_I_INITIAL, synth_shape_tail
from .signal_io import read_csv, write_csv

MH_FIELDS = SHAPE_FIELDS[1:]  # V_t has an exact conditional
TABLE_I_PROPOSAL_VARS = (1.5e-5, 5e-7, 6.0, 0.6, 1e-2)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 1000
    burn_in: int = 500
    thin: int = 1
    loc_proposal_width: int = 10
    shape_proposal_vars: tuple = TABLE_I_PROPOSAL_VARS
    seed: int = 0
    sequential_shape: bool = False
    ar_fit_len: int = 450
    alpha_d: float = ALPHA_D
    beta_d: float = BETA_D
    exact_normalizer: bool = True

    def validate(self) -> None:
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn-in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.loc_proposal_width < 1:
            raise ConfigError("location proposal width must be positive")
        if len(self.shape_proposal_vars) != len(MH_FIELDS):
            raise ConfigError(f"need {len(MH_FIELDS)} shape proposal variances")
        if any(v < 0 for v in self.shape_proposal_vars):
            raise ConfigError("proposal variances must be non-negative")

    @classmethod
    def gp_protocol(cls, **kw) -> "SamplerConfig":
        return cls(**{"iterations": 200, "burn_in": 150, **kw})

    @classmethod
    def shape_protocol(cls, **kw) -> "SamplerConfig":
        return cls(**{"iterations": 1000, "burn_in": 500, **kw})


Tail = Union[ShapeTailParams, GpTail]


@dataclass(frozen=True)
class ChainState:
    n0: int
    M: int
    sigma_d2: float
    tail: Tail
    x1: np.ndarray = field(repr=False)

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=np.float64).reshape(-1)
        if x1.size != self.M:
            raise DimensionError(f"x1 has {x1.size} samples but M={self.M}")
        object.__setattr__(self, "x1", x1)


@dataclass
class Chain:
    states: list
    loc_accept: np.ndarray
    loc_in_bounds: np.ndarray
    tail_accept: np.ndarray
    config: SamplerConfig
    kind: str

    def __len__(self):
        return len(self.states)

    def acceptance(self, start: int = 0) -> dict:
        """Acceptance rates of the MH moves from iteration ``start`` on."""
        out = {"location": float(np.mean(self.loc_accept[start:]))}
        if self.kind == "shape":
            out["shape"] = float(np.mean(self.tail_accept[start:]))
        return out


@dataclass(frozen=True)
class Interval:
    mean: float
    lo: float
    hi: float

    def __str__(self):
        return f"{self.mean:.6g} [{self.lo:.6g}; {self.hi:.6g}]"


@dataclass(frozen=True)
class PosteriorEstimate:
    n0: int
    M: int
    params: dict
    x1: np.ndarray = field(repr=False)
    v_t: np.ndarray = field(repr=False)
    n_samples: int = 0


@dataclass
class Models:
    """Everything the steps need besides the chain state."""

    block: BlockModel
    kind: str
    sample_rate: float
    config: SamplerConfig
    gp_prior: Optional[GpTailPrior] = None
    log_target: Optional[Callable[[int, int], float]] = None  # test hook for the location step
    _gp_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("shape", "gp"):
            raise ConfigError(f"unknown tail model {self.kind!r}")
        if self.kind == "gp" and self.gp_prior is None:
            raise ConfigError("the GP model needs a prior")

    @property
    def y(self):
        return self.block.y

    @property
    def N(self):
        return self.block.N

    def in_bounds(self, n0: int, M: int) -> bool:
        lo = max(self.config.ar_fit_len, self.block.P)
        return n0 >= lo and M >= 1 and self.N - n0 - M >= self.block.P + 1

    def tail_for(self, state: ChainState, n0: int, M: int) -> np.ndarray:
        """Tail samples implied by the state for the partition ``(n0, M)``."""
        n = self.N - n0 - M
        if isinstance(state.tail, ShapeTailParams):
            return synth_shape_tail(state.tail, n, self.sample_rate)
        return regrid_tail(state.tail.v_t, self.N, n)

    def gp_mean(self, n0: int, M: int) -> np.ndarray:
        key = (n0, M)
        if key not in self._gp_cache:
            if len(self._gp_cache) > 32:
                self._gp_cache.clear()
            v = self.block.gp_mean(n0, M, self.gp_prior)
            v.setflags(write=False)
            self._gp_cache[key] = v
        return self._gp_cache[key]


def regrid_tail(v_t, N: int, new_len: int) -> np.ndarray:
    """Re-cut a tail stored at the end of an N-sample block to a new length.

    Samples keep their absolute positions; positions before the old tail
    start take its first value.
    """
    v_t = np.asarray(v_t)
    old_start = N - v_t.size
    new_start = N - new_len
    if new_start >= old_start:
        return v_t[new_start - old_start:].copy()
    return np.concatenate((np.full(old_start - new_start, v_t[0]), v_t))


def mh_location_step(state: ChainState, models: Models, rng):
    """Propose ``(n0, M)`` jointly from a symmetric discrete uniform window.

    Returns ``(n0, M, accepted, in_bounds)``.
    """
    half = models.config.loc_proposal_width // 2
    d0, dM = rng.integers(-half, half + 1, size=2)
    u = rng.random()
    n0, M = state.n0 + int(d0), state.M + int(dM)
    if not models.in_bounds(n0, M):
        return state.n0, state.M, False, False
    if (n0, M) == (state.n0, state.M):
        return n0, M, True, True

    def target(a, b):
        if models.log_target is not None:
            return models.log_target(a, b)
        return models.block.loglik(a, b, state.sigma_d2, models.tail_for(state, a, b))

    log_ratio = target(n0, M) - target(state.n0, state.M)
    if np.log(u) < log_ratio:
        return n0, M, True, True
    return state.n0, state.M, False, True


def _shape_loglik(models: Models, state: ChainState, params: ShapeTailParams) -> float:
    n = models.N - state.n0 - state.M
    v = synth_shape_tail(params, n, models.sample_rate)
    return models.block.loglik(state.n0, state.M, state.sigma_d2, v)


def shape_tail_block_step(state: ChainState, models: Models, rng):
    """MH on ``(tau_m, tau_f, f_max, f_min, phi)``, then exact draws of ``V_t`` and ``x1``.

    Returns ``(params, x1, acceptance)`` where acceptance is the fraction of
    accepted proposals in this step (0 or 1 for the joint proposal).
    """
    params = state.tail
    sd = np.sqrt(np.asarray(models.config.shape_proposal_vars, dtype=np.float64))
    current = _shape_loglik(models, state, params)
    groups = [[i] for i in range(sd.size)] if models.config.sequential_shape else [list(range(sd.size))]
    accepted = 0
    for idx in groups:
        step = rng.standard_normal(sd.size) * sd
        u = rng.random()
        values = np.array([getattr(params, f) for f in MH_FIELDS])
        values[idx] += step[idx]
        proposal = params.replace(**dict(zip(MH_FIELDS, values.tolist())))
        if not proposal.is_valid():
            continue
        cand = _shape_loglik(models, state, proposal)
        if np.log(u) < cand - current:
            params, current = proposal, cand
            accepted += 1

    n = models.N - state.n0 - state.M
    g = synth_shape_tail(params.replace(V_t=1.0), n, models.sample_rate)
    mean, var = models.block.amplitude_conditional(state.n0, state.M, state.sigma_d2, g)
    V = mean + np.sqrt(var) * rng.standard_normal()
    params = params.replace(V_t=float(V))
    x1 = models.block.sample_x1(state.n0, state.M, state.sigma_d2, V * g, rng)
    return params, x1, accepted / len(groups)


def gp_tail_block_step(state: ChainState, models: Models, rng):
    """Set the tail to its conditional posterior mean, then draw ``x1``.

    The hyperparameters in ``state.tail`` are carried over unchanged.
    """
    v = models.gp_mean(state.n0, state.M)
    tail = GpTail(v, state.tail.hyper)
    x1 = models.block.sample_x1(state.n0, state.M, state.sigma_d2, v, rng)
    return tail, x1


def sigma_d2_step(y1, x1, rng, alpha_d: float = ALPHA_D, beta_d: float = BETA_D) -> float:
    """Exact Inverse-Gamma draw given ``v_d = y1 - x1``."""
    alpha, beta = sigma_d2_posterior_params(np.asarray(y1) - np.asarray(x1), alpha_d, beta_d)
    return float(beta / rng.gamma(alpha))


def rng_for(seed: int, pulse_index: int = 0) -> np.random.Generator:
    """Independent stream per pulse, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(pulse_index),)))


def initial_state(models: Models, n0: int, M: int, sigma_d2: float | None = None,
                  tail: Tail | None = None) -> ChainState:
    if not models.in_bounds(n0, M):
        raise ConfigError(f"initial (n0={n0}, M={M}) is outside the admissible range")
    y1 = models.y[n0:n0 + M]
    if sigma_d2 is None:
        sigma_d2 = max(float(np.var(y1)), 10.0 * models.block.sigma_e2)
    if tail is None:
        if models.kind == "gp":
            raise ConfigError("the GP model needs an initial GpTail")
        tail = TABLE_I_INITIAL
    if isinstance(tail, GpTail) and tail.v_t.size != models.N - n0 - M:
        tail = GpTail(regrid_tail(tail.v_t, models.N, models.N - n0 - M), tail.hyper)
    return ChainState(n0, M, float(sigma_d2), tail, np.zeros(M))


def run_gibbs(models: Models, init: ChainState, rng, progress: Callable | None = None) -> Chain:
    cfg = models.config
    cfg.validate()
    T = cfg.iterations
    states = []
    loc_acc = np.zeros(T, dtype=bool)
    loc_in = np.zeros(T, dtype=bool)
    tail_acc = np.zeros(T)
    state = init
    for it in range(T):
        try:
            n0, M, acc, inb = mh_location_step(state, models, rng)
            loc_acc[it], loc_in[it] = acc, inb
            if (n0, M) != (state.n0, state.M):
                tail = state.tail
                if isinstance(tail, GpTail):
                    tail = GpTail(models.tail_for(state, n0, M), tail.hyper)
                x1 = np.zeros(M)
                k = min(M, state.M)
                x1[:k] = state.x1[:k] if n0 == state.n0 else 0.0
                state = ChainState(n0, M, state.sigma_d2, tail, x1)
            if models.kind == "shape":
                tail, x1, rate = shape_tail_block_step(state, models, rng)
                tail_acc[it] = rate
            else:
                tail, x1 = gp_tail_block_step(state, models, rng)
            s2 = sigma_d2_step(models.y[n0:n0 + M], x1, rng, cfg.alpha_d, cfg.beta_d)
        except np.linalg.LinAlgError as exc:
            raise SamplerError(str(exc), it) from exc
        state = ChainState(n0, M, s2, tail, x1)
        states.append(state)
        if progress is not None:
            progress(it, state)
    return Chain(states, loc_acc, loc_in, tail_acc, cfg, models.kind)


# --- summaries ----------------------------------------------------------------

def retained_indices(n: int, burn_in: int, thin: int) -> np.ndarray:
    if thin < 1:
        raise ConfigError("thin must be at least 1")
    idx = np.arange(burn_in, n, thin)
    if idx.size == 0:
        raise ConfigError("no samples left after burn-in and thinning")
    return idx


def scalar_traces(chain: Chain) -> dict:
    """Per-iteration scalar parameters, keyed by name."""
    out = {
        "n0": np.array([s.n0 for s in chain.states], dtype=float),
        "M": np.array([s.M for s in chain.states], dtype=float),
        "sigma_d2": np.array([s.sigma_d2 for s in chain.states]),
    }
    if chain.kind == "shape":
        for f in SHAPE_FIELDS:
            out[f] = np.array([getattr(s.tail, f) for s in chain.states])
    else:
        out["vt_norm"] = np.array([np.linalg.norm(s.tail.v_t) for s in chain.states])
    return out


def summarize(samples) -> Interval:
    samples = np.asarray(samples, dtype=np.float64)
    lo, hi = np.percentile(samples, [2.5, 97.5])
    mean = float(samples.mean())
    slack = 1e-9 * max(abs(lo), abs(hi), 1e-300)
    if not lo - slack <= mean <= hi + slack:
        warnings.warn("posterior mean lies outside its 95% interval", RuntimeWarning, stacklevel=2)
    return Interval(mean, float(lo), float(hi))


def chain_estimate(chain: Chain, y, sample_rate: float, burn_in: int | None = None,
                   thin: int | None = None) -> PosteriorEstimate:
    """Posterior means and 95% intervals from retained samples.

    ``x1`` and ``v_t`` are the elementwise means of the per-sample clean
    signal and pulse, cut to the rounded mean ``(n0, M)``.
    """
    burn_in = chain.config.burn_in if burn_in is None else burn_in
    thin = chain.config.thin if thin is None else thin
    idx = retained_indices(len(chain), burn_in, thin)
    traces = scalar_traces(chain)
    params = {k: summarize(v[idx]) for k, v in traces.items()}
    y = np.asarray(y, dtype=np.float64)
    N = y.size
    clean = np.zeros(N)
    for i in idx:
        s = chain.states[i]
        x = y.copy()
        x[s.n0:s.n0 + s.M] = s.x1
        if isinstance(s.tail, ShapeTailParams):
            x[s.n0 + s.M:] -= synth_shape_tail(s.tail, N - s.n0 - s.M, sample_rate)
        else:
            x[s.n0 + s.M:] -= s.tail.v_t
        clean += x
    clean /= idx.size
    n0 = int(round(params["n0"].mean))
    M = int(round(params["M"].mean))
    return PosteriorEstimate(n0, M, params, clean[n0:n0 + M], y[n0 + M:] - clean[n0 + M:], idx.size)


def chain_rows(chain: Chain):
    traces = scalar_traces(chain)
    names = list(traces)
    header = ["iteration"] + names + ["loc_accept", "tail_accept"]
    rows = []
    for i in range(len(chain)):
        row = [i, int(traces["n0"][i]), int(traces["M"][i])]
        row += [float(traces[k][i]) for k in names[2:]]
        row += [bool(chain.loc_accept[i]), float(chain.tail_accept[i])]
        rows.append(row)
    return header, rows


def write_chain_csv(path, chain: Chain, comment: str | None = None) -> None:
    header, rows = chain_rows(chain)
    write_csv(path, header, rows, comment)


def read_chain_csv(path):
    """Return ``(comments, columns)`` with each column as a float array."""
    comments, header, rows = read_csv(path)
    if "iteration" not in header or not rows:
        raise ConfigError(f"{path}: not a chain dump")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric chain entry ({exc})") from None
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged rows")
    return comments, {h: data[:, j] for j, h in enumerate(header)}
