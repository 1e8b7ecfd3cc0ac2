"""Autoregressive model of the clean signal and its prediction-error matrices.

The prediction matrix acts on the ``N`` samples of one block and has one row
per predictable sample, i.e. shape ``(N - P, N)``: row ``r`` holds
``(-a_P, ..., -a_1, 1)`` ending at column ``r + P``, so ``A @ x`` is the
innovation sequence ``x(n) - sum_i a_i x(n - i)`` for ``n = P .. N-1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DegenerateSignalError, DimensionError, PartitionError

RIDGE_CONDITION = 1e12
DEFAULT_ORDER = 40


@dataclass(frozen=True)
class ArModel:
    a: np.ndarray
    sigma_e2: float

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64).reshape(-1)
        if a.size < 1:
            raise DimensionError("AR order must be at least 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("AR coefficients must be finite")
        if not self.sigma_e2 > 0:
            raise ValueError("innovation variance must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma_e2", float(self.sigma_e2))

    @property
    def order(self) -> int:
        return self.a.size

    @property
    def error_filter(self) -> np.ndarray:
        """FIR taps ``[1, -a_1, ..., -a_P]`` of the prediction-error filter."""
        return np.concatenate(([1.0], -self.a))

    def residuals(self, x) -> np.ndarray:
        """Innovations ``e(n)`` for ``n = P .. len(x)-1``; equals ``A @ x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.size <= self.order:
            raise DimensionError("need more samples than the AR order")
        return np.convolve(x, self.error_filter, mode="valid")


def estimate_ar_covariance(samples, P: int = DEFAULT_ORDER) -> ArModel:
    """Least-squares AR fit by the covariance method (no pre-windowing).

    Minimizes the forward prediction error over ``n = P .. len-1``; the
    innovation variance is the mean squared residual over that range.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    P = int(P)
    if P < 1:
        raise DimensionError("AR order must be at least 1")
    if x.size < 2 * P + 1:
        raise DimensionError(f"covariance method needs at least {2 * P + 1} samples, got {x.size}")
    # column i holds x(n - i - 1) for n = P .. len-1
    X = np.lib.stride_tricks.sliding_window_view(x[:-1], P)[:, ::-1]
    target = x[P:]
    G = X.T @ X
    h = X.T @ target
    trace = np.trace(G)
    if not trace > 0:
        raise DegenerateSignalError("cannot fit an AR model to an all-zero signal")
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > RIDGE_CONDITION:
        warnings.warn(
            f"AR normal equations ill-conditioned (cond={cond:.3g}); adding ridge",
            RuntimeWarning,
            stacklevel=2,
        )
        G = G + 1e-9 * trace / P * np.eye(P)
    try:
        a = la.cho_solve(la.cho_factor(G), h)
    except la.LinAlgError as exc:
        raise DegenerateSignalError("singular AR normal equations") from exc
    resid = target - X @ a
    sigma_e2 = max(float(np.mean(resid**2)), np.finfo(float).tiny)
    return ArModel(a, sigma_e2)


def build_prediction_matrix(ar: ArModel, N: int) -> np.ndarray:
    """Dense ``(N - P) x N`` prediction-error matrix for a block of N samples."""
    P = ar.order
    if N <= P:
        raise DimensionError(f"block length {N} must exceed the AR order {P}")
    A = np.zeros((N - P, N))
    taps = ar.error_filter[::-1]  # (-a_P, ..., -a_1, 1)
    rows = np.arange(N - P)
    for k in range(P + 1):
        A[rows, rows + k] = taps[k]
    return A


@dataclass(frozen=True)
class SegmentPartition:
    """Index sets for the clean prefix, the discontinuity and the tail of a block.

    ``i0 = [0, n0)``, ``i1 = [n0, n0 + M)``, ``i2 = [n0 + M, N)`` (0-based).
    """

    n0: int
    M: int
    N: int

    def __post_init__(self):
        if not (0 <= self.n0 and self.M >= 0 and self.n0 + self.M <= self.N):
            raise PartitionError(f"invalid partition n0={self.n0}, M={self.M}, N={self.N}")

    @property
    def tail_start(self) -> int:
        return self.n0 + self.M

    @property
    def tail_len(self) -> int:
        return self.N - self.n0 - self.M

    @property
    def i0(self):
        return np.arange(0, self.n0)

    @property
    def i1(self):
        return np.arange(self.n0, self.tail_start)

    @property
    def i2(self):
        return np.arange(self.tail_start, self.N)

    def _selector(self, idx):
        S = np.zeros((self.N, idx.size))
        S[idx, np.arange(idx.size)] = 1.0
        return S

    @property
    def K(self):
        return self._selector(self.i0)

    @property
    def U1(self):
        return self._selector(self.i1)

    @property
    def U2(self):
        return self._selector(self.i2)

    def split(self, y):
        y = np.asarray(y, dtype=np.float64)
        return y[: self.n0], y[self.n0:self.tail_start], y[self.tail_start:]


@dataclass(frozen=True)
class PartitionedPredictor:
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    i0: np.ndarray
    i1: np.ndarray
    i2: np.ndarray

    @property
    def B(self) -> np.ndarray:
        """``[A0 A2]``, the columns acting on the observed part ``z``."""
        return np.hstack([self.A0, self.A2])

    def reassemble(self) -> np.ndarray:
        """Columns put back in their original order (A2 keeps its zeroing)."""
        n = self.A0.shape[1] + self.A1.shape[1] + self.A2.shape[1]
        A = np.zeros((self.A0.shape[0], n))
        A[:, self.i0] = self.A0
        A[:, self.i1] = self.A1
        A[:, self.i2] = self.A2
        return A


def partition_predictor(matrix, i0, i1, i2) -> PartitionedPredictor:
    """Split the prediction matrix by column and switch the tail to AR order zero.

    In the tail columns only the unit entries (column ``j``, row ``j - P``)
    survive; every coefficient entry is zeroed.
    """
    A = np.asarray(matrix, dtype=np.float64)
    rows, N = A.shape
    P = N - rows
    idx = [np.asarray(i, dtype=int).reshape(-1) for i in (i0, i1, i2)]
    allidx = np.concatenate(idx)
    if allidx.size != N or not np.array_equal(np.sort(allidx), np.arange(N)):
        raise PartitionError("index sets must be disjoint and cover every column")
    nonempty = [i for i in idx if i.size]
    for lo, hi in zip(nonempty, nonempty[1:]):
        if lo.max() >= hi.min():
            raise PartitionError("index sets must be ordered contiguous regions")
    for i in idx:
        if i.size and not np.array_equal(i, np.arange(i[0], i[0] + i.size)):
            raise PartitionError("index sets must be contiguous")
    A2 = np.zeros((rows, idx[2].size))
    for k, j in enumerate(idx[2]):
        if j - P >= 0:
            A2[j - P, k] = A[j - P, j]
    return PartitionedPredictor(
        A[:, idx[0]].copy(), A[:, idx[1]].copy(), A2, idx[0], idx[1], idx[2]
    )


def partition_for(ar: ArModel, part: SegmentPartition) -> PartitionedPredictor:
    """Dense partitioned predictor for a block; convenient for small problems."""
    A = build_prediction_matrix(ar, part.N)
    return partition_predictor(A, part.i0, part.i1, part.i2)
