"""Structured evaluation of the block likelihood for long excerpts.

The dense formulas in :mod:`depulse.inference` need ``(N - P) x N`` matrices,
which is half a gigabyte at ``N = 8000``. Here the same quantities are
computed from three observations:

* ``B z`` is a convolution of the prefix with the error filter plus the tail
  samples shifted by ``P`` rows (order-zero switch);
* ``A1`` is non-zero only on rows ``n0 - P .. n0 + M - 1`` and that band is
  the same Toeplitz block for every ``n0``, so it is cached per ``M``;
* the GP prior Gram matrix is Toeplitz, so the Cholesky factor of the
  longest tail also factors every shorter one (leading block).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg as la

from .ar import ArModel
from .errors import DimensionError, PartitionError
from .inference import chol_logdet, chol_solve, cholesky
from .pulses import GpHyper, se_kernel


@lru_cache(maxsize=64)
def _band(taps: tuple, M: int):
    """``A1`` restricted to its non-zero rows, its Gram matrix and an orthonormal basis."""
    c = np.asarray(taps)
    P = c.size - 1
    A1 = np.zeros((M + P, M))
    for k in range(M):
        A1[k:k + P + 1, k] = c
    Q, _ = la.qr(A1, mode="economic")
    for arr in (A1, Q):
        arr.setflags(write=False)
    gram = A1.T @ A1
    gram.setflags(write=False)
    return A1, gram, Q


class BlockModel:
    """Likelihood machinery for one excerpt ``y`` under a fixed AR model."""

    def __init__(self, y, ar: ArModel, exact_normalizer: bool = True):
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        self.ar = ar
        self.P = ar.order
        self.N = self.y.size
        self.exact_normalizer = exact_normalizer
        self._taps = tuple(ar.error_filter.tolist())
        if self.N <= 2 * self.P + 1:
            raise DimensionError("excerpt too short for the AR order")

    @property
    def sigma_e2(self) -> float:
        return self.ar.sigma_e2

    def check(self, n0: int, M: int) -> None:
        if n0 < self.P or M < 1 or self.N - n0 - M < self.P + 1:
            raise PartitionError(
                f"(n0={n0}, M={M}) needs n0 >= {self.P} and a tail longer than {self.P}"
            )

    def band(self, M: int):
        return _band(self._taps, int(M))

    def residual(self, n0: int, M: int, w) -> np.ndarray:
        """``B z`` with ``z = [y0; w]``: prediction errors with the discontinuity zeroed."""
        P = self.P
        c = np.asarray(self._taps)
        e = np.zeros(self.N - P)
        head = np.convolve(self.y[:n0], c)
        e[:n0] = head[P:n0 + P]
        e[n0 + M - P:] += w
        return e

    def _solve_phi(self, n0, M, sigma_d2, e):
        lam = self.sigma_e2 / sigma_d2
        A1, gram, _ = self.band(M)
        y1 = self.y[n0:n0 + M]
        blk = slice(n0 - self.P, n0 + M)
        L = cholesky(lam * np.eye(M) + gram, "Phi")
        x1 = chol_solve(L, lam * y1 - A1.T @ e[blk])
        return lam, L, x1, blk

    def loglik(self, n0: int, M: int, sigma_d2: float, v_t) -> float:
        """Marginal log-likelihood with ``x1`` integrated out."""
        y2 = self.y[n0 + M:]
        e = self.residual(n0, M, y2 - v_t)
        lam, L, x1, blk = self._solve_phi(n0, M, sigma_d2, e)
        A1 = self.band(M)[0]
        fitted = e.copy()
        fitted[blk] += A1 @ x1
        E_min = lam * np.sum((self.y[n0:n0 + M] - x1) ** 2) + fitted @ fitted
        power = 0.5 if self.exact_normalizer else 1.0
        return float(
            power * (M * np.log(lam) - chol_logdet(L))
            - 0.5 * (self.N - self.P) * np.log(2 * np.pi * self.sigma_e2)
            - E_min / (2.0 * self.sigma_e2)
        )

    def sample_x1(self, n0, M, sigma_d2, v_t, rng) -> np.ndarray:
        """Draw from the Gaussian posterior of the samples under the discontinuity."""
        e = self.residual(n0, M, self.y[n0 + M:] - v_t)
        _, L, mean, _ = self._solve_phi(n0, M, sigma_d2, e)
        xi = rng.standard_normal(M)
        return mean + np.sqrt(self.sigma_e2) * la.solve_triangular(L.T, xi, lower=False)

    def x1_mean(self, n0, M, sigma_d2, v_t) -> np.ndarray:
        e = self.residual(n0, M, self.y[n0 + M:] - v_t)
        return self._solve_phi(n0, M, sigma_d2, e)[2]

    def amplitude_conditional(self, n0, M, sigma_d2, g) -> tuple[float, float]:
        """Mean and variance of ``V`` when the tail is ``V * g`` under a flat prior.

        The likelihood is Gaussian in ``V``; completing the square in the
        minimized energy gives precision ``(|h|^2 - t' Phi^-1 t) / sigma_e2``
        with ``h`` the tail embedded in the residual rows and ``t = A1' h``.
        """
        P = self.P
        g = np.asarray(g, dtype=np.float64)
        e_y = self.residual(n0, M, self.y[n0 + M:])
        lam, L, _, blk = self._solve_phi(n0, M, sigma_d2, e_y)
        A1 = self.band(M)[0]
        theta0 = lam * self.y[n0:n0 + M] - A1.T @ e_y[blk]
        t = A1[M:].T @ g[:P]
        Phi_t = chol_solve(L, t)
        curv = float(g @ g - t @ Phi_t)
        if not curv > 0:
            raise np.linalg.LinAlgError("tail shape is not identifiable in this partition")
        num = float(e_y[n0 + M - P:] @ g + Phi_t @ theta0)
        return num / curv, self.sigma_e2 / curv

    def simplified_energy(self, n0, M, v_t) -> float:
        """``z' R z`` of the small-``lam`` likelihood."""
        e = self.residual(n0, M, self.y[n0 + M:] - v_t)
        Q = self.band(M)[2]
        blk = e[n0 - self.P:n0 + M]
        return float((e @ e - np.sum((Q.T @ blk) ** 2)) / self.sigma_e2)

    def gp_mean(self, n0, M, prior: "GpTailPrior") -> np.ndarray:
        """Posterior mean of the GP tail under the small-``lam`` likelihood.

        Solves ``(R22 + C^-1) m = R21 y0 + R22 y2`` with
        ``R22 = (I - U U') / sigma_e2`` where ``U`` holds the last ``P`` rows
        of the orthonormal basis of ``A1``, via Woodbury around
        ``K = (I / sigma_e2 + C^-1)^-1 = sigma_e2 I - sigma_e2^2 G^-1``,
        ``G = C + sigma_e2 I``.
        """
        P, s2 = self.P, self.sigma_e2
        n = self.N - n0 - M
        Q = self.band(M)[2]
        e = self.residual(n0, M, self.y[n0 + M:])
        blk = slice(n0 - P, n0 + M)
        e[blk] -= Q @ (Q.T @ e[blk])
        b = e[n0 + M - P:] / s2
        U = np.zeros((n, M))
        U[:P] = Q[M:]
        Ginv = prior.solver(n, s2)
        Kb = s2 * b - s2 * s2 * Ginv(b)
        KU = s2 * U - s2 * s2 * Ginv(U)
        inner = s2 * np.eye(M) - U.T @ KU
        return Kb + KU @ la.solve(inner, U.T @ Kb, assume_a="pos")


class GpTailPrior:
    """SE-kernel prior over tails of any length up to ``n_max``, sharing one factorization."""

    def __init__(self, hyper: GpHyper, n_max: int, jitter: float | None = None):
        self.hyper = hyper
        self.n_max = int(n_max)
        self.jitter = 1e-8 * hyper.sigma_f2 if jitter is None else jitter
        self._L = None
        self._noise = None
        self._block = (None, None)

    def _factor(self, noise: float):
        if self._L is None or self._noise != noise:
            col = se_kernel(np.arange(self.n_max), self.hyper)
            col[0] += self.jitter + noise
            self._L = cholesky(la.toeplitz(col), "GP prior plus noise")
            self._noise = noise
            self._block = (None, None)
        return self._L

    def solver(self, n: int, noise: float):
        """Return ``x -> (C + noise I)^-1 x`` for tails of length ``n``."""
        if n > self.n_max:
            raise DimensionError(f"tail length {n} exceeds the prior size {self.n_max}")
        L = self._factor(noise)
        if self._block[0] != n:
            self._block = (n, np.array(L[:n, :n], order="F"))
        Ln = self._block[1]
        return lambda x: la.cho_solve((Ln, True), x, check_finite=False)
