"""Closed-form Gaussian computations for one processed block.

Everything here works on the dense partitioned predictor and is meant for
blocks of moderate size; :mod:`depulse.block` evaluates the same quantities
with the banded structure exploited for long blocks.

Notation: ``y = (y0, y1, y2)`` split by the partition, ``v_t`` the tail,
``z = [y0; y2 - v_t]``, ``B = [A0 A2]``, ``lam = sigma_e2 / sigma_d2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .ar import PartitionedPredictor
from .errors import DimensionError, NumericError

ALPHA_D = 1e-4
BETA_D = 1e-4
JITTER_STEPS = (1e-10, 1e-8, 1e-6)


def cholesky(A, what="matrix"):
    """Lower Cholesky factor, retrying with growing diagonal jitter.

    Jitter is relative to the mean diagonal: 1e-10, 1e-8 and 1e-6 of it.
    """
    A = np.asarray(A, dtype=np.float64)
    try:
        return la.cholesky(A, lower=True)
    except la.LinAlgError:
        pass
    n = A.shape[0]
    scale = np.trace(A) / n if n else 0.0
    if not scale > 0:
        raise NumericError(f"{what} is not positive definite")
    for eps in JITTER_STEPS:
        try:
            return la.cholesky(A + eps * scale * np.eye(n), lower=True)
        except la.LinAlgError:
            continue
    raise NumericError(f"{what} is not positive definite even with jitter")


def chol_solve(L, b):
    return la.cho_solve((L, True), b)


def chol_logdet(L) -> float:
    return 2.0 * float(np.log(np.diag(L)).sum())


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise DimensionError("mean and covariance dimensions disagree")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng, size=None):
        L = cholesky(self.covariance, "covariance")
        shape = (self.dim,) if size is None else (size, self.dim)
        xi = rng.standard_normal(shape)
        return self.mean + xi @ L.T


@dataclass(frozen=True)
class DiscontinuityParams:
    n0: int
    M: int
    sigma_d2: float

    def __post_init__(self):
        if self.M < 0 or self.n0 < 0:
            raise DimensionError("n0 and M must be non-negative")
        if not self.sigma_d2 > 0:
            raise ValueError("sigma_d2 must be positive")


@dataclass(frozen=True)
class LikelihoodWorkspace:
    z: np.ndarray
    Phi: np.ndarray
    Theta: np.ndarray
    lam: float
    E_min: float
    x1_map: np.ndarray
    R11: np.ndarray
    R12: np.ndarray
    R21: np.ndarray
    R22: np.ndarray
    S: np.ndarray


def gaussian_product_params(g1: GaussianParams, g2: GaussianParams) -> GaussianParams:
    """Mean and covariance of the (renormalized) product of two Gaussian densities."""
    if g1.dim != g2.dim:
        raise DimensionError("Gaussians must have the same dimension")
    P1 = la.inv(cholesky(g1.covariance, "first covariance"))
    P2 = la.inv(cholesky(g2.covariance, "second covariance"))
    prec1, prec2 = P1.T @ P1, P2.T @ P2
    L = cholesky(prec1 + prec2, "product precision")
    cov = chol_solve(L, np.eye(g1.dim))
    mean = chol_solve(L, prec1 @ g1.mean + prec2 @ g2.mean)
    return GaussianParams(mean, 0.5 * (cov + cov.T))


def quadratic_exp_integral(a: float, b, C) -> float:
    """``log`` of the integral of ``exp(-(a + b.z + z.C.z) / 2)`` over R^D."""
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    D = b.size
    L = cholesky(C, "quadratic form")
    return (
        0.5 * D * np.log(2 * np.pi)
        - 0.5 * chol_logdet(L)
        - 0.5 * (a - b @ chol_solve(L, b) / 4.0)
    )


def _parts(y_parts, pp: PartitionedPredictor, v_t):
    y0, y1, y2 = (np.asarray(p, dtype=np.float64).reshape(-1) for p in y_parts)
    v_t = np.asarray(v_t, dtype=np.float64).reshape(-1)
    if y0.size != pp.i0.size or y1.size != pp.i1.size or y2.size != pp.i2.size:
        raise DimensionError("y parts do not match the partition")
    if v_t.size != y2.size:
        raise DimensionError("tail length does not match y2")
    return y0, y1, y2, v_t


def likelihood_workspace(y_parts, pp: PartitionedPredictor, params: DiscontinuityParams,
                         v_t, sigma_e2: float) -> LikelihoodWorkspace:
    """All intermediate quantities of the marginal likelihood, computed densely."""
    y0, y1, y2, v_t = _parts(y_parts, pp, v_t)
    lam = sigma_e2 / params.sigma_d2
    z = np.concatenate((y0, y2 - v_t))
    B = pp.B
    A1 = pp.A1
    M = A1.shape[1]
    Bz = B @ z
    Phi = lam * np.eye(M) + A1.T @ A1
    Theta = lam * y1 - A1.T @ Bz
    if M:
        L = cholesky(Phi, "Phi")
        x1_map = chol_solve(L, Theta)
    else:
        x1_map = np.zeros(0)
    # minimum of lam|y1 - x1|^2 + |Bz + A1 x1|^2 over x1
    E_min = float(lam * np.sum((y1 - x1_map) ** 2) + np.sum((Bz + A1 @ x1_map) ** 2))
    S = simplified_projection(pp)
    R = B.T @ S @ B / sigma_e2
    n0 = y0.size
    return LikelihoodWorkspace(
        z, Phi, Theta, lam, E_min, x1_map,
        R[:n0, :n0], R[:n0, n0:], R[n0:, :n0], R[n0:, n0:], S,
    )


def marginal_loglik_full(y_parts, pp: PartitionedPredictor, params: DiscontinuityParams,
                         v_t, sigma_e2: float, exact_normalizer: bool = True) -> float:
    """Log-likelihood of the block with the discontinuity samples integrated out.

    With ``exact_normalizer`` the Gaussian integral contributes
    ``lam**(M/2) / sqrt(det Phi)``; otherwise the unrooted
    ``lam**M / det Phi`` form is used.
    """
    y0, y1, y2, v_t = _parts(y_parts, pp, v_t)
    lam = sigma_e2 / params.sigma_d2
    A1 = pp.A1
    M = A1.shape[1]
    Bz = pp.B @ np.concatenate((y0, y2 - v_t))
    n_rows = pp.A0.shape[0]
    if M:
        L = cholesky(lam * np.eye(M) + A1.T @ A1, "Phi")
        x1 = chol_solve(L, lam * y1 - A1.T @ Bz)
        logdet = chol_logdet(L)
    else:
        x1, logdet = np.zeros(0), 0.0
    E_min = lam * np.sum((y1 - x1) ** 2) + np.sum((Bz + A1 @ x1) ** 2)
    power = 0.5 if exact_normalizer else 1.0
    return float(
        power * (M * np.log(lam) - logdet)
        - 0.5 * n_rows * np.log(2 * np.pi * sigma_e2)
        - E_min / (2.0 * sigma_e2)
    )


def simplified_projection(pp: PartitionedPredictor) -> np.ndarray:
    """``S = I - A1 (A1^T A1)^{-1} A1^T``, the projector off the columns of A1."""
    A1 = pp.A1
    n = A1.shape[0]
    if A1.shape[1] == 0:
        return np.eye(n)
    Q, Rfac = la.qr(A1, mode="economic")
    if np.min(np.abs(np.diag(Rfac))) <= 1e-12 * np.max(np.abs(np.diag(Rfac))):
        raise NumericError("A1^T A1 is singular")
    return np.eye(n) - Q @ Q.T


def simplified_R(pp: PartitionedPredictor, sigma_e2: float) -> np.ndarray:
    B = pp.B
    return B.T @ simplified_projection(pp) @ B / sigma_e2


def marginal_loglik_simplified(y_parts, pp: PartitionedPredictor, sigma_e2: float, v_t) -> float:
    """``-z^T R z / 2``: the small-``lam`` likelihood, up to an additive constant."""
    y0, _, y2, v_t = _parts(y_parts, pp, v_t)
    z = np.concatenate((y0, y2 - v_t))
    Bz = pp.B @ z
    S = simplified_projection(pp)
    return float(-0.5 * Bz @ S @ Bz / sigma_e2)


def x1_posterior(y_parts, pp: PartitionedPredictor, params: DiscontinuityParams,
                 v_t, sigma_e2: float) -> GaussianParams:
    """Posterior of the signal under the discontinuity: mean ``Phi^-1 Theta``, cov ``sigma_e2 Phi^-1``."""
    y0, y1, y2, v_t = _parts(y_parts, pp, v_t)
    lam = sigma_e2 / params.sigma_d2
    A1 = pp.A1
    M = A1.shape[1]
    Bz = pp.B @ np.concatenate((y0, y2 - v_t))
    L = cholesky(lam * np.eye(M) + A1.T @ A1, "Phi")
    mean = chol_solve(L, lam * y1 - A1.T @ Bz)
    cov = sigma_e2 * chol_solve(L, np.eye(M))
    return GaussianParams(mean, 0.5 * (cov + cov.T))


def gp_tail_posterior(R_blocks, C, y0, y2) -> GaussianParams:
    """Conditional posterior of the GP tail given the simplified likelihood.

    ``R_blocks`` is ``(R11, R12, R21, R22)``; ``C`` the prior Gram matrix.
    """
    _, R12, R21, R22 = (np.atleast_2d(np.asarray(r, dtype=np.float64)) for r in R_blocks)
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    y0 = np.asarray(y0, dtype=np.float64).reshape(-1)
    y2 = np.asarray(y2, dtype=np.float64).reshape(-1)
    n = C.shape[0]
    if R22.shape != (n, n) or y2.size != n:
        raise DimensionError("tail blocks do not match the Gram matrix")
    C_inv = chol_solve(cholesky(C, "Gram matrix"), np.eye(n))
    C_inv = 0.5 * (C_inv + C_inv.T)
    precision2 = R22 + R22.T + 2.0 * C_inv  # twice the posterior precision
    L = cholesky(precision2, "tail posterior precision")
    rhs = (R12.T + R21) @ y0 + (R22.T + R22) @ y2 if y0.size else (R22.T + R22) @ y2
    mean = chol_solve(L, rhs)
    cov = 2.0 * chol_solve(L, np.eye(n))
    return GaussianParams(mean, 0.5 * (cov + cov.T))


def sigma_d2_posterior_params(v_d, alpha_d: float = ALPHA_D, beta_d: float = BETA_D):
    """Inverse-Gamma shape and scale of ``sigma_d2`` given the discontinuity noise."""
    v_d = np.asarray(v_d, dtype=np.float64).reshape(-1)
    return alpha_d + v_d.size / 2.0, beta_d + 0.5 * float(np.sum(v_d**2))
