"""Gaussian-process posterior for tomographic data.

The model is ``y = A f + eps`` with a GP prior ``f ~ N(c 1, K)`` and
independent Gaussian noise ``eps ~ N(0, Sigma)``. All solves go through a
single Cholesky factorization of the data-space covariance

    K_y = A K A^T + Sigma   (m x m dense),

which is the one dominant dense object. The pixel-space prior K is only
ever touched in column blocks, so grids up to n = 100 stay within a
bounded memory footprint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg.lapack import dpotrf, dpotri

from .kernels import KernelSpec, PriorCovariance

# Column-block width used when streaming the prior covariance; sized so one
# block of a 10^4-pixel grid stays around 250 MB.
DEFAULT_BLOCK_COLS = 3072


class IllConditionedError(np.linalg.LinAlgError):
    """Cholesky factorization of the data covariance failed."""


@dataclass(frozen=True)
class NoiseCovariance:
    """Diagonal Gaussian noise, stored as per-measurement standard deviations.

    ``sigma`` is a positive scalar for homoskedastic noise or a vector of
    per-measurement values for heteroskedastic noise.
    """

    kind: str
    sigma: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("homoskedastic", "heteroskedastic"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if self.kind == "homoskedastic" and sigma.size != 1:
            raise ValueError("homoskedastic noise takes a single sigma")
        if not (np.all(np.isfinite(sigma)) and np.all(sigma > 0)):
            raise ValueError("noise standard deviations must be positive and finite")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def homoskedastic(cls, sigma: float) -> "NoiseCovariance":
        return cls("homoskedastic", np.asarray([sigma], dtype=float))

    @classmethod
    def heteroskedastic(cls, sigmas: np.ndarray) -> "NoiseCovariance":
        return cls("heteroskedastic", np.asarray(sigmas, dtype=float))

    def variances(self, m: int) -> np.ndarray:
        """Diagonal of Sigma for m measurements."""
        if self.kind == "homoskedastic":
            return np.full(m, float(self.sigma[0]) ** 2)
        if self.sigma.size != m:
            raise ValueError(
                f"heteroskedastic noise has {self.sigma.size} entries for {m} measurements"
            )
        return self.sigma**2


class KyFactor:
    """Cholesky factorization of K_y, reused for solves and the log-determinant."""

    def __init__(self, lower: np.ndarray):
        self.L = lower
        self.m = lower.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """K_y^{-1} b."""
        return sla.cho_solve((self.L, True), b, check_finite=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """L^{-1} b, the whitening half of the solve."""
        return sla.solve_triangular(self.L, b, lower=True, check_finite=False)

    def inverse(self) -> np.ndarray:
        """Dense K_y^{-1}, symmetrized; costs one extra m^3/3 pass."""
        w, info = dpotri(self.L, lower=1)
        if info != 0:
            raise IllConditionedError(f"inversion from Cholesky factor failed (info={info})")
        w = np.tril(w)
        return w + np.tril(w, -1).T


def _as_prior(K, coords_px: np.ndarray | None = None) -> PriorCovariance | np.ndarray:
    if isinstance(K, PriorCovariance) or isinstance(K, np.ndarray):
        return K
    if isinstance(K, KernelSpec):
        if coords_px is None:
            raise ValueError("pixel coordinates are required with a KernelSpec prior")
        return PriorCovariance(coords_px, K)
    raise TypeError(f"unsupported prior covariance type {type(K).__name__}")


def _iter_col_blocks(n_cols: int, block_cols: int):
    for lo in range(0, n_cols, block_cols):
        yield slice(lo, min(lo + block_cols, n_cols))


def sandwich(A: sp.spmatrix, prior, block_cols: int = DEFAULT_BLOCK_COLS) -> np.ndarray:
    """Dense A K A^T accumulated over column blocks of K.

    ``prior`` is a dense matrix or a :class:`PriorCovariance`. Symmetry of K
    lets each block contribute ``A[:, J] (A K[:, J])^T`` without ever holding
    the full m-by-n^2 product.
    """
    m, n2 = A.shape
    out = np.zeros((m, m))
    dense = isinstance(prior, np.ndarray)
    A_csc = A.tocsc()
    for cols in _iter_col_blocks(n2, block_cols):
        kb = prior[:, cols] if dense else prior.block(cols)
        gb = A @ kb
        out += A_csc[:, cols] @ gb.T
    return 0.5 * (out + out.T)


def assemble_Ky(A: sp.spmatrix, K, noise: NoiseCovariance,
                block_cols: int = DEFAULT_BLOCK_COLS) -> tuple[np.ndarray, KyFactor]:
    """Data covariance K_y = A K A^T + Sigma and its Cholesky factor.

    Returns ``(Ky, factor)``; Ky is returned before in-place factorization
    clobbers it, so a copy is taken only for the factor.
    """
    ky = sandwich(A, K, block_cols)
    ky[np.diag_indices_from(ky)] += noise.variances(A.shape[0])
    return ky, cholesky_factor(ky.copy())


def cholesky_factor(ky: np.ndarray) -> KyFactor:
    """Factor a symmetric positive-definite matrix, in place.

    Raises :class:`IllConditionedError` naming the failing pivot; a larger
    noise nugget usually fixes it.
    """
    if ky.shape[0] == 0:
        return KyFactor(np.zeros((0, 0)))
    c, info = dpotrf(ky, lower=1, clean=1, overwrite_a=1)
    if info > 0:
        pivot = info - 1
        raise IllConditionedError(
            f"data covariance is not positive definite at pivot {pivot} "
            f"(diagonal there {ky[pivot, pivot]:.3e}); increase the noise nugget"
        )
    if info < 0:
        raise IllConditionedError(f"invalid input to Cholesky (argument {-info})")
    return KyFactor(c)


@dataclass
class PosteriorResult:
    """Posterior summary in flat pixel order.

    ``rsd`` is the relative standard deviation at the default epsilon of
    1.0; recompute with :func:`rsd_map` for other offsets. ``nll_at_fit``
    and ``kernel`` are filled in by the fitting pipeline when the posterior
    comes from optimized hyperparameters.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray | None = None
    rsd: np.ndarray | None = None
    nll_at_fit: float | None = None
    kernel: KernelSpec | None = None

    def __post_init__(self) -> None:
        if self.rsd is None:
            self.rsd = rsd_map(self.mean, self.variance)


def posterior(A: sp.spmatrix, K, noise: NoiseCovariance, y: np.ndarray, c: float,
              want_full_cov: bool = False, coords_px: np.ndarray | None = None,
              block_cols: int = DEFAULT_BLOCK_COLS,
              full_cov_max_pixels: int = 48 * 48) -> PosteriorResult:
    """GP posterior of the image given sinogram data.

    Mean and variance follow the standard conditioning identities

        m* = c 1 + K A^T K_y^{-1} (y - c A 1)
        K* = K - K A^T K_y^{-1} A K

    with only ``diag(K*)`` computed unless ``want_full_cov`` is set. The
    full covariance is capped at ``full_cov_max_pixels`` pixels because it
    is dense in n^2. Tiny negative variances from roundoff are clamped to
    zero. With zero measurements the prior is returned unchanged.
    """
    prior = _as_prior(K, coords_px)
    n2 = prior.shape[0]
    if A.shape[1] != n2:
        raise ValueError(f"system matrix has {A.shape[1]} columns, prior has {n2} points")
    y = np.asarray(y, dtype=float)
    m = A.shape[0]
    if y.shape != (m,):
        raise ValueError(f"expected {m} measurements, got shape {y.shape}")

    dense = isinstance(prior, np.ndarray)
    k_diag = np.diag(prior).copy() if dense else prior.diagonal()

    if m == 0:
        cov = (prior.copy() if dense else prior.full()) if want_full_cov else None
        return PosteriorResult(np.full(n2, float(c)), k_diag, cov)

    _, factor = assemble_Ky(A, prior, noise, block_cols)
    ones = np.ones(n2)
    r = y - c * (A @ ones)
    u = A.T @ factor.solve(r)

    if want_full_cov:
        if n2 > full_cov_max_pixels:
            raise MemoryError(
                f"full posterior covariance requested for {n2} pixels "
                f"(cap {full_cov_max_pixels}); use the diagonal instead"
            )
        kfull = prior if dense else prior.full()
        g = A @ kfull
        x = factor.half_solve(g)
        cov = kfull - x.T @ x
        cov = 0.5 * (cov + cov.T)
        mean = float(c) + kfull @ u
        variance = np.maximum(np.diag(cov).copy(), 0.0)
        return PosteriorResult(mean, variance, cov)

    mean = np.full(n2, float(c))
    variance = np.empty(n2)
    for cols in _iter_col_blocks(n2, block_cols):
        kb = prior[:, cols] if dense else prior.block(cols)
        mean[cols] += kb.T @ u
        s = factor.half_solve(A @ kb)
        variance[cols] = k_diag[cols] - np.einsum("ij,ij->j", s, s)
    return PosteriorResult(mean, np.maximum(variance, 0.0), None)


def rsd_map(mean, variance: np.ndarray | None = None, epsilon: float = 1.0) -> np.ndarray:
    """Relative standard deviation sqrt(var) / (|mean| + epsilon).

    Accepts either a :class:`PosteriorResult` or explicit mean/variance
    arrays. The offset epsilon keeps the ratio finite where the mean
    crosses zero; it must be positive.
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if variance is None:
        mean, variance = mean.mean, mean.variance
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if mean.shape != variance.shape:
        raise ValueError("mean and variance shapes differ")
    return np.sqrt(np.maximum(variance, 0.0)) / (np.abs(mean) + epsilon)
