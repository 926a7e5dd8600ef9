"""Negative log marginal likelihood of sinogram data and its gradient.

For the model ``y = A f + eps`` with prior mean ``c 1`` and composite-kernel
covariance K, the objective as a function of the hypervector beta is

    J = 1/2 r^T K_y^{-1} r + 1/2 log|K_y| + m/2 log(2 pi),
    r = y - c A 1,   K_y = A K A^T + Sigma.

The gradient is analytic. With ``alpha = K_y^{-1} r`` and ``W = K_y^{-1}``:

    dJ/dc      = -(A 1)^T alpha
    dJ/dtheta  = 1/2 [ tr(W B) - alpha^T B alpha ],   B = A (dK/dtheta) A^T

for theta any of log sigma_f,i or log l_i. Both trace terms reduce to inner
products against M = A^T W A in pixel space, so each kernel-derivative
matrix is touched once, in blocks, and never all at the same time.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import Grid
from .gp import DEFAULT_BLOCK_COLS, KyFactor, NoiseCovariance, cholesky_factor
from .kernels import KernelSpec, distance_block, unit_kernel, unit_kernel_pair

# A dense n^2-by-n^2 scratch matrix is allowed up to this size; beyond it the
# evaluation streams column blocks and recomputes kernel entries per pass.
DENSE_SCRATCH_BYTES = 700_000_000


@dataclass
class NllEvaluation:
    """Objective value with optional gradient and reusable intermediates."""

    value: float
    grad: np.ndarray | None
    residual: np.ndarray
    alpha: np.ndarray


class _Workspace:
    __slots__ = ("spec", "factor", "residual", "alpha", "value", "ku_cache")

    def __init__(self, spec, factor, residual, alpha, value, ku_cache):
        self.spec = spec
        self.factor = factor
        self.residual = residual
        self.alpha = alpha
        self.value = value
        self.ku_cache = ku_cache


class MarginalLikelihood:
    """Evaluator bound to one data set; caches factorizations across calls.

    The cache is keyed by the exact beta bytes, so a line-search value
    evaluation and the gradient evaluation at the accepted point share one
    assembly and factorization.
    """

    def __init__(self, A: sp.spmatrix, grid: Grid, noise: NoiseCovariance,
                 y: np.ndarray, family: str,
                 block_cols: int = DEFAULT_BLOCK_COLS,
                 dense_budget: int = DENSE_SCRATCH_BYTES,
                 cache_size: int = 2):
        self.A = A.tocsr()
        self.A_csc = A.tocsc()
        self.coords = grid.pixel_coords_px()
        self.family = family
        self.noise = noise
        self.y = np.asarray(y, dtype=float)
        m, n2 = A.shape
        if self.y.shape != (m,):
            raise ValueError(f"expected {m} measurements, got shape {self.y.shape}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("sinogram contains non-finite values")
        if n2 != self.coords.shape[0]:
            raise ValueError(f"system matrix has {n2} columns, grid has {self.coords.shape[0]} pixels")
        self.m, self.n2 = m, n2
        self.A1 = A @ np.ones(n2)
        self.sigma2 = noise.variances(m)
        self._dense = 8 * n2 * n2 <= dense_budget
        self._block_cols = n2 if self._dense else block_cols
        self._dist = None
        self._cache: OrderedDict[bytes, _Workspace] = OrderedDict()
        self._cache_size = cache_size

    # -- kernel plumbing -------------------------------------------------

    def _distances(self, cols: slice) -> np.ndarray:
        if self._dense:
            if self._dist is None:
                self._dist = distance_block(self.coords, slice(None))
            return self._dist[:, cols]
        return distance_block(self.coords, cols)

    def _blocks(self):
        for lo in range(0, self.n2, self._block_cols):
            yield slice(lo, min(lo + self._block_cols, self.n2))

    # -- evaluation ------------------------------------------------------

    def workspace(self, spec: KernelSpec) -> _Workspace:
        key = spec.to_beta().tobytes()
        ws = self._cache.get(key)
        if ws is not None:
            self._cache.move_to_end(key)
            return ws

        ky = np.zeros((self.m, self.m))
        ku_cache = [] if self._dense else None
        for cols in self._blocks():
            d = self._distances(cols)
            for i in range(spec.n_k):
                ku = unit_kernel(self.family, d / spec.ell[i])
                if ku_cache is not None:
                    ku_cache.append(ku)
                gb = self.A @ ku
                ky += spec.sigma_f[i] ** 2 * (self.A_csc[:, cols] @ gb.T)
        ky = 0.5 * (ky + ky.T)
        ky[np.diag_indices_from(ky)] += self.sigma2

        factor = cholesky_factor(ky)
        residual = self.y - spec.c * self.A1
        alpha = factor.solve(residual)
        value = (0.5 * float(residual @ alpha) + 0.5 * factor.logdet
                 + 0.5 * self.m * math.log(2.0 * math.pi))
        ws = _Workspace(spec, factor, residual, alpha, value, ku_cache)
        self._cache[key] = ws
        while len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return ws

    def value(self, spec: KernelSpec) -> float:
        return self.workspace(spec).value

    def optimal_c(self, spec: KernelSpec) -> float:
        """Prior mean zeroing dJ/dc at the given amplitudes and length scales."""
        ws = self.workspace(KernelSpec(spec.family, spec.sigma_f, spec.ell, c=0.0))
        z = ws.factor.solve(self.A1)
        denom = float(self.A1 @ z)
        if abs(denom) < 1e-300:
            warnings.warn(
                "degenerate scan: (A1)^T Ky^{-1} A1 is numerically zero; using c = 0"
            )
            return 0.0
        return float(z @ self.y) / denom

    def value_and_grad(self, spec: KernelSpec) -> NllEvaluation:
        ws = self.workspace(spec)
        factor, alpha = ws.factor, ws.alpha
        n_k = spec.n_k
        grad = np.empty(2 * n_k + 1)
        grad[0] = -float(self.A1 @ alpha)

        w = factor.inverse()
        z = self.A_csc.T @ w  # (n2, m); A^T W with W symmetric
        v = self.A_csc.T @ alpha

        s_tr = np.zeros(2 * n_k)  # tr(W B) per hyperparameter
        s_qf = np.zeros(2 * n_k)  # alpha^T B alpha per hyperparameter
        for bi, cols in enumerate(self._blocks()):
            mblk = z @ self.A_csc[:, cols]  # (A^T W A)[:, cols]
            vcols = v[cols]
            d = None
            for i in range(n_k):
                if ws.ku_cache is not None:
                    ku = ws.ku_cache[bi * n_k + i]
                    hu = _dlog_ell_from_value(self.family, ku,
                                              self._distances(cols) / spec.ell[i])
                else:
                    if d is None:
                        d = self._distances(cols)
                    ku, hu = unit_kernel_pair(self.family, d / spec.ell[i])
                sig2 = spec.sigma_f[i] ** 2
                kv = ku @ vcols
                hv = hu @ vcols
                s_tr[i] += 2.0 * sig2 * np.vdot(mblk, ku)
                s_qf[i] += 2.0 * sig2 * float(v @ kv)
                s_tr[n_k + i] += sig2 * np.vdot(mblk, hu)
                s_qf[n_k + i] += sig2 * float(v @ hv)
        grad[1:] = 0.5 * (s_tr - s_qf)
        return NllEvaluation(ws.value, grad, ws.residual, alpha)


def _dlog_ell_from_value(family: str, ku: np.ndarray, r: np.ndarray) -> np.ndarray:
    """d(unit kernel)/d(log l) recovered from the kernel value, no new exp."""
    if family == "se":
        return r * r * ku
    if family == "mk32":
        t = math.sqrt(3.0) * r
        return ku * (t * t) / (1.0 + t)
    t = math.sqrt(5.0) * r
    return ku * (t * t / 3.0) * (1.0 + t) / (1.0 + t + t * t / 3.0)


def nll(spec: KernelSpec, A: sp.spmatrix, grid: Grid, noise: NoiseCovariance,
        y: np.ndarray) -> float:
    """Negative log marginal likelihood at one hyperparameter setting."""
    if A.shape[0] == 0:
        return 0.0
    return MarginalLikelihood(A, grid, noise, y, spec.family).value(spec)


def nll_grad(spec: KernelSpec, A: sp.spmatrix, grid: Grid, noise: NoiseCovariance,
             y: np.ndarray) -> NllEvaluation:
    """Objective value and analytic gradient with respect to beta."""
    if A.shape[0] == 0:
        return NllEvaluation(0.0, np.zeros(2 * spec.n_k + 1), np.zeros(0), np.zeros(0))
    return MarginalLikelihood(A, grid, noise, y, spec.family).value_and_grad(spec)


def make_objective(A: sp.spmatrix, grid: Grid, noise: NoiseCovariance, y: np.ndarray,
                   family: str, **engine_kwargs):
    """Callable beta -> (J, grad) over a persistent evaluator.

    Returns ``(fun, engine)``; the engine's workspace cache makes repeated
    evaluations at nearby iterates cheap, which the optimizer relies on.
    """
    engine = MarginalLikelihood(A, grid, noise, y, family, **engine_kwargs)

    def fun(beta: np.ndarray, need_grad: bool = True):
        spec = KernelSpec.from_beta(family, beta)
        if need_grad:
            ev = engine.value_and_grad(spec)
            return ev.value, ev.grad
        return engine.value(spec), None

    return fun, engine


def solve_initial_c(spec: KernelSpec, A: sp.spmatrix, grid: Grid,
                    noise: NoiseCovariance, y: np.ndarray) -> float:
    """Prior mean that zeroes dJ/dc at the given amplitudes and length scales.

    Solves ``(A1)^T K_y^{-1} y = c (A1)^T K_y^{-1} A1`` using one
    factorization. A vanishing denominator (all beams missing the grid)
    returns 0 with a warning.
    """
    return MarginalLikelihood(A, grid, noise, y, spec.family).optimal_c(spec)
