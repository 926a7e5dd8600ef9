"""Classical reconstruction baselines: least squares and total variation.

The least-squares baseline runs conjugate gradients on the normal
equations from a zero start with a fixed iteration budget; the budget is
the only regularization. The TV baseline minimizes

    1/2 ||A f - y||^2 + lam * TV(f)

with accelerated proximal-gradient iterations made monotone by a fallback
step, using a dual (Chambolle-type) inner loop for the isotropic TV
proximal operator with reflexive boundaries. Everything here is
deterministic: the single power iteration for the step size starts from a
fixed vector and no randomness is used anywhere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .metrics import e_norm

DEFAULT_L2_ITERATIONS = 200
DEFAULT_LAMBDA_GRID = np.logspace(-8.0, -2.0, 13)


def reconstruct_l2(A: sp.spmatrix, y: np.ndarray, iterations: int = DEFAULT_L2_ITERATIONS,
                   rtol: float = 1e-14, return_history: bool = False):
    """CG on the normal equations A^T A f = A^T y, started from f = 0.

    Stops at the iteration budget, or earlier if the normal-equation
    residual drops below ``rtol`` relative to its starting value. Returns
    the flat image, or ``(image, history)`` with the data-space residual
    norm ||A f - y|| per accepted iterate when ``return_history`` is set.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (A.shape[0],):
        raise ValueError(f"expected {A.shape[0]} measurements, got shape {y.shape}")
    if iterations < 0:
        raise ValueError("iteration budget must be nonnegative")
    x = np.zeros(A.shape[1])
    history = [float(np.linalg.norm(y))]
    r = A.T @ y
    d = r.copy()
    rs = float(r @ r)
    rs0 = rs
    if rs0 > 0.0:
        for _ in range(iterations):
            q = A.T @ (A @ d)
            dq = float(d @ q)
            if dq <= 0.0:
                break
            step = rs / dq
            x += step * d
            r -= step * q
            if return_history:
                history.append(float(np.linalg.norm(A @ x - y)))
            rs_new = float(r @ r)
            if rs_new <= rtol * rtol * rs0:
                break
            d = r + (rs_new / rs) * d
            rs = rs_new
    if return_history:
        return x, np.asarray(history)
    return x


def _gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with a reflexive (zero-difference) far edge."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`_gradient`."""
    div = np.zeros_like(px)
    div[:, 0] += px[:, 0]
    div[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
    div[:, -1] -= px[:, -2]
    div[0, :] += py[0, :]
    div[1:-1, :] += py[1:-1, :] - py[:-2, :]
    div[-1, :] -= py[-2, :]
    return div


def total_variation(f: np.ndarray) -> float:
    """Isotropic total variation of a 2-d image."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise ValueError("total_variation expects a 2-d image")
    gx, gy = _gradient(f)
    return float(np.sum(np.sqrt(gx * gx + gy * gy)))


def tv_prox(v: np.ndarray, weight: float, iterations: int = 30,
            tau: float = 0.249) -> np.ndarray:
    """Proximal operator of ``weight * TV`` at v, by dual projection.

    Runs a fixed number of Chambolle dual iterations; tau below 1/4
    guarantees convergence of the dual fixed point.
    """
    if weight <= 0.0:
        return v.copy()
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    for _ in range(iterations):
        resid = _divergence(px, py) - v / weight
        gx, gy = _gradient(resid)
        norm = 1.0 + tau * np.sqrt(gx * gx + gy * gy)
        px = (px + tau * gx) / norm
        py = (py + tau * gy) / norm
    return v - weight * _divergence(px, py)


@dataclass(frozen=True)
class TvConfig:
    """Iteration budgets and step-size control for :func:`reconstruct_tv`."""

    outer_iterations: int = 400
    prox_iterations: int = 30
    tau: float = 0.249
    power_iterations: int = 50
    lipschitz: float | None = None
    lipschitz_margin: float = 1.05


def _lipschitz(A: sp.spmatrix, config: TvConfig) -> float:
    """Upper bound on ||A||^2 via power iteration from a fixed start."""
    if config.lipschitz is not None:
        return float(config.lipschitz)
    n2 = A.shape[1]
    v = np.ones(n2) / np.sqrt(n2)
    lam = 1.0
    for _ in range(config.power_iterations):
        w = A.T @ (A @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 1.0
        lam = norm
        v = w / norm
    return config.lipschitz_margin * lam


def reconstruct_tv(A: sp.spmatrix, y: np.ndarray, lam: float,
                   config: TvConfig | None = None,
                   return_objectives: bool = False):
    """TV-regularized reconstruction, returned as a flat image.

    Accelerated proximal-gradient with a monotone safeguard: whenever the
    accelerated step would raise the objective, a plain proximal step from
    the current iterate is taken instead and the momentum restarts. The
    monitored objective is therefore nonincreasing. If even the fallback
    cannot decrease it (the inner prox is solved to finite accuracy) the
    iteration stops.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (A.shape[0],):
        raise ValueError(f"expected {A.shape[0]} measurements, got shape {y.shape}")
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"lam must be nonnegative and finite, got {lam!r}")
    cfg = config or TvConfig()
    n2 = A.shape[1]
    side = int(round(np.sqrt(n2)))
    if side * side != n2:
        raise ValueError(f"system matrix implies a non-square image ({n2} pixels)")
    shape = (side, side)
    step = 1.0 / _lipschitz(A, cfg)

    def objective(x_flat: np.ndarray) -> float:
        resid = A @ x_flat - y
        return 0.5 * float(resid @ resid) + lam * total_variation(x_flat.reshape(shape))

    def prox_step(base_flat: np.ndarray) -> np.ndarray:
        g = A.T @ (A @ base_flat - y)
        v = (base_flat - step * g).reshape(shape)
        return tv_prox(v, lam * step, cfg.prox_iterations, cfg.tau).ravel()

    x = np.zeros(n2)
    z = x.copy()
    t = 1.0
    obj = objective(x)
    objectives = [obj]
    for _ in range(cfg.outer_iterations):
        x_new = prox_step(z)
        obj_new = objective(x_new)
        if obj_new > obj:
            x_new = prox_step(x)
            obj_new = objective(x_new)
            t = 1.0
            if obj_new > obj:
                break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t, obj = x_new, t_new, obj_new
        objectives.append(obj)
    if return_objectives:
        return x, np.asarray(objectives)
    return x


@dataclass
class TvSearchResult:
    """Outcome of a regularization-weight grid search."""

    lambdas: np.ndarray
    e_norms: np.ndarray
    best_index: int
    reconstruction: np.ndarray = field(repr=False)

    @property
    def lambda_star(self) -> float:
        return float(self.lambdas[self.best_index])

    @property
    def best_e_norm(self) -> float:
        return float(self.e_norms[self.best_index])

    def curve_rows(self) -> list[tuple[float, float]]:
        return [(float(l), float(e)) for l, e in zip(self.lambdas, self.e_norms)]


def tv_grid_search(A: sp.spmatrix, y: np.ndarray, f_true: np.ndarray,
                   lambdas: np.ndarray | None = None,
                   config: TvConfig | None = None,
                   workers: int = 1) -> TvSearchResult:
    """Oracle selection of the TV weight against a known ground truth.

    Evaluates the reconstruction error on a grid of weights (13 points,
    logarithmically spaced over [1e-8, 1e-2] by default) and keeps the
    lowest; ties pick the smaller weight. Grid points are independent, so
    they may be evaluated by a small thread pool without affecting the
    result.
    """
    lambdas = DEFAULT_LAMBDA_GRID if lambdas is None else np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambdas must be a non-empty 1-d array")
    truth = np.asarray(getattr(f_true, "values", f_true), dtype=float).ravel()

    def solve(lam: float) -> tuple[np.ndarray, float]:
        f = reconstruct_tv(A, y, lam, config)
        return f, e_norm(f, truth)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, lambdas))
    else:
        results = [solve(lam) for lam in lambdas]

    errors = np.asarray([e for _, e in results])
    best = int(np.argmin(errors))
    return TvSearchResult(lambdas=lambdas.copy(), e_norms=errors, best_index=best,
                          reconstruction=results[best][0])
