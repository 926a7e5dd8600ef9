"""Truncated-Newton minimization and sequential composite-kernel fitting.

The minimizer is Newton-CG: each outer iteration solves the Newton system
``H p = -g`` approximately with conjugate gradients, where Hessian-vector
products come from central finite differences of the analytic gradient
(two gradient calls per product, no second derivatives). The CG loop is
truncated by an adaptive forcing tolerance and an iteration cap; negative
curvature or a non-descent direction falls back to steepest descent. Steps
are accepted by Armijo backtracking; trial points where the objective
fails (an ill-conditioned covariance, say) or returns a non-finite value
count as +inf and are backtracked past rather than raised. The whole
procedure is deterministic: no randomness enters anywhere.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import Grid
from .gp import NoiseCovariance
from .kernels import KernelSpec
from .likelihood import MarginalLikelihood

# Evaluation failures that mean "this point is infeasible", not "stop".
_EVAL_ERRORS = (np.linalg.LinAlgError, FloatingPointError, OverflowError)


@dataclass(frozen=True)
class OptimizerConfig:
    """Tuning knobs for :func:`minimize`.

    The gradient tolerance is relative to the infinity norm of the initial
    gradient; ``gtol_abs`` adds an absolute floor. ``cg_max`` defaults to
    the problem dimension (CG terminates exactly there for a quadratic).
    ``deterministic`` documents that the algorithm draws no random numbers;
    it has no runtime effect.
    """

    max_iter: int = 200
    gtol_rel: float = 1e-6
    gtol_abs: float = 0.0
    cg_max: int | None = None
    armijo_c1: float = 1e-4
    max_backtracks: int = 40
    hv_step: float = 1e-5
    deterministic: bool = True


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    grad_inf: float
    iterations: int
    n_value_evals: int
    n_grad_evals: int
    status: str
    message: str


class _CountingObjective:
    def __init__(self, fun):
        self._fun = fun
        self.n_value = 0
        self.n_grad = 0

    def __call__(self, x: np.ndarray, need_grad: bool):
        value, grad = self._fun(x, need_grad)
        self.n_value += 1
        if need_grad:
            self.n_grad += 1
        return value, grad


def minimize(fun, x0: np.ndarray, config: OptimizerConfig | None = None,
             callback=None) -> MinimizeResult:
    """Minimize ``fun(x, need_grad) -> (value, grad or None)`` from x0.

    ``callback(iteration, x, value, grad_inf)`` runs once per accepted
    outer iteration. Iteration stops at the gradient tolerance, the
    iteration cap, or a failed line search (whichever happens first).
    """
    cfg = config or OptimizerConfig()
    f = _CountingObjective(fun)
    x = np.asarray(x0, dtype=float).copy()
    dim = x.size
    cg_cap = cfg.cg_max if cfg.cg_max is not None else dim

    value, grad = f(x, True)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise ValueError("objective or gradient is not finite at the starting point")
    g_inf = float(np.max(np.abs(grad))) if dim else 0.0
    threshold = max(cfg.gtol_abs, cfg.gtol_rel * g_inf)
    if callback is not None:
        callback(0, x, value, g_inf)

    status, message = "max_iter", f"reached iteration cap {cfg.max_iter}"
    iteration = 0
    while iteration < cfg.max_iter:
        if g_inf <= threshold:
            status, message = "converged", f"gradient norm {g_inf:.3e} <= {threshold:.3e}"
            break
        iteration += 1

        p = _truncated_cg(f, x, value, grad, cg_cap, cfg.hv_step)
        slope = float(grad @ p)
        if slope >= 0.0:
            p = -grad
            slope = float(grad @ p)

        step = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = x + step * p
            try:
                trial_value, _ = f(trial, False)
            except _EVAL_ERRORS:
                trial_value = math.inf
            if np.isfinite(trial_value) and trial_value <= value + cfg.armijo_c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status, message = "line_search_failed", (
                f"no Armijo step after {cfg.max_backtracks} backtracks at iteration {iteration}"
            )
            break

        x = x + step * p
        value, grad = f(x, True)
        g_inf = float(np.max(np.abs(grad)))
        if callback is not None:
            callback(iteration, x, value, g_inf)
    if status == "max_iter" and g_inf <= threshold:
        status, message = "converged", f"gradient norm {g_inf:.3e} <= {threshold:.3e}"

    return MinimizeResult(x, value, grad, g_inf, iteration, f.n_value, f.n_grad,
                          status, message)


def _truncated_cg(f, x, value, grad, cg_cap: int, hv_step: float) -> np.ndarray:
    """Approximate Newton direction via CG with finite-difference H products."""
    g_norm = float(np.linalg.norm(grad))
    forcing = min(0.5, math.sqrt(g_norm)) * g_norm
    x_scale = 1.0 + float(np.linalg.norm(x))

    p = np.zeros_like(grad)
    r = grad.copy()  # residual of H p + g = 0 at p = 0
    d = -grad
    rs = float(r @ r)
    for _ in range(max(1, cg_cap)):
        d_norm = float(np.linalg.norm(d))
        if d_norm == 0.0:
            break
        h = hv_step * x_scale / d_norm
        try:
            _, g_plus = f(x + h * d, True)
            _, g_minus = f(x - h * d, True)
        except _EVAL_ERRORS:
            # Probe left the feasible region; keep whatever progress exists.
            break
        hd = (g_plus - g_minus) / (2.0 * h)
        curv = float(d @ hd)
        if not np.isfinite(curv) or curv <= 1e-16 * d_norm**2:
            # Negative or vanishing curvature: keep progress so far, or use
            # steepest descent when the very first direction already fails.
            if np.all(p == 0.0):
                return -grad
            break
        alpha = rs / curv
        p += alpha * d
        r += alpha * hd
        rs_next = float(r @ r)
        if math.sqrt(rs_next) <= forcing:
            break
        d = -r + (rs_next / rs) * d
        rs = rs_next
    if np.all(p == 0.0):
        return -grad
    return p


@dataclass
class StageReport:
    """Outcome of one sequential-fitting stage."""

    n_k: int
    nll: float
    grad_inf: float
    iterations: int
    status: str
    seconds: float
    beta: np.ndarray


@dataclass
class FitReport:
    family: str
    stages: list[StageReport] = field(default_factory=list)
    stopped_early: bool = False
    message: str = ""

    @property
    def stage_nlls(self) -> np.ndarray:
        return np.asarray([s.nll for s in self.stages])


# A new stage must not be worse than the previous optimum by more than this.
STAGE_TOLERANCE = 1e-6


def default_initial_spec(A: sp.spmatrix, grid: Grid, y: np.ndarray, family: str) -> KernelSpec:
    """Data-driven single-component starting point.

    Length scale n/10 pixels; amplitude std(y) normalized by the mean beam
    length so it lives on the image intensity scale.
    """
    mean_row_sum = float(np.mean(A @ np.ones(A.shape[1]))) if A.shape[0] else 0.0
    sigma = float(np.std(y)) / mean_row_sum if mean_row_sum > 0 else 1.0
    if not (np.isfinite(sigma) and sigma > 0):
        sigma = 1.0
    return KernelSpec(family, sigma_f=[sigma], ell=[grid.n / 10.0], c=0.0)


def fit_sequential(A: sp.spmatrix, grid: Grid, y: np.ndarray, noise: NoiseCovariance,
                   family: str = "mk52", n_k_max: int = 1,
                   config: OptimizerConfig | None = None,
                   init: KernelSpec | None = None,
                   trace_path=None,
                   **engine_kwargs) -> tuple[KernelSpec, FitReport]:
    """Fit composite-kernel hyperparameters one component at a time.

    Stage 1 fits a single component from a data-driven start (or ``init``).
    Each later stage appends a component initialized from the previous
    stage's newest fitted component, nudged by a fixed 1e-3 relative factor
    so the two components separate, and re-optimizes all parameters jointly.
    A stage that ends worse than the previous optimum is retried once from
    a near-zero amplitude (which reproduces the previous model); if it is
    still worse the fit stops early and reports the stages that succeeded.
    Reported stage NLLs are therefore nonincreasing within a 1e-6 slack.
    """
    if n_k_max < 1:
        raise ValueError(f"n_k_max must be >= 1, got {n_k_max}")
    cfg = config or OptimizerConfig()
    engine = MarginalLikelihood(A, grid, noise, y, family, **engine_kwargs)
    report = FitReport(family=family)
    trace_file = open(trace_path, "a") if trace_path is not None else None
    if trace_file is not None and trace_file.tell() == 0:
        trace_file.write("stage,iteration,nll,grad_inf\n")

    def objective(beta, need_grad=True):
        spec = KernelSpec.from_beta(family, beta)
        if need_grad:
            ev = engine.value_and_grad(spec)
            return ev.value, ev.grad
        return engine.value(spec), None

    def run_stage(stage_idx: int, start: KernelSpec) -> tuple[KernelSpec, MinimizeResult, float]:
        def cb(iteration, xx, val, ginf):
            if trace_file is not None:
                trace_file.write(f"{stage_idx},{iteration},{val:.17g},{ginf:.17g}\n")

        t0 = time.perf_counter()
        result = minimize(objective, start.to_beta(), cfg, callback=cb)
        seconds = time.perf_counter() - t0
        return KernelSpec.from_beta(family, result.x), result, seconds

    try:
        start = init if init is not None else default_initial_spec(A, grid, y, family)
        if init is None:
            start = KernelSpec(family, start.sigma_f, start.ell,
                               c=engine.optimal_c(start))
        best_spec, result, seconds = run_stage(1, start)
        report.stages.append(StageReport(best_spec.n_k, result.fun, result.grad_inf,
                                         result.iterations, result.status, seconds,
                                         result.x.copy()))
        best_nll = result.fun

        for stage in range(2, n_k_max + 1):
            sigma_prev = float(best_spec.sigma_f[-1])
            ell_prev = float(best_spec.ell[-1])
            # Deterministic nudge keeps the new component distinguishable
            # from the one it copies.
            start = best_spec.with_component(sigma_prev * (1.0 + 1e-3),
                                             ell_prev / (1.0 + 1e-3))
            spec_k, result, seconds = run_stage(stage, start)
            if result.fun > best_nll + STAGE_TOLERANCE:
                # Retry from an almost-inactive new component, whose starting
                # objective nearly equals the previous optimum.
                start = best_spec.with_component(sigma_prev * 1e-3, ell_prev)
                spec_k, result, seconds = run_stage(stage, start)
            if result.fun > best_nll + STAGE_TOLERANCE:
                report.stopped_early = True
                report.message = (
                    f"stage {stage} ended {result.fun - best_nll:.3e} above the "
                    f"previous optimum; keeping {stage - 1} component(s)"
                )
                break
            best_spec, best_nll = spec_k, result.fun
            report.stages.append(StageReport(spec_k.n_k, result.fun, result.grad_inf,
                                             result.iterations, result.status, seconds,
                                             result.x.copy()))
    finally:
        if trace_file is not None:
            trace_file.close()

    return best_spec, report
