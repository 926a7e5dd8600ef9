"""Tests for the least-squares and total-variation baselines."""

import numpy as np
import pytest
import scipy.sparse as sp

from gptomo.baselines import (
    DEFAULT_LAMBDA_GRID,
    TvConfig,
    _divergence,
    _gradient,
    reconstruct_l2,
    reconstruct_tv,
    total_variation,
    tv_grid_search,
    tv_prox,
)
from gptomo.geometry import build_grid, build_system_matrix, default_scan, forward_project


def small_problem(n=8, n_theta=6, seed=0):
    grid = build_grid(n, 1.0)
    A = build_system_matrix(grid, default_scan(grid, n_theta))
    rng = np.random.default_rng(seed)
    f = rng.random(n * n)
    return grid, A, f, forward_project(A, f)


# -- least squares ----------------------------------------------------------------

def test_l2_recovers_consistent_data():
    # Overdetermined and consistent: CG drives the residual to zero.
    grid, A, f, y = small_problem(n=2, n_theta=3)
    x = reconstruct_l2(A, y)
    np.testing.assert_allclose(A @ x, y, atol=1e-8)


def test_l2_zero_data_gives_zero_image():
    grid, A, _, _ = small_problem()
    x = reconstruct_l2(A, np.zeros(A.shape[0]))
    np.testing.assert_array_equal(x, np.zeros(A.shape[1]))


def test_l2_matches_pseudoinverse_on_dense_random_system():
    rng = np.random.default_rng(1)
    A = sp.csr_matrix(rng.normal(size=(30, 16)))
    y = rng.normal(size=30)
    x = reconstruct_l2(A, y, iterations=500)
    expected = np.linalg.pinv(A.toarray()) @ y
    np.testing.assert_allclose(x, expected, atol=1e-6)


def test_l2_residual_history_is_nonincreasing():
    grid, A, f, y = small_problem(n=8, n_theta=4)
    x, history = reconstruct_l2(A, y, return_history=True)
    assert history[0] == pytest.approx(np.linalg.norm(y))
    assert np.all(np.diff(history) <= 1e-12 * history[0])
    assert history[-1] == pytest.approx(np.linalg.norm(A @ x - y), rel=1e-12)


def test_l2_input_validation():
    grid, A, _, y = small_problem()
    with pytest.raises(ValueError, match="measurements"):
        reconstruct_l2(A, y[:-1])
    with pytest.raises(ValueError, match="budget"):
        reconstruct_l2(A, y, iterations=-1)


# -- TV functional and prox -------------------------------------------------------

def test_tv_of_constant_image_is_zero():
    assert total_variation(np.full((7, 7), 3.2)) == 0.0


def test_tv_positive_homogeneity():
    rng = np.random.default_rng(2)
    f = rng.normal(size=(9, 9))
    assert total_variation(2.5 * f) == pytest.approx(2.5 * total_variation(f), rel=1e-12)


def test_tv_single_step_edge():
    # One vertical edge of height 1 spanning k rows has TV = k.
    f = np.zeros((5, 6))
    f[:, 3:] = 1.0
    assert total_variation(f) == pytest.approx(5.0, abs=1e-12)


def test_tv_rejects_flat_input():
    with pytest.raises(ValueError, match="2-d"):
        total_variation(np.arange(9.0))


def test_gradient_divergence_adjointness():
    # <grad u, p> = -<u, div p> for all u, p.
    rng = np.random.default_rng(3)
    u = rng.normal(size=(6, 8))
    px = rng.normal(size=(6, 8))
    py = rng.normal(size=(6, 8))
    gx, gy = _gradient(u)
    lhs = np.sum(gx * px) + np.sum(gy * py)
    rhs = -np.sum(u * _divergence(px, py))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_tv_prox_zero_weight_is_identity_copy():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(5, 5))
    out = tv_prox(v, 0.0)
    np.testing.assert_array_equal(out, v)
    assert out is not v


def test_tv_prox_decreases_prox_objective():
    # The prox output must beat the input on 1/2||u-v||^2 + w*TV(u).
    rng = np.random.default_rng(5)
    v = rng.normal(size=(8, 8))
    w = 0.3
    u = tv_prox(v, w, iterations=100)
    before = w * total_variation(v)
    after = 0.5 * np.sum((u - v) ** 2) + w * total_variation(u)
    assert after < before


def test_tv_prox_large_weight_flattens():
    rng = np.random.default_rng(6)
    v = rng.normal(size=(6, 6))
    u = tv_prox(v, 1e4, iterations=200)
    assert np.ptp(u) < 1e-3 * max(np.ptp(v), 1.0)
    # The prox preserves the mean: div has zero column sums.
    assert np.mean(u) == pytest.approx(np.mean(v), abs=1e-10)


# -- TV reconstruction ------------------------------------------------------------

def test_tv_rejects_bad_lambda():
    grid, A, _, y = small_problem()
    with pytest.raises(ValueError, match="lam"):
        reconstruct_tv(A, y, -1.0)
    with pytest.raises(ValueError, match="lam"):
        reconstruct_tv(A, y, np.inf)


def test_tv_vanishing_weight_approaches_least_squares():
    grid, A, f, y = small_problem(n=8, n_theta=8)
    x_l2 = reconstruct_l2(A, y)
    x_tv = reconstruct_tv(A, y, 1e-12, TvConfig(outer_iterations=3000))
    scale = np.linalg.norm(x_l2)
    assert np.linalg.norm(x_tv - x_l2) < 1e-3 * scale


def test_tv_huge_weight_gives_flat_image():
    grid, A, f, y = small_problem(n=8, n_theta=6, seed=7)
    x = reconstruct_tv(A, y, 1e3, TvConfig(outer_iterations=600, prox_iterations=120))
    assert np.ptp(x) < 1e-3 * max(np.ptp(f), 1.0)


def test_tv_objectives_nonincreasing():
    grid, A, f, y = small_problem(n=8, n_theta=6, seed=8)
    x, objectives = reconstruct_tv(A, y, 1e-4, return_objectives=True)
    assert np.all(np.diff(objectives) <= 0.0)
    assert objectives[-1] < objectives[0]


def test_tv_mismatched_data_rejected():
    grid, A, _, y = small_problem()
    with pytest.raises(ValueError, match="measurements"):
        reconstruct_tv(A, y[:-3], 1e-4)


# -- grid search ------------------------------------------------------------------

def test_default_lambda_grid_shape():
    assert DEFAULT_LAMBDA_GRID.shape == (13,)
    assert DEFAULT_LAMBDA_GRID[0] == pytest.approx(1e-8)
    assert DEFAULT_LAMBDA_GRID[-1] == pytest.approx(1e-2)
    ratios = DEFAULT_LAMBDA_GRID[1:] / DEFAULT_LAMBDA_GRID[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_grid_search_reports_curve_and_best():
    grid, A, f, y = small_problem(n=8, n_theta=6, seed=9)
    cfg = TvConfig(outer_iterations=60, prox_iterations=15)
    result = tv_grid_search(A, y, f, config=cfg)
    assert result.lambdas.shape == (13,)
    assert result.e_norms.shape == (13,)
    assert result.best_index == int(np.argmin(result.e_norms))
    assert result.best_e_norm == result.e_norms[result.best_index]
    assert result.lambda_star == result.lambdas[result.best_index]
    rows = result.curve_rows()
    assert len(rows) == 13 and rows[0][0] == pytest.approx(1e-8)


def test_grid_search_tie_picks_smaller_lambda():
    # Zero data: every weight reconstructs the zero image, ties resolve low.
    grid, A, f, _ = small_problem(n=4, n_theta=3)
    y = np.zeros(A.shape[0])
    cfg = TvConfig(outer_iterations=5, prox_iterations=5)
    result = tv_grid_search(A, y, f, config=cfg)
    assert result.best_index == 0
    np.testing.assert_array_equal(result.reconstruction, np.zeros(A.shape[1]))


def test_grid_search_workers_do_not_change_result():
    grid, A, f, y = small_problem(n=6, n_theta=4, seed=10)
    cfg = TvConfig(outer_iterations=40, prox_iterations=10)
    lambdas = np.logspace(-6, -3, 5)
    serial = tv_grid_search(A, y, f, lambdas=lambdas, config=cfg, workers=1)
    threaded = tv_grid_search(A, y, f, lambdas=lambdas, config=cfg, workers=4)
    np.testing.assert_array_equal(serial.e_norms, threaded.e_norms)
    assert serial.best_index == threaded.best_index


def test_grid_search_rejects_empty_grid():
    grid, A, f, y = small_problem(n=4, n_theta=3)
    with pytest.raises(ValueError, match="lambdas"):
        tv_grid_search(A, y, f, lambdas=np.array([]))
