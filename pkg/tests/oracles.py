"""Independent reference implementations used only by the tests.

Everything here is written directly from the defining formulas with plain
dense linear algebra, deliberately sharing no code with the package, so
agreement between the two is meaningful.
"""

import math

import numpy as np


# -- projector oracles ------------------------------------------------------

def pixel_bounds(n, p, row, col):
    """Axis-aligned bounds (xlo, xhi, ylo, yhi) of pixel (row, col)."""
    half = 0.5 * n * p
    xlo = -half + col * p
    ylo = -half + (n - 1 - row) * p
    return xlo, xlo + p, ylo, ylo + p


def beam_lengths_exact(n, p, theta, tau):
    """Per-pixel beam intersection lengths by interval clipping.

    For each pixel the beam parameter range inside the pixel's x-slab and
    y-slab is intersected directly, which gives the exact chord length
    without any lattice traversal. Returns a flat (n*n,) vector.
    """
    ct, st = math.cos(theta), math.sin(theta)
    p0 = (tau * ct, tau * st)
    d = (-st, ct)
    out = np.zeros(n * n)
    for row in range(n):
        for col in range(n):
            xlo, xhi, ylo, yhi = pixel_bounds(n, p, row, col)
            s_lo, s_hi = -np.inf, np.inf
            ok = True
            for origin, direction, lo, hi in ((p0[0], d[0], xlo, xhi),
                                              (p0[1], d[1], ylo, yhi)):
                if abs(direction) > 1e-14:
                    a = (lo - origin) / direction
                    b = (hi - origin) / direction
                    s_lo = max(s_lo, min(a, b))
                    s_hi = min(s_hi, max(a, b))
                elif not (lo <= origin <= hi):
                    ok = False
                    break
            if ok and s_hi > s_lo:
                out[row * n + col] = s_hi - s_lo
    return out


def beam_lengths_sampled(n, p, theta, tau, n_samples=10_000):
    """Per-pixel lengths by midpoint sampling along the beam.

    Accuracy is limited to roughly 2 * chord / n_samples per pixel by the
    binning of samples near pixel boundaries.
    """
    half = 0.5 * n * p
    ct, st = math.cos(theta), math.sin(theta)
    p0 = np.array([tau * ct, tau * st])
    d = np.array([-st, ct])

    s_lo, s_hi = -np.inf, np.inf
    for ax in range(2):
        if abs(d[ax]) > 1e-14:
            a = (-half - p0[ax]) / d[ax]
            b = (half - p0[ax]) / d[ax]
            s_lo = max(s_lo, min(a, b))
            s_hi = min(s_hi, max(a, b))
        elif abs(p0[ax]) > half:
            return np.zeros(n * n)
    if not s_hi > s_lo:
        return np.zeros(n * n)

    ds = (s_hi - s_lo) / n_samples
    s = s_lo + (np.arange(n_samples) + 0.5) * ds
    pts = p0[None, :] + s[:, None] * d[None, :]
    col = np.floor((pts[:, 0] + half) / p).astype(int)
    row = n - 1 - np.floor((pts[:, 1] + half) / p).astype(int)
    keep = (col >= 0) & (col < n) & (row >= 0) & (row < n)
    out = np.zeros(n * n)
    np.add.at(out, row[keep] * n + col[keep], ds)
    return out


# -- kernel oracles ---------------------------------------------------------

UNIT_FORMS = {
    "se": lambda r: np.exp(-0.5 * r**2),
    "mk32": lambda r: (1.0 + np.sqrt(3.0) * r) * np.exp(-np.sqrt(3.0) * r),
    "mk52": lambda r: (1.0 + np.sqrt(5.0) * r + 5.0 * r**2 / 3.0)
    * np.exp(-np.sqrt(5.0) * r),
}


def dense_prior(coords_px, family, sigma_f, ell):
    """Composite kernel matrix from the closed forms, pairwise loop-free."""
    diff = coords_px[:, None, :] - coords_px[None, :, :]
    d = np.sqrt(np.sum(diff**2, axis=-1))
    k = np.zeros_like(d)
    for s, l in zip(sigma_f, ell):
        k += s**2 * UNIT_FORMS[family](d / l)
    return k


# -- Gaussian-conditioning oracles -------------------------------------------

def dense_posterior(A, K, noise_var, y, c):
    """Posterior mean and full covariance via an explicit inverse."""
    A = np.asarray(A)
    ky = A @ K @ A.T + np.diag(noise_var)
    w = np.linalg.inv(ky)
    ones = np.ones(K.shape[0])
    mean = c * ones + K @ A.T @ (w @ (y - c * (A @ ones)))
    cov = K - K @ A.T @ w @ A @ K
    return mean, cov


def dense_nll(A, K, noise_var, y, c):
    """Exact negative log marginal likelihood via slogdet and inverse."""
    A = np.asarray(A)
    m = A.shape[0]
    ky = A @ K @ A.T + np.diag(noise_var)
    r = y - c * (A @ np.ones(K.shape[0]))
    sign, logdet = np.linalg.slogdet(ky)
    assert sign > 0
    return 0.5 * r @ np.linalg.solve(ky, r) + 0.5 * logdet + 0.5 * m * math.log(2 * math.pi)


def central_diff(fun, x, h=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g
