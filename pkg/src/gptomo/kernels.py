"""Stationary covariance kernels and the pixel-grid prior covariance.

Supported families, written in terms of the scaled distance r = d / l:

- ``se``:   sigma^2 * exp(-r^2 / 2)
- ``mk32``: sigma^2 * (1 + sqrt(3) r) * exp(-sqrt(3) r)      (Matern 3/2)
- ``mk52``: sigma^2 * (1 + sqrt(5) r + 5 r^2 / 3) * exp(-sqrt(5) r)  (Matern 5/2)

A composite kernel is a sum of N_k components of one family, each with its
own amplitude sigma_f,i and length scale l_i. Distances are measured in
pixel units (see ``Grid.pixel_coords_px``), so length scales are expressed
in pixels. Hyperparameters are optimized through the vector

    beta = [c, log sigma_f,1 .. log sigma_f,Nk, log l_1 .. log l_Nk]

where c is the constant prior mean. The log reparameterization keeps
amplitudes and length scales positive without constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

FAMILIES = ("se", "mk32", "mk52")

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)

# Relative jitter added to the diagonal when a prior covariance is
# factorized on its own (the data-space solves never factorize K directly).
PRIOR_JITTER = 1e-10

# Ceiling for materializing a dense n^2-by-n^2 prior covariance.
DENSE_BUDGET_BYTES = 1_000_000_000


class MemoryBudgetError(MemoryError):
    """A dense allocation would exceed the configured memory budget."""


def _check_family(family: str) -> str:
    fam = str(family).lower()
    if fam not in FAMILIES:
        raise ValueError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")
    return fam


def unit_kernel(family: str, r: np.ndarray) -> np.ndarray:
    """Kernel value at unit amplitude as a function of scaled distance r."""
    fam = _check_family(family)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("scaled distances must be nonnegative")
    if fam == "se":
        return np.exp(-0.5 * r * r)
    if fam == "mk32":
        t = _SQRT3 * r
        return (1.0 + t) * np.exp(-t)
    t = _SQRT5 * r
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


def unit_kernel_pair(family: str, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit kernel value and its derivative with respect to log l.

    Returns ``(k, h)`` with ``h = dk/d(log l) = -r * dk/dr``, sharing one
    exponential evaluation between the two.
    """
    fam = _check_family(family)
    r = np.asarray(r, dtype=float)
    if fam == "se":
        e = np.exp(-0.5 * r * r)
        return e, r * r * e
    if fam == "mk32":
        t = _SQRT3 * r
        e = np.exp(-t)
        return (1.0 + t) * e, t * t * e
    t = _SQRT5 * r
    e = np.exp(-t)
    return (1.0 + t + t * t / 3.0) * e, (t * t / 3.0) * (1.0 + t) * e


@dataclass(frozen=True)
class KernelSpec:
    """Composite kernel hyperparameters plus the constant prior mean c."""

    family: str
    sigma_f: np.ndarray
    ell: np.ndarray
    c: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", _check_family(self.family))
        sigma = np.atleast_1d(np.asarray(self.sigma_f, dtype=float))
        ell = np.atleast_1d(np.asarray(self.ell, dtype=float))
        if sigma.ndim != 1 or ell.ndim != 1 or sigma.size != ell.size or sigma.size == 0:
            raise ValueError("sigma_f and ell must be 1-d arrays of equal nonzero length")
        if not (np.all(np.isfinite(sigma)) and np.all(sigma > 0)):
            raise ValueError("amplitudes sigma_f must be positive and finite")
        if not (np.all(np.isfinite(ell)) and np.all(ell > 0)):
            raise ValueError("length scales ell must be positive and finite")
        if not np.isfinite(self.c):
            raise ValueError("prior mean c must be finite")
        object.__setattr__(self, "sigma_f", sigma)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "c", float(self.c))

    @property
    def n_k(self) -> int:
        return int(self.sigma_f.size)

    @property
    def k0(self) -> float:
        """Prior variance at distance zero, sum of squared amplitudes."""
        return float(np.sum(self.sigma_f**2))

    def to_beta(self) -> np.ndarray:
        return np.concatenate(([self.c], np.log(self.sigma_f), np.log(self.ell)))

    @staticmethod
    def from_beta(family: str, beta: np.ndarray) -> "KernelSpec":
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 1 or beta.size < 3 or beta.size % 2 == 0:
            raise ValueError(
                f"beta must have odd length 2*n_k + 1 >= 3, got shape {beta.shape}"
            )
        n_k = (beta.size - 1) // 2
        return KernelSpec(
            family=family,
            sigma_f=np.exp(beta[1 : 1 + n_k]),
            ell=np.exp(beta[1 + n_k :]),
            c=float(beta[0]),
        )

    def with_component(self, sigma: float, ell: float) -> "KernelSpec":
        """Spec extended by one additional component."""
        return replace(
            self,
            sigma_f=np.append(self.sigma_f, sigma),
            ell=np.append(self.ell, ell),
        )


def component_value(family: str, sigma_f: float, ell: float, d: np.ndarray) -> np.ndarray:
    """One kernel component sigma^2 k_unit(d / l) at pixel-unit distances d."""
    if not (np.isfinite(sigma_f) and sigma_f > 0):
        raise ValueError(f"amplitude sigma_f must be positive, got {sigma_f!r}")
    if not (np.isfinite(ell) and ell > 0):
        raise ValueError(f"length scale ell must be positive, got {ell!r}")
    return sigma_f**2 * unit_kernel(family, np.asarray(d, dtype=float) / ell)


def kernel_value(spec: KernelSpec, d: np.ndarray) -> np.ndarray:
    """Composite kernel evaluated at pixel-unit distances d."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    for sigma, ell in zip(spec.sigma_f, spec.ell):
        out += sigma**2 * unit_kernel(spec.family, d / ell)
    return out


def kernel_grad(spec: KernelSpec, d: np.ndarray) -> np.ndarray:
    """Derivatives of the composite kernel with respect to beta[1:].

    Returns an array of shape ``(2 * n_k,) + d.shape`` ordered as
    ``[d/dlog sigma_1..Nk, d/dlog l_1..Nk]``, matching the hypervector
    layout after the leading mean entry.
    """
    d = np.asarray(d, dtype=float)
    out = np.empty((2 * spec.n_k,) + d.shape)
    for i, (sigma, ell) in enumerate(zip(spec.sigma_f, spec.ell)):
        k_unit, h_unit = unit_kernel_pair(spec.family, d / ell)
        out[i] = 2.0 * sigma**2 * k_unit
        out[spec.n_k + i] = sigma**2 * h_unit
    return out


def distance_block(coords: np.ndarray, cols: np.ndarray | slice) -> np.ndarray:
    """Pairwise distances between all points and a column subset."""
    return cdist(coords, coords[cols])


class PriorCovariance:
    """Lazily evaluated prior covariance over grid pixels.

    Never materializes the full n^2-by-n^2 matrix unless asked; columns are
    generated in blocks from pixel coordinates, which keeps the memory
    footprint bounded for large grids.
    """

    def __init__(self, coords_px: np.ndarray, spec: KernelSpec):
        coords = np.asarray(coords_px, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords_px must have shape (n_pixels, 2)")
        self.coords = coords
        self.spec = spec

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_points, self.n_points)

    def diagonal(self) -> np.ndarray:
        return np.full(self.n_points, self.spec.k0)

    def block(self, cols: np.ndarray | slice) -> np.ndarray:
        """Dense column block K[:, cols]."""
        return kernel_value(self.spec, distance_block(self.coords, cols))

    def matvec(self, v: np.ndarray, block_cols: int = 2048) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_points,):
            raise ValueError(f"expected vector of length {self.n_points}")
        out = np.zeros(self.n_points)
        for lo in range(0, self.n_points, block_cols):
            cols = slice(lo, min(lo + block_cols, self.n_points))
            out += self.block(cols) @ v[cols]
        return out

    def full(self, max_bytes: int = DENSE_BUDGET_BYTES) -> np.ndarray:
        need = 8 * self.n_points**2
        if need > max_bytes:
            raise MemoryBudgetError(
                f"dense prior covariance needs {need / 1e9:.2f} GB "
                f"(budget {max_bytes / 1e9:.2f} GB); use block access instead"
            )
        return self.block(slice(None))


def build_prior_covariance(grid, spec: KernelSpec, max_bytes: int = DENSE_BUDGET_BYTES) -> np.ndarray:
    """Dense prior covariance over all grid pixels, in flat pixel order.

    Raises :class:`MemoryBudgetError` when the dense matrix would exceed
    ``max_bytes``. Callers that factorize the result directly should add
    ``PRIOR_JITTER * spec.k0`` to the diagonal.
    """
    return PriorCovariance(grid.pixel_coords_px(), spec).full(max_bytes)
