"""Scan geometry and the sparse beam-pixel intersection matrix.

The image is an n-by-n grid of square pixels with side p, centered at the
origin. Pixel (row, col) has center ``x = (col - (n-1)/2) * p`` and
``y = ((n-1)/2 - row) * p`` (row 0 is the top row), and flat index
``i = row * n + col``.

A parallel beam is identified by an angle ``theta`` and a signed offset
``tau``: it is the line through the point ``tau * (cos(theta), sin(theta))``
with direction ``(-sin(theta), cos(theta))``. The system matrix entry for
beam t and pixel i is the exact length of the intersection of that line
with the pixel, so a forward projection of an image f is ``A @ f.ravel()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# Direction components below this magnitude are treated as exactly
# axis-parallel, so no crossings are generated for that axis.
_DIR_EPS = 1e-14


@dataclass(frozen=True)
class Grid:
    """Square pixel grid centered at the origin."""

    n: int
    p: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"grid size n must be a positive integer, got {self.n!r}")
        if not (np.isfinite(self.p) and self.p > 0):
            raise ValueError(f"pixel side p must be positive and finite, got {self.p!r}")

    @property
    def n2(self) -> int:
        return self.n * self.n

    @property
    def half_width(self) -> float:
        return 0.5 * self.n * self.p

    def pixel_centers(self) -> np.ndarray:
        """Physical (x, y) centers of all pixels, shape (n^2, 2), flat order."""
        return self.pixel_coords_px() * self.p

    def pixel_coords_px(self) -> np.ndarray:
        """Pixel centers in pixel units (independent of p), shape (n^2, 2).

        These are the coordinates used for kernel distances, so hyperparameter
        length scales are expressed in pixels regardless of the physical p.
        """
        n = self.n
        idx = np.arange(self.n2)
        row, col = divmod(idx, n)
        x = col - (n - 1) / 2.0
        y = (n - 1) / 2.0 - row
        return np.column_stack([x, y]).astype(float)


def build_grid(n: int, p: float) -> Grid:
    """Validate and construct a Grid."""
    return Grid(int(n), float(p))


@dataclass(frozen=True)
class ScanConfig:
    """Parallel-beam scan: a set of angles and equispaced beam offsets.

    Beams are enumerated angle-major: measurement t corresponds to angle
    index ``t // n_tau`` and offset index ``t % n_tau``.
    """

    angles: np.ndarray
    n_tau: int
    spacing: float

    def __post_init__(self) -> None:
        angles = np.atleast_1d(np.asarray(self.angles, dtype=float))
        if angles.ndim != 1 or angles.size == 0:
            raise ValueError("angles must be a non-empty 1-d array")
        if not np.all(np.isfinite(angles)):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "angles", angles)
        if self.n_tau < 1:
            raise ValueError(f"n_tau must be >= 1, got {self.n_tau}")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise ValueError(f"beam spacing must be positive, got {self.spacing!r}")

    @property
    def n_theta(self) -> int:
        return int(self.angles.size)

    @property
    def m(self) -> int:
        return self.n_theta * self.n_tau

    @property
    def offsets(self) -> np.ndarray:
        """Signed beam offsets, symmetric about zero."""
        k = np.arange(self.n_tau, dtype=float)
        return (k - (self.n_tau - 1) / 2.0) * self.spacing


def default_scan(grid: Grid, n_theta: int) -> ScanConfig:
    """Standard scan: angles j*pi/n_theta on [0, pi), n_tau = ceil(n*sqrt(2)).

    Beam spacing equals the pixel side, so the detector just covers the
    grid diagonal.
    """
    if n_theta < 1:
        raise ValueError(f"n_theta must be >= 1, got {n_theta}")
    angles = np.arange(n_theta) * (math.pi / n_theta)
    n_tau = math.ceil(grid.n * math.sqrt(2.0))
    return ScanConfig(angles=angles, n_tau=n_tau, spacing=grid.p)


def _beam_segments(n: int, p: float, theta: float, tau: float):
    """Pixel indices and intersection lengths for a single beam.

    Returns (cols, lengths) where cols are flat pixel indices. Crossing
    parameters with every pixel edge line are merged and sorted; each
    resulting segment is assigned to the pixel containing its midpoint.
    A midpoint exactly on a shared edge goes to the pixel on the
    positive-axis side of that edge.
    """
    half = 0.5 * n * p
    ct, st = math.cos(theta), math.sin(theta)
    p0 = np.array([tau * ct, tau * st])
    d = np.array([-st, ct])

    # Clip the line to the grid bounding box.
    s_lo, s_hi = -np.inf, np.inf
    for ax in range(2):
        if abs(d[ax]) > _DIR_EPS:
            a = (-half - p0[ax]) / d[ax]
            b = (half - p0[ax]) / d[ax]
            s_lo = max(s_lo, min(a, b))
            s_hi = min(s_hi, max(a, b))
        elif abs(p0[ax]) > half:
            return None
    if not (s_hi > s_lo) or not np.isfinite(s_hi - s_lo):
        return None

    edges = -half + p * np.arange(n + 1)
    crossings = [np.array([s_lo, s_hi])]
    for ax in range(2):
        if abs(d[ax]) > _DIR_EPS:
            s = (edges - p0[ax]) / d[ax]
            crossings.append(s[(s > s_lo) & (s < s_hi)])
    s = np.sort(np.concatenate(crossings))
    lengths = np.diff(s)
    keep = lengths > 1e-12 * p
    if not np.any(keep):
        return None
    mids = p0[None, :] + 0.5 * (s[:-1] + s[1:])[keep, None] * d[None, :]
    lengths = lengths[keep]

    col = np.floor((mids[:, 0] + half) / p).astype(int)
    # Row from the bottom edge so that an exact horizontal-edge midpoint is
    # assigned to the pixel above (positive-y side), mirroring floor() on x.
    row = n - 1 - np.floor((mids[:, 1] + half) / p).astype(int)
    inside = (col >= 0) & (col < n) & (row >= 0) & (row < n)
    if not np.any(inside):
        return None
    return row[inside] * n + col[inside], lengths[inside]


def build_system_matrix(grid: Grid, scan: ScanConfig) -> sp.csr_matrix:
    """Exact intersection-length system matrix, shape (m, n^2), CSR.

    Rows follow the angle-major beam enumeration of ``scan``. Beams that
    miss the grid produce empty rows.
    """
    n, p = grid.n, grid.p
    offsets = scan.offsets
    rows, cols, vals = [], [], []
    t = 0
    for theta in scan.angles:
        for tau in offsets:
            seg = _beam_segments(n, p, float(theta), float(tau))
            if seg is not None:
                idx, lengths = seg
                rows.append(np.full(idx.size, t))
                cols.append(idx)
                vals.append(lengths)
            t += 1
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = cols = vals = np.empty(0)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(scan.m, grid.n2))
    A.sum_duplicates()
    return A.tocsr()


def forward_project(A: sp.spmatrix, f: np.ndarray) -> np.ndarray:
    """Sinogram of an image: y = A f, with f given flat or as (n, n)."""
    values = np.asarray(getattr(f, "values", f), dtype=float)
    flat = values.ravel()
    if flat.size != A.shape[1]:
        raise ValueError(
            f"image has {flat.size} pixels but the system matrix expects {A.shape[1]}"
        )
    return A @ flat


def save_system_matrix(path, A: sp.spmatrix) -> None:
    """Write a system matrix as text triplets.

    Format: a comment header, then one line ``m n2 nnz``, then nnz lines
    ``t i value`` with 0-based indices and full-precision values.
    """
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write("# beam-pixel intersection matrix, triplet v1\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def load_system_matrix(path) -> sp.csr_matrix:
    """Read a matrix written by :func:`save_system_matrix`."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing triplet header line")
        m, n2, nnz = (int(tok) for tok in fh.readline().split())
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.size == 0:
        data = np.empty((0, 3))
    if data.shape[0] != nnz or (nnz and data.shape[1] != 3):
        raise ValueError(f"{path}: expected {nnz} triplet rows, found {data.shape[0]}")
    return sp.csr_matrix(
        (data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
        shape=(m, n2),
    )
