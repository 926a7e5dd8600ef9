"""Ground-truth objects: the Shepp-Logan head phantom on a pixel grid.

Both the standard intensity table and the high-contrast "modified"
variant are available; they share the same ten-ellipse geometry, defined
on the unit square [-1, 1]^2 and scaled to the grid's physical extent.
Intensities are additive and the result is clamped at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Grid

# Each row: (intensity, semi-axis a, semi-axis b, x0, y0, rotation degrees).
# Geometry follows the classical head-phantom table; note the two small
# bottom ellipses are not mirror images of each other, so the phantom is
# left-right symmetric only above them.
_GEOMETRY = [
    (0.69, 0.92, 0.0, 0.0, 0.0),
    (0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (0.11, 0.31, 0.22, 0.0, -18.0),
    (0.16, 0.41, -0.22, 0.0, 18.0),
    (0.21, 0.25, 0.0, 0.35, 0.0),
    (0.046, 0.046, 0.0, 0.1, 0.0),
    (0.046, 0.046, 0.0, -0.1, 0.0),
    (0.046, 0.023, -0.08, -0.605, 0.0),
    (0.023, 0.023, 0.0, -0.606, 0.0),
    (0.023, 0.046, 0.06, -0.605, 0.0),
]

_INTENSITIES = {
    "standard": (1.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.02, 0.01, 0.01, 0.02),
    "modified": (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
}

VARIANTS = tuple(_INTENSITIES)


@dataclass(frozen=True)
class ObjectField:
    """An image bound to its grid; flat order matches the grid's pixel index."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if values.shape == (n * n,):
            values = values.reshape(n, n)
        if values.shape != (n, n):
            raise ValueError(f"values shape {values.shape} does not match grid n={n}")
        if not np.all(np.isfinite(values)):
            raise ValueError("object values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        """Population standard deviation."""
        return float(np.std(self.values))


def shepp_logan(grid: Grid, variant: str = "standard") -> ObjectField:
    """Render the head phantom at pixel centers.

    ``variant`` selects the intensity set: "standard" for the classical
    low-contrast values, "modified" for the common high-contrast ones.
    """
    if variant not in _INTENSITIES:
        raise ValueError(f"unknown phantom variant {variant!r}; expected one of {VARIANTS}")
    centers = grid.pixel_centers() / grid.half_width  # unit-square coordinates
    x = centers[:, 0]
    y = centers[:, 1]
    values = np.zeros(grid.n2)
    for intensity, (a, b, x0, y0, phi_deg) in zip(_INTENSITIES[variant], _GEOMETRY):
        phi = math.radians(phi_deg)
        ct, st = math.cos(phi), math.sin(phi)
        xr = (x - x0) * ct + (y - y0) * st
        yr = -(x - x0) * st + (y - y0) * ct
        inside = (xr / a) ** 2 + (yr / b) ** 2 <= 1.0
        values[inside] += intensity
    np.maximum(values, 0.0, out=values)
    return ObjectField(grid, values.reshape(grid.n, grid.n))
