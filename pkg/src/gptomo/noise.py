"""Synthetic measurement-noise regimes and their assumed noise models.

Four cases, all defined relative to the RMS level of the clean sinogram:

- ``I``   no added noise; the model still carries a small fixed nugget
          (sigma = 0.001) for numerical conditioning, never optimized.
- ``II``  additive Gaussian noise, sigma = 0.1 * rms(y); the model assumes
          the matching homoskedastic level.
- ``III`` heteroskedastic noise, sigma_t = alpha_t * rms(y) with
          alpha_t ~ U(0.05, 0.25); the model assumes the true per-beam
          levels (matched heteroskedastic).
- ``IV``  generated exactly like III (same seed gives identical data) but
          the model assumes a homoskedastic 0.1 * rms(y), i.e. the average
          level, deliberately misspecified.

Per-measurement randomness comes from independent Philox streams keyed by
``(seed, measurement index)``. Philox is counter-based, so generation is
reproducible bit for bit and independent of evaluation order, including
under any parallel split of the measurements. Within a stream the draw
order is fixed: one uniform (the alpha draw), then one standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import NoiseCovariance

CASES = ("I", "II", "III", "IV")

# Fixed conditioning nugget for noise-free data.
CASE_I_NUGGET = 1e-3

# Fractional noise level shared by Cases II and IV's assumed model.
RMS_FRACTION = 0.1

# Range of per-beam noise fractions for Cases III and IV.
ALPHA_LOW, ALPHA_HIGH = 0.05, 0.25


@dataclass(frozen=True)
class NoiseCase:
    """Noise regime selector.

    ``per_measurement_scale`` switches Cases III/IV to scale each beam's
    noise by that beam's own |y_t| instead of the global RMS level.
    """

    case: str
    seed: int = 0
    per_measurement_scale: bool = False

    def __post_init__(self) -> None:
        if self.case not in CASES:
            raise ValueError(f"unknown noise case {self.case!r}; expected one of {CASES}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed!r}")


def rms(v: np.ndarray) -> float:
    """Root mean square, sqrt(mean(v^2))."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("rms of an empty vector is undefined")
    return float(np.sqrt(np.mean(v * v)))


def _per_index_draws(seed: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """One uniform and one standard normal per measurement index.

    Each index gets its own Philox stream, so draws for index t never
    depend on how many other indices were generated or in what order.
    """
    uniforms = np.empty(m)
    normals = np.empty(m)
    for t in range(m):
        g = np.random.Generator(np.random.Philox(key=np.array([seed, t], dtype=np.uint64)))
        uniforms[t] = g.random()
        normals[t] = g.standard_normal()
    return uniforms, normals


def corrupt(y_clean: np.ndarray, case: NoiseCase) -> tuple[np.ndarray, np.ndarray]:
    """Apply the case's noise to a clean sinogram.

    Returns ``(y_noisy, sigma_true)`` where sigma_true holds the standard
    deviation actually used per measurement (zeros for Case I).
    """
    y = np.asarray(y_clean, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y_clean must be a non-empty vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("y_clean contains non-finite values")
    m = y.size

    if case.case == "I":
        return y.copy(), np.zeros(m)

    uniforms, normals = _per_index_draws(case.seed, m)
    if case.case == "II":
        sigma_true = np.full(m, RMS_FRACTION * rms(y))
    else:  # III and IV share the generation law
        alpha = ALPHA_LOW + (ALPHA_HIGH - ALPHA_LOW) * uniforms
        scale = np.abs(y) if case.per_measurement_scale else rms(y)
        sigma_true = alpha * scale
    return y + sigma_true * normals, sigma_true


def assumed_noise_model(case: NoiseCase, y_clean: np.ndarray,
                        sigma_true: np.ndarray) -> NoiseCovariance:
    """Noise covariance the reconstruction assumes for this case.

    Case III gets the true per-beam levels; Case IV deliberately assumes
    the average homoskedastic level instead. Nonpositive entries (possible
    only in the per-measurement variant, where a beam can miss the object
    entirely) are floored at the Case I nugget to keep the covariance
    positive definite; the default global-RMS variant is never altered.
    """
    y = np.asarray(y_clean, dtype=float)
    if case.case == "I":
        return NoiseCovariance.homoskedastic(CASE_I_NUGGET)
    if case.case in ("II", "IV"):
        return NoiseCovariance.homoskedastic(RMS_FRACTION * rms(y))
    sigma = np.asarray(sigma_true, dtype=float).copy()
    sigma[sigma <= 0.0] = CASE_I_NUGGET
    return NoiseCovariance.heteroskedastic(sigma)
