"""Closed-form Gaussian predictions for post-selected twin-beam statistics.

The finite-band prediction rests on the regression decomposition
``x_s = beta * x_i + eps`` with ``beta = cov / v_i`` and ``eps`` independent of
the idler, so selecting on the idler leaves ``Var(eps)`` untouched and only
truncates the ``beta * x_i`` part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConditioningError, DomainError, UnderflowError
from .selection import SelectionBand
from .source import CovarianceMatrix
from .stats import from_db, to_db

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
MASS_FLOOR = 1e-300
# below this standardized width the closed form loses digits to cancellation
_THIN_SLICE = 0.05
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def normal_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def normal_cdf(z: float) -> float:
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-z / _SQRT2)


def _thin_slice_variance(mid: float, half: float) -> float:
    """Variance of a standard normal restricted to [mid - half, mid + half].

    Works in offsets t from the slice midpoint, where the density is
    proportional to exp(-mid*t - t^2/2), so nothing cancels for thin slices.
    """
    t = half * _GL_NODES
    g = _GL_WEIGHTS * np.exp(-mid * t - 0.5 * t * t)
    m0 = g.sum()
    m1 = (g * t).sum() / m0
    m2 = (g * t * t).sum() / m0
    return float(m2 - m1 * m1)


def normal_mass(a: float, b: float) -> float:
    """P(a <= Z <= b) for a standard normal Z, without tail cancellation."""
    if a > b:
        a, b = b, a
    if a >= 0:
        return 0.5 * (math.erfc(a / _SQRT2) - math.erfc(b / _SQRT2))
    if b <= 0:
        return 0.5 * (math.erfc(-b / _SQRT2) - math.erfc(-a / _SQRT2))
    return 1.0 - 0.5 * (math.erfc(-a / _SQRT2) + math.erfc(b / _SQRT2))


@dataclass(frozen=True)
class Prediction:
    selected_variance: float
    success_rate: float
    narrow_limit_variance: float
    regression_slope: float

    def to_dict(self) -> dict:
        return {
            "selected_variance": self.selected_variance,
            "selected_db": to_db(self.selected_variance) if self.selected_variance > 0 else None,
            "success_rate": self.success_rate,
            "narrow_limit_variance": self.narrow_limit_variance,
            "regression_slope": self.regression_slope,
        }


def conditional_variance(cov: CovarianceMatrix) -> float:
    """Residual signal variance given the idler: v_s - cov^2 / v_i."""
    if cov.v_i <= 0:
        raise DegenerateConditioningError("cannot condition on an idler with zero variance")
    return max(cov.v_s - cov.cov * cov.cov / cov.v_i, 0.0)


def truncated_gaussian_variance(sigma: float, center: float, half_width: float) -> float:
    """Variance of N(0, sigma^2) restricted to [center - half_width, center + half_width]."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if not half_width > 0:
        raise DomainError(f"half_width must be positive, got {half_width}")
    if math.isinf(half_width):
        return sigma * sigma
    a = (center - half_width) / sigma
    b = (center + half_width) / sigma
    if a + b < 0:
        # mirror into the upper half so tail masses come from erfc
        a, b = -b, -a
    mass = normal_mass(a, b)
    if mass < MASS_FLOOR:
        raise UnderflowError(
            f"band [{center - half_width:g}, {center + half_width:g}] carries "
            f"probability {mass:.3g} < {MASS_FLOOR:g} at sigma={sigma:g}"
        )
    if b - a < _THIN_SLICE:
        ratio = _thin_slice_variance(0.5 * (a + b), 0.5 * (b - a))
    else:
        pa = normal_pdf(a)
        pb = normal_pdf(b) if math.isfinite(b) else 0.0
        bpb = b * pb if math.isfinite(b) else 0.0
        mean = (pa - pb) / mass
        ratio = 1.0 + (a * pa - bpb) / mass - mean * mean
    return sigma * sigma * min(max(ratio, 0.0), 1.0)


def predicted_selected_variance(cov: CovarianceMatrix, band: SelectionBand) -> float:
    resid = conditional_variance(cov)
    beta = cov.cov / cov.v_i
    spread = truncated_gaussian_variance(math.sqrt(cov.v_i), band.center, band.half_width)
    return beta * beta * spread + resid


def predicted_success_rate(sigma_idler: float, band: SelectionBand) -> float:
    if not sigma_idler > 0:
        raise DomainError(f"sigma_idler must be positive, got {sigma_idler}")
    a = (band.center - band.half_width) / sigma_idler
    b = (band.center + band.half_width) / sigma_idler
    return min(max(normal_mass(a, b), 0.0), 1.0)


def predict(cov: CovarianceMatrix, band: SelectionBand) -> Prediction:
    return Prediction(
        selected_variance=predicted_selected_variance(cov, band),
        success_rate=predicted_success_rate(math.sqrt(cov.v_i), band),
        narrow_limit_variance=conditional_variance(cov),
        regression_slope=cov.cov / cov.v_i,
    )


def narrow_limit_variance(gemellity: float, excess: float) -> float:
    """Conditional variance G(2V - G)/V of the symmetric twin-beam model."""
    if gemellity < 0:
        raise DomainError(f"gemellity must be >= 0, got {gemellity}")
    if excess < gemellity or excess <= 0:
        raise DomainError(f"excess noise {excess} below gemellity {gemellity} is unphysical")
    return 2.0 * gemellity - gemellity * gemellity / excess


def narrow_limit_db(gemellity_db: float, excess: float) -> float:
    """Narrow-band conditioned noise in dB; tends to gemellity_db + 3.01 dB for large excess."""
    return to_db(narrow_limit_variance(from_db(gemellity_db), excess))
