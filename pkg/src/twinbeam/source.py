"""Bivariate Gaussian model of twin-beam intensity fluctuations.

The pipeline is build_covariance -> apply_loss -> sample_trace ->
add_dark_noise -> quantize.  Every random step takes an explicit seed; there
is no module-level random state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnphysicalModelError
from .stats import Trace, TraceMeta

# relative slack on the PSD bound, so boundary models (cov^2 == v_s*v_i) survive rounding
_PSD_RTOL = 1e-12


@dataclass(frozen=True)
class CovarianceMatrix:
    v_s: float
    v_i: float
    cov: float

    def __post_init__(self):
        if self.v_s < 0 or self.v_i < 0:
            raise UnphysicalModelError(
                f"variances must be >= 0 (v_s={self.v_s}, v_i={self.v_i})"
            )
        bound = math.sqrt(self.v_s * self.v_i)
        if abs(self.cov) > bound * (1 + _PSD_RTOL) + 1e-300:
            raise UnphysicalModelError(
                f"|cov| = {abs(self.cov):.12g} exceeds sqrt(v_s*v_i) = {bound:.12g}"
            )

    @property
    def gemellity(self) -> float:
        """Var(s - i) / 2 implied by the matrix."""
        return (self.v_s + self.v_i) / 2.0 - self.cov

    @property
    def correlation(self) -> float:
        return self.cov / math.sqrt(self.v_s * self.v_i)

    def as_array(self) -> np.ndarray:
        return np.array([[self.v_s, self.cov], [self.cov, self.v_i]])

    def to_dict(self) -> dict:
        return {"v_s": self.v_s, "v_i": self.v_i, "cov": self.cov}


@dataclass(frozen=True)
class TwinBeamModel:
    """Physical parameters of the twin-beam source, in shot-noise units.

    ``excess_signal``/``excess_idler`` are per-beam Fano factors and
    ``gemellity`` is the normalized intensity-difference noise before losses.
    """

    excess_signal: float = 100.0
    excess_idler: float = 100.0
    gemellity: float = 0.178
    loss_signal: float = 0.0
    loss_idler: float = 0.0
    dark_variance: float = 0.0
    mean_power: float = 1.0

    def __post_init__(self):
        if self.excess_signal < 0 or self.excess_idler < 0:
            raise DomainError("excess noise must be >= 0")
        if self.gemellity < 0:
            raise DomainError(f"gemellity must be >= 0, got {self.gemellity}")
        for name in ("loss_signal", "loss_idler"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
        if self.dark_variance < 0:
            raise DomainError(f"dark_variance must be >= 0, got {self.dark_variance}")
        if not self.mean_power > 0:
            raise DomainError("mean_power must be positive")
        build_covariance(self)

    def covariance(self) -> CovarianceMatrix:
        """Covariance after the configured losses."""
        return apply_loss(build_covariance(self), self.loss_signal, self.loss_idler)


def reference_model(**overrides) -> TwinBeamModel:
    """Operating point of the reference experiment: 20 dB excess noise, -7.5 dB gemellity."""
    return TwinBeamModel(**overrides)


def build_covariance(model: TwinBeamModel) -> CovarianceMatrix:
    vs, vi, g = model.excess_signal, model.excess_idler, model.gemellity
    cov = (vs + vi) / 2.0 - g
    bound = math.sqrt(vs * vi)
    if abs(cov) > bound * (1 + _PSD_RTOL):
        side = "below" if cov > 0 else "above"
        limit = (vs + vi) / 2.0 - (bound if cov > 0 else -bound)
        raise UnphysicalModelError(
            f"gemellity {g} is {side} the physical limit {limit:.6g} for "
            f"V_s={vs}, V_i={vi} (|cov|={abs(cov):.6g} > sqrt(V_s*V_i)={bound:.6g})"
        )
    cov = math.copysign(min(abs(cov), bound), cov)
    return CovarianceMatrix(vs, vi, cov)


def apply_loss(cov: CovarianceMatrix, loss_signal: float, loss_idler: float) -> CovarianceMatrix:
    """Beamsplitter loss: each channel mixes in vacuum, keeping shot level at 1."""
    for name, value in (("loss_signal", loss_signal), ("loss_idler", loss_idler)):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {value}")
    ts, ti = 1.0 - loss_signal, 1.0 - loss_idler
    return CovarianceMatrix(
        v_s=ts * cov.v_s + loss_signal,
        v_i=ti * cov.v_i + loss_idler,
        cov=math.sqrt(ts * ti) * cov.cov,
    )


def _cholesky2(cov: CovarianceMatrix) -> tuple[float, float, float]:
    # closed-form lower factor; tolerates singular (boundary) matrices
    l00 = math.sqrt(cov.v_s)
    if l00 > 0:
        l10 = cov.cov / l00
        l11 = math.sqrt(max(cov.v_i - l10 * l10, 0.0))
    else:
        l10, l11 = 0.0, math.sqrt(cov.v_i)
    return l00, l10, l11


def sample_trace(
    cov: CovarianceMatrix,
    n: int,
    seed: int,
    sample_rate_hz: float = 200e3,
    demod_frequency_hz: float = 3.5e6,
) -> Trace:
    """Draw ``n`` zero-mean (signal, idler) pairs with covariance ``cov``."""
    if n < 0:
        raise DomainError(f"sample count must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, n))
    l00, l10, l11 = _cholesky2(cov)
    signal = l00 * z[0]
    idler = l10 * z[0] + l11 * z[1]
    meta = TraceMeta(sample_rate_hz=sample_rate_hz, demod_frequency_hz=demod_frequency_hz, seed=seed)
    return Trace(signal, idler, meta)


def add_dark_noise(
    trace: Trace,
    dark_variance: float,
    seed: int,
    channels: tuple[str, ...] = ("signal", "idler"),
) -> Trace:
    """Add independent Gaussian detector noise to the chosen channels."""
    if dark_variance < 0:
        raise DomainError(f"dark variance must be >= 0, got {dark_variance}")
    unknown = set(channels) - {"signal", "idler"}
    if unknown:
        raise DomainError(f"unknown channel(s): {sorted(unknown)}")
    if dark_variance == 0:
        return trace
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, trace.length)) * math.sqrt(dark_variance)
    signal = trace.signal + z[0] if "signal" in channels else trace.signal
    idler = trace.idler + z[1] if "idler" in channels else trace.idler
    return trace.with_samples(signal, idler)


def quantize_samples(x: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    """Mid-rise uniform quantizer with saturation on [-full_scale, +full_scale]."""
    if bits < 1:
        raise DomainError(f"bits must be >= 1, got {bits}")
    if not full_scale > 0:
        raise DomainError(f"full scale must be positive, got {full_scale}")
    levels = 2**bits
    step = 2.0 * full_scale / levels
    clipped = np.clip(x, -full_scale, full_scale)
    code = np.clip(np.floor(clipped / step), -(levels // 2), levels // 2 - 1)
    return (code + 0.5) * step


def quantize(trace: Trace, bits: int, full_scale: float) -> Trace:
    return trace.with_samples(
        quantize_samples(trace.signal, bits, full_scale),
        quantize_samples(trace.idler, bits, full_scale),
    )


def default_full_scale(cov: CovarianceMatrix, headroom: float = 4.0) -> float:
    """ADC range of ``headroom`` standard deviations of the louder channel."""
    return headroom * math.sqrt(max(cov.v_s, cov.v_i))


def shot_calibration_trace(n: int, seed: int) -> np.ndarray:
    """Unit-variance reference standing in for the balanced-splitter shot measurement."""
    if n < 2:
        raise DomainError(f"calibration needs at least 2 samples, got {n}")
    return np.random.default_rng(seed).standard_normal(n)
