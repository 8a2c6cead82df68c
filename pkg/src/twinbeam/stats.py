"""Unit conventions and estimators for shot-noise-normalized fluctuation traces.

All samples are mean-subtracted intensity fluctuations in units where the
shot noise of one beam has variance 1.  Noise figures are reported as
:class:`NoiseLevel`, a linear variance ratio paired with its decibel value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats as _sps

from .errors import DomainError, InsufficientDataError, ShapeError

BELOW_FLOOR = "below_floor"


def to_db(linear: float) -> float:
    if not linear > 0:
        raise DomainError(f"dB conversion needs a positive ratio, got {linear!r}")
    return 10.0 * math.log10(linear)


def from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class NoiseLevel:
    """A variance ratio relative to shot noise.

    A zero ratio (perfectly quiet record) is kept as a distinguished
    below-floor level: ``db`` is ``None`` and serialization emits
    ``"below_floor"`` instead of -inf.
    """

    linear: float

    def __post_init__(self):
        if not (self.linear >= 0 and math.isfinite(self.linear)):
            raise DomainError(f"noise level must be finite and >= 0, got {self.linear!r}")

    @classmethod
    def from_db(cls, db: float) -> "NoiseLevel":
        return cls(from_db(db))

    @property
    def below_floor(self) -> bool:
        return self.linear == 0.0

    @property
    def db(self) -> float | None:
        return None if self.below_floor else to_db(self.linear)

    def to_dict(self) -> dict[str, Any]:
        return {"linear": self.linear, "db": BELOW_FLOOR if self.below_floor else self.db}

    def __str__(self) -> str:
        if self.below_floor:
            return "below floor"
        return f"{self.linear:.6g} ({self.db:+.3f} dB)"


@dataclass(frozen=True)
class TraceMeta:
    sample_rate_hz: float = 200e3
    demod_frequency_hz: float = 3.5e6
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class Trace:
    """Paired (signal, idler) fluctuation samples.

    Arrays are copied to read-only float64 on construction, so a Trace can be
    shared freely between threads.
    """

    signal: np.ndarray
    idler: np.ndarray
    meta: TraceMeta = field(default_factory=TraceMeta)

    def __post_init__(self):
        s = np.array(self.signal, dtype=np.float64, copy=True).reshape(-1)
        i = np.array(self.idler, dtype=np.float64, copy=True).reshape(-1)
        if s.shape != i.shape:
            raise ShapeError(f"signal has {s.size} samples but idler has {i.size}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(i))):
            raise DomainError("trace samples must be finite")
        s.flags.writeable = False
        i.flags.writeable = False
        object.__setattr__(self, "signal", s)
        object.__setattr__(self, "idler", i)

    def __len__(self) -> int:
        return self.signal.size

    @property
    def length(self) -> int:
        return self.signal.size

    def with_samples(self, signal, idler) -> "Trace":
        return Trace(signal, idler, self.meta)


def _as_samples(samples) -> np.ndarray:
    return np.asarray(samples, dtype=np.float64).reshape(-1)


def variance(samples) -> float:
    """Unbiased (n-1) sample variance, computed in two passes."""
    x = _as_samples(samples)
    if x.size < 2:
        raise InsufficientDataError(f"variance needs at least 2 samples, got {x.size}")
    # numpy subtracts the mean first and uses pairwise summation
    return float(np.var(x, ddof=1))


def variance_standard_error(var: float, count: int) -> float:
    """Standard error of the unbiased variance of ``count`` Gaussian samples."""
    if count < 2:
        raise InsufficientDataError("standard error needs at least 2 samples")
    return var * math.sqrt(2.0 / (count - 1))


def variance_interval(var: float, count: int, confidence: float = 0.95) -> tuple[float, float]:
    """Chi-square confidence interval for a Gaussian variance."""
    if count < 2:
        raise InsufficientDataError("confidence interval needs at least 2 samples")
    dof = count - 1
    alpha = 1.0 - confidence
    lo = dof * var / _sps.chi2.ppf(1.0 - alpha / 2, dof)
    hi = dof * var / _sps.chi2.ppf(alpha / 2, dof)
    return float(lo), float(hi)


def fano(samples, shot_variance: float = 1.0, dark_variance: float = 0.0) -> NoiseLevel:
    """Variance of ``samples`` normalized to the shot-noise variance.

    With ``dark_variance`` > 0 the detector dark floor is removed from both the
    measurement and the shot reference, which share the same detectors.
    Default is raw values.
    """
    if not shot_variance > 0:
        raise DomainError(f"shot variance must be positive, got {shot_variance!r}")
    if dark_variance < 0:
        raise DomainError(f"dark variance must be >= 0, got {dark_variance!r}")
    if dark_variance >= shot_variance:
        raise DomainError("dark variance must be below the shot variance")
    v = variance(samples)
    ratio = (v - dark_variance) / (shot_variance - dark_variance)
    return NoiseLevel(max(ratio, 0.0))


def gemellity(signal, idler, dark_variance: float = 0.0) -> NoiseLevel:
    """Intensity-difference noise normalized to the difference shot noise (2)."""
    s = _as_samples(signal)
    i = _as_samples(idler)
    if s.shape != i.shape:
        raise ShapeError(f"signal has {s.size} samples but idler has {i.size}")
    if dark_variance < 0:
        raise DomainError(f"dark variance must be >= 0, got {dark_variance!r}")
    v = variance(s - i) - 2.0 * dark_variance
    return NoiseLevel(max(v / 2.0, 0.0))


def histogram(samples, bin_width: float) -> list[tuple[float, float]]:
    """Normalized histogram on the grid of bin centers ``k * bin_width``.

    Every bin between the lowest and highest occupied one is returned,
    empty ones included, so the output is plot-ready.
    """
    if not bin_width > 0:
        raise DomainError(f"bin width must be positive, got {bin_width!r}")
    x = _as_samples(samples)
    if x.size == 0:
        raise InsufficientDataError("histogram of an empty sample")
    k = np.floor(x / bin_width + 0.5).astype(np.int64)
    lo = int(k.min())
    counts = np.bincount(k - lo)
    probs = counts / x.size
    return [((lo + j) * bin_width, float(p)) for j, p in enumerate(probs)]
