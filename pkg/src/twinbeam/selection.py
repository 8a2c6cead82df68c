"""Conditional post-selection of the signal on the simultaneous idler value."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, InsufficientSelectionError, InvalidPartitionError
from .stats import NoiseLevel, Trace, fano, variance, variance_interval, variance_standard_error


@dataclass(frozen=True)
class SelectionBand:
    """Closed idler acceptance window [center - half_width, center + half_width]."""

    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width >= 0:
            raise DomainError(f"half_width must be >= 0, got {self.half_width}")
        if not math.isfinite(self.center):
            raise DomainError(f"band center must be finite, got {self.center}")

    @classmethod
    def from_width(cls, center: float, width: float, convention: str = "half") -> "SelectionBand":
        """Build a band from a width quoted under the ``half`` or ``full`` convention."""
        if convention == "half":
            return cls(center, width)
        if convention == "full":
            return cls(center, width / 2.0)
        raise DomainError(f"unknown width convention {convention!r}")

    @property
    def low(self) -> float:
        return self.center - self.half_width

    @property
    def high(self) -> float:
        return self.center + self.half_width

    def mask(self, idler: np.ndarray) -> np.ndarray:
        return (idler >= self.low) & (idler <= self.high)

    def to_dict(self) -> dict:
        return {"center": self.center, "half_width": self.half_width}


@dataclass(frozen=True, eq=False)
class ConditionalResult:
    selected_signal: np.ndarray
    indices: np.ndarray
    trace_length: int
    shot_variance: float
    noise: NoiseLevel
    variance: float

    @property
    def accepted_count(self) -> int:
        return int(self.indices.size)

    @property
    def success_rate(self) -> float:
        return self.indices.size / self.trace_length

    @property
    def standard_error(self) -> float:
        """Standard error of ``noise.linear`` under a Gaussian sample."""
        return variance_standard_error(self.variance, self.accepted_count) / self.shot_variance

    def interval(self, confidence: float = 0.95) -> tuple[float, float]:
        lo, hi = variance_interval(self.variance, self.accepted_count, confidence)
        return lo / self.shot_variance, hi / self.shot_variance


def _result(trace: Trace, idx: np.ndarray, shot_variance: float, dark_variance: float) -> ConditionalResult:
    n = trace.length
    if idx.size < 2:
        raise InsufficientSelectionError(
            f"only {idx.size} of {n} samples accepted; widen the band",
            success_rate=idx.size / n,
            accepted_count=int(idx.size),
            indices=idx,
        )
    selected = trace.signal[idx]
    return ConditionalResult(
        selected_signal=selected,
        indices=idx,
        trace_length=n,
        shot_variance=shot_variance,
        noise=fano(selected, shot_variance, dark_variance),
        variance=variance(selected),
    )


def select(
    trace: Trace,
    band: SelectionBand,
    shot_variance: float = 1.0,
    dark_variance: float = 0.0,
) -> ConditionalResult:
    """Keep signal samples whose simultaneous idler sample lies inside ``band``.

    The shot reference is passed through untouched: discarded intervals carry
    no beam, so they do not change the shot-noise level of what is kept.
    """
    if trace.length == 0:
        raise InsufficientDataError("cannot select from an empty trace")
    idx = np.flatnonzero(band.mask(trace.idler))
    return _result(trace, idx, shot_variance, dark_variance)


def check_disjoint(bands) -> None:
    order = sorted(range(len(bands)), key=lambda k: bands[k].low)
    for prev, cur in zip(order, order[1:]):
        if bands[cur].low <= bands[prev].high:
            raise InvalidPartitionError(f"bands {prev} and {cur} overlap")


def multi_select(
    trace: Trace,
    bands: list[SelectionBand],
    shot_variance: float = 1.0,
    dark_variance: float = 0.0,
    strict: bool = True,
) -> list[ConditionalResult | InsufficientSelectionError]:
    """Select independently in each of several disjoint bands.

    With ``strict=False`` a band with too few samples yields its
    :class:`InsufficientSelectionError` in place of a result.
    """
    if trace.length == 0:
        raise InsufficientDataError("cannot select from an empty trace")
    check_disjoint(bands)
    out = []
    for band in bands:
        try:
            out.append(select(trace, band, shot_variance, dark_variance))
        except InsufficientSelectionError as err:
            if strict:
                raise
            out.append(err)
    return out


def partition(low: float, high: float, count: int) -> list[SelectionBand]:
    """Contiguous bands tiling [low, high].

    Adjacent closed intervals would share an edge, so each band starts just
    above the previous band's (recomputed) upper edge.
    """
    if count < 1 or not high > low:
        raise DomainError("partition needs count >= 1 and high > low")
    edges = [float(e) for e in np.linspace(low, high, count + 1)]
    bands = [SelectionBand(0.5 * (edges[0] + edges[1]), 0.5 * (edges[1] - edges[0]))]
    for hi in edges[2:]:
        prev_high = bands[-1].high
        step = abs(float(np.spacing(prev_high)))
        while True:
            lo = prev_high + step
            band = SelectionBand(0.5 * (lo + hi), 0.5 * (hi - lo))
            if band.low > prev_high:
                break
            step *= 2.0
        bands.append(band)
    return bands


def sweep_bandwidth(
    trace: Trace,
    center: float,
    half_widths,
    shot_variance: float = 1.0,
    dark_variance: float = 0.0,
) -> list[tuple[float, ConditionalResult | InsufficientSelectionError]]:
    """Select with nested bands of growing half-width around one center.

    Points with too few accepted samples are recorded as errors, not raised.
    """
    widths = [float(w) for w in half_widths]
    if any(not w > 0 for w in widths):
        raise DomainError("half-widths must be positive")
    if any(b < a for a, b in zip(widths, widths[1:])):
        raise DomainError("half-widths must be sorted ascending")
    out = []
    for w in widths:
        try:
            out.append((w, select(trace, SelectionBand(center, w), shot_variance, dark_variance)))
        except InsufficientSelectionError as err:
            out.append((w, err))
    return out
