import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from twinbeam.errors import DomainError, InsufficientDataError, ShapeError
from twinbeam.source import CovarianceMatrix, sample_trace, shot_calibration_trace
from twinbeam.stats import NoiseLevel, Trace, fano, from_db, gemellity, histogram, to_db, variance


class TestDecibels:
    def test_shot_reference_is_zero_db(self):
        assert to_db(1.0) == 0.0

    def test_half_is_minus_3db(self):
        assert to_db(0.5) == pytest.approx(-3.0103, abs=1e-4)

    def test_reference_gemellity(self):
        assert to_db(0.178) == pytest.approx(-7.50, abs=0.005)

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
    def test_non_positive_rejected(self, bad):
        with pytest.raises(DomainError):
            to_db(bad)

    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_round_trip(self, x):
        assert from_db(to_db(x)) == pytest.approx(x, rel=1e-12)


class TestNoiseLevel:
    def test_db_matches_linear(self):
        level = NoiseLevel(0.5)
        assert level.db == pytest.approx(-3.0103, abs=1e-4)
        assert NoiseLevel.from_db(0.0).linear == 1.0

    def test_zero_is_below_floor(self):
        level = NoiseLevel(0.0)
        assert level.below_floor
        assert level.db is None
        assert level.to_dict() == {"linear": 0.0, "db": "below_floor"}

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            NoiseLevel(-0.1)


class TestVariance:
    def test_constant(self):
        assert variance([3, 3, 3, 3]) == 0.0

    def test_two_points_unbiased(self):
        assert variance([-1, 1]) == 2.0

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            variance([1.0])

    def test_unit_gaussian(self):
        x = np.random.default_rng(0).standard_normal(200_000)
        assert variance(x) == pytest.approx(1.0, abs=0.01)

    def test_large_offset_is_stable(self):
        # a naive sum-of-squares formula loses everything here
        x = 1e9 + np.random.default_rng(1).standard_normal(200_000)
        assert variance(x) == pytest.approx(1.0, abs=0.01)

    @given(st.floats(min_value=-1e3, max_value=1e3).filter(lambda c: abs(c) > 1e-3))
    @settings(max_examples=30)
    def test_scale_law(self, c):
        x = np.random.default_rng(2).standard_normal(1000)
        assert variance(c * x) == pytest.approx(c * c * variance(x), rel=1e-12)


class TestFano:
    def test_shot_trace_is_zero_db(self):
        x = shot_calibration_trace(200_000, seed=5)
        assert abs(fano(x, 1.0).db) < 0.05

    def test_self_calibration(self):
        x = shot_calibration_trace(200_000, seed=6)
        assert fano(x, variance(x)).db == pytest.approx(0.0, abs=1e-12)

    def test_excess_noise_20db(self):
        x = np.sqrt(100.0) * np.random.default_rng(7).standard_normal(200_000)
        assert fano(x, 1.0).linear == pytest.approx(100.0, rel=0.01)

    def test_zero_variance_below_floor(self):
        assert fano(np.zeros(10), 1.0).below_floor

    def test_bad_shot_variance(self):
        with pytest.raises(DomainError):
            fano([1.0, 2.0], 0.0)

    def test_dark_subtraction(self):
        # both record and reference carry the same dark floor
        assert fano([-1.0, 1.0], shot_variance=1.25, dark_variance=0.25).linear == pytest.approx(1.75)


class TestGemellity:
    def test_perfect_twins(self):
        x = np.random.default_rng(0).standard_normal(100)
        assert gemellity(x, x).linear == 0.0

    def test_independent_coherent_beams(self):
        rng = np.random.default_rng(1)
        g = gemellity(rng.standard_normal(200_000), rng.standard_normal(200_000))
        assert g.linear == pytest.approx(1.0, rel=0.02)

    def test_reference_model(self, reference_trace):
        g = gemellity(reference_trace.signal, reference_trace.idler)
        assert g.linear == pytest.approx(0.178, rel=0.03)

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        s, i = rng.standard_normal(500), rng.standard_normal(500)
        assert gemellity(s, i).linear == gemellity(i, s).linear

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            gemellity([1.0, 2.0, 3.0], [1.0, 2.0])


class TestHistogram:
    def test_single_bin(self):
        assert histogram([0, 0, 0, 0], 1.0) == [(0.0, 1.0)]

    def test_symmetric_pair(self):
        h = histogram([-1, 1], 1.0)
        occupied = [(c, p) for c, p in h if p > 0]
        assert occupied == [(-1.0, 0.5), (1.0, 0.5)]
        assert [c for c, _ in h] == [-1.0, 0.0, 1.0]

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            histogram([], 1.0)

    def test_bad_width(self):
        with pytest.raises(DomainError):
            histogram([1.0], 0.0)

    def test_gaussian_density(self):
        n, sigma, w = 200_000, 10.0, 0.5
        x = sigma * np.random.default_rng(11).standard_normal(n)
        h = histogram(x, w)
        assert sum(p for _, p in h) == pytest.approx(1.0, abs=1e-9)
        z, chi2 = [], 0.0
        for center, p in h:
            expected = sps.norm.cdf(center + w / 2, scale=sigma) - sps.norm.cdf(center - w / 2, scale=sigma)
            if expected * n < 10:
                continue  # counting error is not Gaussian this far in the tails
            z.append((p - expected) / math.sqrt(expected * (1 - expected) / n))
            chi2 += n * (p - expected) ** 2 / expected
        z = np.abs(z)
        assert len(z) > 100
        # ~140 bins: a few 3-sigma excursions are expected by chance, a 4.5-sigma one is not
        assert np.count_nonzero(z > 3) <= 2
        assert z.max() < 4.5
        assert sps.chi2.sf(chi2, len(z)) > 0.001


class TestTrace:
    def test_lengths_must_match(self):
        with pytest.raises(ShapeError):
            Trace([1.0, 2.0], [1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            Trace([1.0, float("nan")], [1.0, 2.0])

    def test_read_only(self):
        t = Trace([1.0, 2.0], [3.0, 4.0])
        with pytest.raises(ValueError):
            t.signal[0] = 5.0


def test_estimators_converge_to_covariance():
    cov = CovarianceMatrix(4.0, 9.0, 3.0)
    t = sample_trace(cov, 200_000, seed=21)
    assert variance(t.signal) == pytest.approx(4.0, rel=0.03)
    assert variance(t.idler) == pytest.approx(9.0, rel=0.03)
    assert gemellity(t.signal, t.idler).linear == pytest.approx(cov.gemellity, rel=0.03)
