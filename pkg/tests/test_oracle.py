import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadrature import truncated_variance_by_quadrature
from twinbeam.errors import DegenerateConditioningError, DomainError, UnderflowError
from twinbeam.oracle import (
    conditional_variance,
    narrow_limit_db,
    normal_cdf,
    normal_mass,
    predict,
    predicted_selected_variance,
    predicted_success_rate,
    truncated_gaussian_variance,
)
from twinbeam.selection import SelectionBand, select
from twinbeam.source import CovarianceMatrix, sample_trace
from twinbeam.stats import to_db

REFERENCE = CovarianceMatrix(100.0, 100.0, 99.822)

# frozen from truncated_variance_by_quadrature
TRUNC_UNIT_SIGMA = 0.29112509477279325
PRED_HW_01 = 0.35900459294183173
PRED_HW_10 = 0.6873882301974055


class TestConditionalVariance:
    def test_uncorrelated(self):
        assert conditional_variance(CovarianceMatrix(3.0, 7.0, 0.0)) == 3.0

    def test_reference_point(self):
        v = conditional_variance(REFERENCE)
        assert v == pytest.approx(0.3556831600, rel=1e-9)
        assert to_db(v) == pytest.approx(-4.49, abs=0.005)

    def test_perfect_correlation(self):
        assert conditional_variance(CovarianceMatrix(4.0, 9.0, 6.0)) == 0.0

    def test_degenerate_idler(self):
        with pytest.raises(DegenerateConditioningError):
            conditional_variance(CovarianceMatrix(1.0, 0.0, 0.0))


class TestNormalCdf:
    def test_symmetry_and_center(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_cdf(1.3) + normal_cdf(-1.3) == pytest.approx(1.0, abs=1e-15)

    def test_far_tail_keeps_precision(self):
        # P(Z < -20) = 2.7536241186062336e-89
        assert normal_cdf(-20.0) == pytest.approx(2.7536241186062336e-89, rel=1e-13)

    def test_mass_without_cancellation(self):
        assert normal_mass(30.0, 31.0) > 0
        assert normal_mass(-31.0, -30.0) == normal_mass(30.0, 31.0)


class TestTruncatedVariance:
    def test_no_truncation(self):
        assert truncated_gaussian_variance(3.0, 0.0, math.inf) == 9.0
        assert truncated_gaussian_variance(3.0, 0.0, 60.0) == pytest.approx(9.0, rel=1e-9)

    def test_uniform_slice_limit(self):
        assert truncated_gaussian_variance(10.0, 0.0, 0.01) == pytest.approx(0.01**2 / 3, rel=0.01)
        assert truncated_variance_by_quadrature(10.0, 0.0, 0.01) == pytest.approx(0.01**2 / 3, rel=0.01)

    def test_one_sigma_band(self):
        assert truncated_gaussian_variance(1.0, 0.0, 1.0) == pytest.approx(TRUNC_UNIT_SIGMA, rel=1e-12)
        assert truncated_gaussian_variance(10.0, 0.0, 10.0) == pytest.approx(100 * TRUNC_UNIT_SIGMA, rel=1e-12)

    def test_underflow(self):
        with pytest.raises(UnderflowError):
            truncated_gaussian_variance(1.0, 60.0, 1.0)

    def test_invalid(self):
        with pytest.raises(DomainError):
            truncated_gaussian_variance(0.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            truncated_gaussian_variance(1.0, 0.0, 0.0)

    @pytest.mark.parametrize("center", np.linspace(-3.0, 3.0, 7))
    @pytest.mark.parametrize("half_width", [0.001, 0.02, 0.3, 1.0, 2.5])
    def test_matches_quadrature(self, center, half_width):
        got = truncated_gaussian_variance(1.0, center, half_width)
        assert got == pytest.approx(truncated_variance_by_quadrature(1.0, center, half_width), rel=1e-6)

    @pytest.mark.parametrize("center,half_width", [(-8.0, 0.5), (12.0, 0.05), (25.0, 3.0)])
    def test_tail_bands_match_quadrature(self, center, half_width):
        got = truncated_gaussian_variance(1.0, center, half_width)
        assert got == pytest.approx(truncated_variance_by_quadrature(1.0, center, half_width), rel=1e-6)

    @given(st.floats(0.1, 10), st.floats(-20, 20), st.floats(1e-3, 50))
    @settings(max_examples=200)
    def test_never_exceeds_full_variance(self, sigma, center, half_width):
        try:
            v = truncated_gaussian_variance(sigma, center, half_width)
        except UnderflowError:
            return
        assert 0 <= v <= sigma * sigma


class TestPredictedSelectedVariance:
    def test_full_band_recovers_signal_variance(self):
        assert predicted_selected_variance(REFERENCE, SelectionBand(0.0, math.inf)) == pytest.approx(100.0, rel=1e-6)

    def test_narrow_band(self):
        v = predicted_selected_variance(REFERENCE, SelectionBand(0.0, 0.1))
        assert v == pytest.approx(PRED_HW_01, rel=1e-9)
        assert to_db(v) == pytest.approx(-4.45, abs=0.005)

    def test_wide_band(self):
        v = predicted_selected_variance(REFERENCE, SelectionBand(0.0, 1.0))
        assert v == pytest.approx(PRED_HW_10, rel=1e-9)
        assert to_db(v) == pytest.approx(-1.63, abs=0.01)

    def test_monotone_in_width(self):
        widths = np.geomspace(1e-3, 100, 200)
        values = [predicted_selected_variance(REFERENCE, SelectionBand(0.0, w)) for w in widths]
        assert all(b >= a for a, b in zip(values, values[1:]))

    @given(
        st.floats(0.1, 100),
        st.floats(0.1, 100),
        st.floats(-1, 1),
    )
    def test_decomposition_identity(self, vs, vi, rho):
        cov = CovarianceMatrix(vs, vi, rho * math.sqrt(vs * vi) * (1 - 1e-12))
        full = predicted_selected_variance(cov, SelectionBand(0.0, 80 * math.sqrt(vi)))
        assert full == pytest.approx(vs, rel=1e-6)

    def test_prediction_bundle(self):
        p = predict(REFERENCE, SelectionBand(0.0, 0.1))
        assert p.selected_variance >= p.narrow_limit_variance
        assert 0 <= p.success_rate <= 1
        assert p.regression_slope == pytest.approx(0.99822)


class TestSuccessRate:
    def test_wide_band(self):
        assert predicted_success_rate(1.0, SelectionBand(0.0, 8.0)) == pytest.approx(1.0, abs=1e-9)

    def test_reference_band(self):
        assert predicted_success_rate(10.0, SelectionBand(0.0, 0.1)) == pytest.approx(0.00798, abs=5e-6)

    def test_density_ratio_off_center(self):
        centered = predicted_success_rate(10.0, SelectionBand(0.0, 0.01))
        shifted = predicted_success_rate(10.0, SelectionBand(20.0, 0.01))
        assert shifted / centered == pytest.approx(math.exp(-2), rel=1e-4)

    def test_invalid_sigma(self):
        with pytest.raises(DomainError):
            predicted_success_rate(0.0, SelectionBand(0.0, 1.0))


class TestNarrowLimit:
    def test_reference_point(self):
        assert narrow_limit_db(-7.5, 100) == pytest.approx(-4.49, abs=0.005)

    def test_classical_boundary(self):
        assert narrow_limit_db(to_db(0.5), 1e12) == pytest.approx(0.0, abs=1e-9)

    def test_uncorrelated_coherent(self):
        assert narrow_limit_db(0.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_unphysical(self):
        with pytest.raises(DomainError):
            narrow_limit_db(3.0, 1.0)

    @given(st.floats(-20, to_db(0.5)), st.floats(1000, 1e9))
    def test_gemellity_plus_3db(self, g_db, excess):
        assert abs(narrow_limit_db(g_db, excess) - (g_db + 10 * math.log10(2))) < 0.05

    def test_agrees_with_general_formula(self):
        from twinbeam.source import TwinBeamModel

        for g_db in (-9, -6, -3, -1):
            cov = TwinBeamModel(40, 40, 10 ** (g_db / 10)).covariance()
            assert narrow_limit_db(g_db, 40) == pytest.approx(to_db(conditional_variance(cov)), abs=1e-9)


def test_oracle_matches_monte_carlo(reference_trace):
    """Every band with >= 500 expected accepts sits within 3 standard errors of the oracle."""
    sigma_i = math.sqrt(REFERENCE.v_i)
    for center in (0.0, 5.0, -12.0):
        for half_width in (0.3, 0.5, 1.0, 2.0):
            band = SelectionBand(center, half_width)
            expected_count = predicted_success_rate(sigma_i, band) * reference_trace.length
            if expected_count < 500:
                continue
            res = select(reference_trace, band)
            pred = predicted_selected_variance(REFERENCE, band)
            se = pred * math.sqrt(2 / (res.accepted_count - 1))
            assert abs(res.variance - pred) <= 3 * se, (center, half_width)
