import math

import numpy as np
import pytest

from modules.analytic_utils import (
    HomDipParams,
    bell_from_visibility,
    coherence_time,
    filter_transmits,
    first_dip_zero,
    franson_amplitude_weights,
    franson_peak_weights,
    hom_dip_jacobian,
    hom_dip_rate,
    incident_rate,
    pair_rate_at_power,
    predict_car,
    timescale_check,
    tuning_split,
    visibility_bound,
    window_capture_fraction,
)
from modules.errors import DomainError
from modules.model_params import FacetParams, FilterParams, TimescaleParams


def test_visibility_bound_of_reference_facets():
    assert visibility_bound(FacetParams(reflectivity=0.24, eta_te=0.6925, eta_tm=0.6925)) == pytest.approx(0.905, abs=1e-3)
    assert visibility_bound(FacetParams(reflectivity=0.0)) == 1.0
    assert visibility_bound(FacetParams(reflectivity=0.24, eta_te=1.0, eta_tm=1.0)) == pytest.approx(0.8684, abs=1e-4)
    with pytest.raises(DomainError):
        visibility_bound(FacetParams(reflectivity=1.0))


def test_bell_arithmetic():
    net = bell_from_visibility(0.956, 0.037)
    assert net.s_value == pytest.approx(2.704, abs=5e-3)
    assert net.sigma_s == pytest.approx(0.105, abs=2e-3)
    assert net.violation_sigmas == pytest.approx(6.7, abs=0.1)
    raw = bell_from_visibility(0.915, 0.036)
    assert raw.s_value == pytest.approx(2.588, abs=5e-3)
    assert raw.violation_sigmas == pytest.approx(5.8, abs=0.1)


def test_bell_limits():
    assert bell_from_visibility(1 / math.sqrt(2), 0.01).s_value == pytest.approx(2.0)
    result = bell_from_visibility(0.9, 0.0)
    assert not result.violation_defined
    assert math.isnan(result.violation_sigmas)
    assert result.violates


def test_coherence_time():
    assert 0.6 <= coherence_time(1566.0, 10.8) <= 0.85
    assert coherence_time(1566.0, 10.8) == pytest.approx(0.757, abs=1e-3)
    assert coherence_time(1566.0, 21.6) == pytest.approx(0.379, abs=1e-3)
    assert coherence_time(783.0, 10.8) == pytest.approx(0.189, abs=1e-3)
    with pytest.raises(DomainError):
        coherence_time(1566.0, 0.0)


def test_hom_dip_first_zero():
    params = HomDipParams(amplitude=1.0, visibility=1.0, center_wavelength=1566.0, fwhm=10.7)
    zero = first_dip_zero(1566.0, 10.7)
    assert zero == pytest.approx(0.382, abs=1e-3)
    assert hom_dip_rate(zero, params) == pytest.approx(1.0, abs=1e-12)
    assert hom_dip_rate(0.0, params) == pytest.approx(0.0, abs=1e-15)
    # sinc never exceeds its first side lobe height, about 1.217 of the baseline
    rates = hom_dip_rate(np.linspace(-5, 5, 1001), params)
    assert rates.max() < 1.22


def test_hom_dip_far_outside_is_flat():
    params = HomDipParams(100.0, 0.89, 1566.0, 10.7)
    assert hom_dip_rate(0.0, params) == pytest.approx(11.0)
    assert hom_dip_rate(10.0, params) == pytest.approx(100.0, rel=0.015)


def test_hom_dip_is_even_in_delay():
    params = HomDipParams(100.0, 0.89, 1566.0, 10.7)
    delays = np.linspace(0.01, 2.0, 50)
    np.testing.assert_allclose(hom_dip_rate(delays, params), hom_dip_rate(-delays, params), rtol=0, atol=1e-12)


def test_hom_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    delays = np.linspace(-2.0, 2.0, 21)
    for _ in range(10):
        amplitude, visibility, fwhm = rng.uniform(50, 500), rng.uniform(0.1, 1.0), rng.uniform(5, 15)
        analytic = hom_dip_jacobian(delays, HomDipParams(amplitude, visibility, 1566.0, fwhm))
        p = np.array([amplitude, visibility, fwhm])
        for column in range(3):
            h = 1e-6 * p[column]
            up, down = p.copy(), p.copy()
            up[column] += h
            down[column] -= h
            numeric = (hom_dip_rate(delays, HomDipParams(*up[:2], 1566.0, up[2]))
                       - hom_dip_rate(delays, HomDipParams(*down[:2], 1566.0, down[2]))) / (2 * h)
            scale = np.max(np.abs(analytic[:, column])) or 1.0
            assert np.max(np.abs(numeric - analytic[:, column])) / scale < 1e-5


def test_franson_weights_match_amplitude_enumeration():
    rng = np.random.default_rng(1566)
    for phase, visibility in zip(rng.uniform(-math.pi, math.pi, 100), rng.uniform(0, 1, 100)):
        closed = franson_peak_weights(phase, visibility).as_tuple()
        brute = franson_amplitude_weights(phase, visibility).as_tuple()
        assert np.max(np.abs(np.subtract(closed, brute))) < 1e-12


def test_franson_weight_examples():
    assert franson_peak_weights(0.0, 1.0).as_tuple()[:3] == pytest.approx((1 / 16, 1 / 4, 1 / 16))
    assert franson_peak_weights(math.pi / 2, 1.0).center == pytest.approx(0.0, abs=1e-15)
    assert franson_peak_weights(1.3, 0.0).center == pytest.approx(1 / 8)
    for phase in np.linspace(0, math.pi, 13):
        weights = franson_peak_weights(phase, 0.7)
        assert sum(weights.as_tuple()) == pytest.approx(1.0)
        assert weights.left == weights.right == 1 / 16


def test_timescale_check():
    report = timescale_check(TimescaleParams(0.757, 200.0, 2500.0, 1e6))
    assert report.passed
    assert report.ratios["detector_jitter"] == pytest.approx(12.5)
    failing = timescale_check(TimescaleParams(0.757, 200.0, 500.0, 1e6))
    assert not failing.passed
    assert failing.failures() == ["detector_jitter"]
    short = timescale_check(TimescaleParams(0.7, 200.0, 1000.0, 1e6))
    assert short.failures() == ["detector_jitter"]
    assert short.ratios["detector_jitter"] == pytest.approx(5.0)
    incoherent_pump = timescale_check(TimescaleParams(0.7, 200.0, 2500.0, 10000.0))
    assert incoherent_pump.failures() == ["pump_coherence"]
    assert incoherent_pump.ratios["pump_coherence"] == pytest.approx(4.0)
    with pytest.raises(DomainError):
        timescale_check(TimescaleParams(0.757, 200.0, 2500.0, 1e6), margin=0.5)


def test_predict_car():
    assert predict_car(0.0, 1e5, 1e5, 1000.0) == 1.0
    # 1e4 true/s over 1e10·1e-9 = 10 accidental/s
    assert predict_car(1e4, 1e5, 1e5, 1000.0) == pytest.approx(1001.0)
    assert predict_car(1000.0, 1e5, 1e5, 500.0) == pytest.approx(201.0)
    assert predict_car(1000.0, 1e5, 1e5, 250.0) == pytest.approx(401.0)
    with pytest.raises(DomainError):
        predict_car(1e4, 0.0, 1e5, 1000.0)
    with pytest.raises(DomainError):
        predict_car(1e4, 1e5, 1e5, 0.0)


def test_window_capture_fraction():
    assert window_capture_fraction(200.0, 200.0, -1e6, 1e6) == pytest.approx(1.0)
    assert window_capture_fraction(200.0, 200.0, 0.0, 1e6) == pytest.approx(0.5)
    assert window_capture_fraction(0.0, 0.0, -1.0, 1.0) == 1.0
    assert window_capture_fraction(0.0, 0.0, 1.0, 2.0) == 0.0


def test_pair_rate_scales_linearly():
    assert pair_rate_at_power(625.0, 625.0, 7.2e6) == pytest.approx(7.2e6)
    assert pair_rate_at_power(312.5, 625.0, 7.2e6) == pytest.approx(3.6e6)


def test_tuning_and_filter():
    assert tuning_split(0.0, 1566.0) == (1566.0, 1566.0)
    assert tuning_split(0.001, 1566.0) is None
    assert tuning_split(-0.2, 1566.0) == pytest.approx((1466.0, 1666.0))
    assert tuning_split(0.1, 1566.0) is None
    signal, idler = tuning_split(-0.004, 1566.0)
    assert signal == pytest.approx(1564.0) and idler == pytest.approx(1568.0)

    band = FilterParams(center_wavelength=1566.0, fwhm=10.8)
    assert filter_transmits(tuning_split(-0.004, 1566.0), band)
    assert not filter_transmits(tuning_split(-0.02, 1566.0), band)
    assert not filter_transmits(None, band)


def test_incident_rate_inverts_dead_time_loss():
    incident, dead_time = 7.2e5, 1e7
    observed = incident / (1.0 + incident * dead_time / 1e12)
    assert incident_rate(observed, dead_time) == pytest.approx(incident)
    assert incident_rate(5e4, 0.0) == 5e4
    with pytest.raises(DomainError):
        incident_rate(1e5, 1e7)
