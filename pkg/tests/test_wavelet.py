import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import gauss, make_pattern
from xrpdprep.exceptions import DomainError, SizeError
from xrpdprep.wavelet import (
    MAD_SCALE,
    WaveletCoeffs,
    daubechies_filter,
    default_levels,
    denoise,
    dwt,
    estimate_noise_sigma,
    idwt,
    soft_threshold,
)

SQ3 = np.sqrt(3.0)


def test_haar_pair():
    b = daubechies_filter(1)
    np.testing.assert_allclose(b.lowpass, [1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(b.highpass, [1.0, -1.0], atol=1e-15)


def test_db2_lowpass_closed_form():
    c = daubechies_filter(2).lowpass
    expected = np.array([1 + SQ3, 3 + SQ3, 3 - SQ3, 1 - SQ3]) / 4
    np.testing.assert_allclose(c, expected, atol=1e-12)
    assert np.sum(c**2) == pytest.approx(2.0, abs=1e-12)


def test_db2_highpass_alternating_flip():
    b = daubechies_filter(2).highpass
    expected = np.array([1 - SQ3, -(3 - SQ3), 3 + SQ3, -(1 + SQ3)]) / 4
    np.testing.assert_allclose(b, expected, atol=1e-12)


@pytest.mark.parametrize("order", range(1, 7))
def test_filter_constraints(order):
    basis = daubechies_filter(order)
    c = basis.lowpass
    k = np.arange(c.size)
    assert c.size == 2 * order
    assert c.sum() == pytest.approx(2.0, abs=1e-12)
    for m in range(order):
        assert abs(np.sum((-1.0) ** k * k**m * c)) < 1e-9 * max(1, order**m)
    for m in range(order):
        s = 2 * m
        assert c[: c.size - s] @ c[s:] == pytest.approx(2.0 if m == 0 else 0.0, abs=1e-12)
    np.testing.assert_array_equal(basis.highpass, (-1.0) ** k * c[::-1])


def test_regularity_increases_with_order():
    reg = [daubechies_filter(n).regularity for n in range(1, 7)]
    assert all(a < b for a, b in zip(reg, reg[1:]))


@pytest.mark.parametrize("order", [0, 7, 2.5, "2"])
def test_unsupported_order(order):
    with pytest.raises(DomainError):
        daubechies_filter(order)


@pytest.mark.parametrize("order", [1, 2, 4])
def test_constant_signal_has_no_detail(order):
    coeffs = dwt(np.full(64, 3.7), daubechies_filter(order), 3)
    for d in coeffs.details:
        assert np.max(np.abs(d)) < 1e-12
    assert np.sum(coeffs.approx**2) == pytest.approx(64 * 3.7**2, rel=1e-12)


def test_haar_ramp_details_constant():
    x = np.arange(16.0) * 0.5
    coeffs = dwt(x, daubechies_filter(1), 1)
    d = coeffs.finest()
    np.testing.assert_allclose(d, np.full(8, d[0]), atol=1e-14)
    assert abs(d[0]) == pytest.approx(0.5 / np.sqrt(2), abs=1e-14)


def test_haar_inverse_of_approx_only():
    a = np.array([1.0, 2.0, -3.0, 4.0])
    out = idwt(WaveletCoeffs(1, a, (np.zeros(4),)), daubechies_filter(1))
    np.testing.assert_allclose(out, np.repeat(a / np.sqrt(2), 2), atol=1e-14)


def test_zero_coefficients_give_zero_signal():
    coeffs = WaveletCoeffs(3, np.zeros(4), (np.zeros(4), np.zeros(8), np.zeros(16)))
    assert np.all(idwt(coeffs, daubechies_filter(3)) == 0)


def test_detail_sizes_coarse_to_fine():
    coeffs = dwt(np.arange(64.0), daubechies_filter(2), 3)
    assert [d.size for d in coeffs.details] == [8, 16, 32]
    assert coeffs.approx.size == 8
    assert coeffs.size == 64


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, 128, elements=st.floats(-1e3, 1e3, allow_nan=False)),
    st.integers(1, 6),
    st.integers(1, 4),
)
def test_round_trip_and_energy(x, order, levels):
    basis = daubechies_filter(order)
    coeffs = dwt(x, basis, levels)
    scale = max(1.0, np.linalg.norm(x))
    assert np.linalg.norm(idwt(coeffs, basis) - x) <= 1e-10 * scale
    assert abs(np.sum(coeffs.as_vector() ** 2) - np.sum(x**2)) <= 1e-10 * scale**2


def test_dwt_rejects_bad_length():
    with pytest.raises(SizeError):
        dwt(np.ones(100), daubechies_filter(2), 3)


def test_mad_of_zero_details():
    c = WaveletCoeffs(1, np.ones(4), (np.zeros(4),))
    assert estimate_noise_sigma(c) == 0.0


def test_mad_of_alternating_details():
    c = WaveletCoeffs(1, np.ones(4), (np.array([-1.0, 1.0, -1.0, 1.0]),))
    assert estimate_noise_sigma(c) == pytest.approx(1 / MAD_SCALE)


def test_mad_tracks_gaussian_sigma():
    basis = daubechies_filter(2)
    est = []
    for seed in range(20):
        x = 2.5 * np.random.default_rng(seed).standard_normal(4096)
        est.append(estimate_noise_sigma(dwt(x, basis, 4)))
    assert all(abs(e / 2.5 - 1) < 0.1 for e in est)


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold([-3.0, -1.0, 0.5, 2.0], 1.0), [-2.0, 0.0, 0.0, 1.0])


def test_default_levels():
    assert default_levels(4096) == 4
    assert default_levels(16) == 2
    assert default_levels(8) == 1


def test_denoise_leaves_smooth_signal_alone():
    theta = 10 + 0.01 * np.arange(2048)
    y = gauss(theta, 20.0, 1000.0, 2.0)
    clean, noise = denoise(make_pattern(y))
    assert np.linalg.norm(noise.intensity) <= 1e-6 * np.linalg.norm(y)


def test_denoise_additivity_non_dyadic(rng):
    y = rng.random(1001) * 50
    clean, noise = denoise(make_pattern(y), daubechies_filter(3), 3)
    assert np.array_equal(clean.intensity + noise.intensity, y) or np.max(
        np.abs(clean.intensity + noise.intensity - y)
    ) <= 1e-12 * y.max()
    assert len(clean) == 1001


def test_denoise_reduces_error():
    theta = 10 + 0.01 * np.arange(2048)
    truth = gauss(theta, 17.0, 100.0, 0.3) + gauss(theta, 24.0, 60.0, 0.5)
    for seed in range(20):
        y = truth + 5.0 * np.random.default_rng(seed).standard_normal(truth.size)
        clean, _ = denoise(make_pattern(y))
        rmse_in = np.sqrt(np.mean((y - truth) ** 2))
        rmse_out = np.sqrt(np.mean((clean.intensity - truth) ** 2))
        assert rmse_out < rmse_in


def test_denoise_rejects_too_many_levels():
    with pytest.raises(DomainError):
        denoise(make_pattern(np.ones(16)), levels=6)
