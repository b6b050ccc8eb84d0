import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import spinpat.spectra as spectra
from spinpat.dissipation import PhononBath
from spinpat.errors import NumericalError, ValidationError
from spinpat.fitting import resonance_detuning
from spinpat.hamiltonian import solve
from spinpat.rwa import DriveParams
from spinpat.spectra import (
    REFERENCE_DEVICE, ScanSpec, fit_lorentzians, locate_peaks, lockin_delta_n, lorentzian, multi_lorentzian,
    noise_level, relaxation_decay_signal, scan_spectrum,
)

DRIVE = DriveParams(11.0, 0.5)
BATH = PhononBath()
EXPECTED_SIGN = {"plus": 1, "zero_singlet": 1, "blue": -1}


def rng(stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([2024, stream])))


def peak_value(B, line, half_window=3.0):
    e = resonance_detuning(REFERENCE_DEVICE, B, 11.0, line)
    eps = np.linspace(e - half_window, e + half_window, 61)
    v = np.array([lockin_delta_n(REFERENCE_DEVICE, B, x, DRIVE, BATH) for x in eps])
    k = int(np.argmax(np.abs(v)))
    return eps[k], v[k]


def test_far_off_resonance_signal_is_negligible():
    assert abs(lockin_delta_n(REFERENCE_DEVICE, 2.5, 150.0, DRIVE, BATH)) < 1e-3


def test_undriven_signal_is_zero():
    assert lockin_delta_n(REFERENCE_DEVICE, 2.0, 40.0, DRIVE.replace(omega=0.0), BATH) == 0.0


@pytest.mark.parametrize("B", [2.5, 1.5])
def test_resonance_signs(B):
    positions = {}
    for line, sign in EXPECTED_SIGN.items():
        eps, value = peak_value(B, line)
        assert np.sign(value) == sign
        assert abs(value) > 0.01
        positions[line] = eps
    # the T+ red line always sits at the largest detuning
    assert positions["plus"] == max(positions.values())


@pytest.mark.parametrize("B", [2.5, 1.5])
def test_sign_matches_s02_character_ordering(B):
    for line in EXPECTED_SIGN:
        eps, value = peak_value(B, line)
        es = solve(REFERENCE_DEVICE, B, eps)
        ground = es.character[0, 0]
        # the partner level is the one whose gap to the ground state is closest to h nu
        gaps = es.energies - es.energies[0]
        if line == "blue":
            tp = int(np.argmax(es.character[:, 4]))
            ground = es.character[tp, 0]
            gaps = es.energies - es.energies[tp]
        partner = int(np.argmin(np.abs(gaps - 45.49)))
        predicted = 1 if ground > es.character[partner, 0] else -1
        assert np.sign(value) == predicted


def test_red_line_area_independent_of_field():
    areas = []
    for B in (1.0, 1.5, 2.0, 2.5, 3.0):
        e = resonance_detuning(REFERENCE_DEVICE, B, 11.0, "plus")
        eps = np.linspace(e - 15, e + 15, 121)
        v = np.array([lockin_delta_n(REFERENCE_DEVICE, B, x, DRIVE, BATH) for x in eps])
        (c, h, w), = fit_lorentzians(eps, v, max_peaks=1)
        areas.append(math.pi * h * w / 2)
    assert (max(areas) - min(areas)) / np.mean(areas) < 0.10


# --- Lorentzian fitting ---------------------------------------------------------

def test_lorentzian_shape():
    assert lorentzian(30.0, 30.0, 0.5, 4.0) == 0.5
    assert lorentzian(32.0, 30.0, 0.5, 4.0) == pytest.approx(0.25)


def test_single_peak_round_trip():
    x = np.linspace(0, 60, 241)
    hits = 0
    for k in range(20):
        y = lorentzian(x, 30.0, 0.5, 4.0) + rng(k).normal(0, 0.01, x.size)
        (c, h, w), = fit_lorentzians(x, y)
        hits += abs(c - 30.0) <= 0.2
    assert hits == 20


def test_two_overlapping_peaks_round_trip():
    x = np.linspace(0, 60, 241)
    y = multi_lorentzian(x, [26.0, 0.5, 4.0, 34.0, 0.4, 4.0]) + rng(99).normal(0, 0.005, x.size)
    peaks = fit_lorentzians(x, y)
    assert peaks.shape == (2, 3)
    np.testing.assert_allclose(peaks[:, 0], [26.0, 34.0], atol=0.8)


def test_signed_peaks():
    x = np.linspace(0, 100, 401)
    y = multi_lorentzian(x, [20.0, 0.3, 4.0, 70.0, -0.2, 4.0])
    peaks = fit_lorentzians(x, y)
    np.testing.assert_allclose(peaks, [[20.0, 0.3, 4.0], [70.0, -0.2, 4.0]], rtol=1e-6, atol=1e-6)


def test_flat_row_has_no_peaks():
    assert fit_lorentzians(np.linspace(0, 1, 50), np.zeros(50)).shape == (0, 3)


def test_short_row_rejected():
    with pytest.raises(ValidationError):
        fit_lorentzians(np.arange(5.0), np.zeros(5))


def test_noise_level_estimate():
    y = rng(3).normal(0, 0.02, 20000)
    assert noise_level(y) == pytest.approx(0.02, rel=0.05)


# --- relaxation observable -----------------------------------------------------

def test_decay_signal_values():
    assert relaxation_decay_signal(0.0, 5.0) == 1.0
    assert relaxation_decay_signal(1e-12, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert relaxation_decay_signal(1.0, 1.0) == pytest.approx(0.632120558828558, rel=1e-14)
    assert relaxation_decay_signal(1.0, math.log(2)) == pytest.approx(0.721347520444482, rel=1e-14)
    with pytest.raises(ValidationError):
        relaxation_decay_signal(1.0, 0.0)


@given(st.floats(0.0, 1e3), st.floats(1e-3, 1e4))
def test_decay_signal_bounded_and_monotone(gamma, tau):
    s = relaxation_decay_signal(gamma, tau)
    assert 0.0 < s <= 1.0
    assert relaxation_decay_signal(gamma, 2 * tau) <= s + 1e-15


# --- scans --------------------------------------------------------------------

SMALL = ScanSpec(epsilon_range=(0.0, 110.0, 12), axis="B", axis_range=(1.5, 2.5, 3))


def test_scan_shape_and_bounds():
    grid = scan_spectrum(SMALL)
    assert grid.delta_n.shape == (3, 12)
    assert np.all(np.isfinite(grid.delta_n))
    assert np.all(np.abs(grid.delta_n) <= 1)
    assert grid.metadata["drive"]["nu"] == 11.0
    rows = locate_peaks(grid, 0, min_height=1e-3)
    assert all(p.axis == 1.5 for p in rows)


def test_scan_independent_of_worker_count():
    a = scan_spectrum(SMALL, threads=1)
    b = scan_spectrum(SMALL, threads=2)
    np.testing.assert_array_equal(a.delta_n, b.delta_n)


def test_omega_scan_row_zero_is_zero():
    spec = ScanSpec(epsilon_range=(90.0, 110.0, 5), axis="omega", axis_range=(0.0, 1.0, 2), fixed_B=2.5)
    grid = scan_spectrum(spec)
    np.testing.assert_array_equal(grid.delta_n[0], 0.0)


def test_failed_points_are_masked(monkeypatch):
    real = spectra.lockin_delta_n

    def flaky(device, B, eps, drive, bath):
        if eps > 100:
            raise NumericalError("synthetic failure")
        return real(device, B, eps, drive, bath)

    monkeypatch.setattr(spectra, "lockin_delta_n", flaky)
    grid = scan_spectrum(SMALL)
    bad = SMALL.epsilon > 100
    assert np.all(np.isnan(grid.delta_n[:, bad]))
    assert np.all(np.isfinite(grid.delta_n[:, ~bad]))
    assert len(grid.failures) == 3 * int(bad.sum())


@pytest.mark.parametrize("kw", [
    {"epsilon_range": (0.0, 1.0, 1)}, {"axis_range": (2.0, 1.0, 5)}, {"axis": "T"},
])
def test_scan_spec_validation(kw):
    with pytest.raises(ValidationError):
        ScanSpec(**kw)
