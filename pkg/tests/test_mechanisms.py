import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from spinpat.errors import ValidationError
from spinpat.mechanisms import (
    DotGeometry, HyperfineParams, SOCouplingParams, field_angle_factor, matrix_element_ratio, rate_ratio_main_text,
    ratio_for_field, so_direction_vector, t_nuc_rms, t_so_magnitude,
)

HF = HyperfineParams(100.0, 4e6)
SO = SOCouplingParams(0.6, 0.8, 10.0)
GEOM = DotGeometry.from_orbital_spacing(1000.0, a=75.0)


def test_direction_vector_examples():
    a, b = 0.6, 0.8
    np.testing.assert_allclose(so_direction_vector(0.0, a, b), [-(a - b), 0.0], atol=1e-15)
    np.testing.assert_allclose(so_direction_vector(math.pi / 2, a, b), [0.0, -(b - a)], atol=1e-15)
    s = math.sqrt(0.5)
    np.testing.assert_allclose(so_direction_vector(0.0, s, s), [0.0, 0.0], atol=1e-15)


@given(st.floats(-math.pi, math.pi), st.floats(0.0, 2 * math.pi))
def test_direction_vector_matches_printed_components(theta, phi):
    a, b = math.cos(phi), math.sin(phi)
    c, s = math.cos(theta), math.sin(theta)
    n = so_direction_vector(theta, a, b)
    assert n[0] == pytest.approx(-c * ((a - b) * c + (a + b) * s), abs=1e-15)
    assert n[1] == pytest.approx(-s * ((b - a) * s + (a + b) * c), abs=1e-15)


def test_parameter_validation():
    with pytest.raises(ValidationError):
        SOCouplingParams(0.6, 0.6, 10.0)
    with pytest.raises(ValidationError):
        SOCouplingParams(0.6, 0.8, 0.0)
    with pytest.raises(ValidationError):
        DotGeometry(sigma=0.0, a=10.0)
    with pytest.raises(ValidationError):
        HyperfineParams(N=0.5)
    assert SOCouplingParams.from_weights(3.0, 4.0, 10.0) == SO


def test_default_geometry_orbital_spacing():
    assert GEOM.delta_orbital == 1000.0
    assert GEOM.sigma == pytest.approx(33.72, abs=0.01)
    assert DotGeometry(sigma=GEOM.sigma, a=75.0).delta_orbital == pytest.approx(1000.0, rel=1e-12)


def test_appendix_ratio_example():
    r = matrix_element_ratio(GEOM, SO, HF, 1.5)
    assert r == pytest.approx(56.25, rel=1e-12)
    assert abs(r / 60 - 1) < 0.15


def test_angle_factor_range_enforced():
    with pytest.raises(ValidationError):
        matrix_element_ratio(GEOM, SO, HF, 2.2)
    with pytest.raises(ValidationError):
        matrix_element_ratio(GEOM, SO, HF, -0.1)


@given(st.floats(-math.pi, math.pi), st.floats(0.0, 2 * math.pi))
def test_direction_vector_norm_bounded(theta, phi):
    n = so_direction_vector(theta, math.cos(phi), math.sin(phi))
    assert np.linalg.norm(n) <= math.sqrt(2) * (1 + 1e-12)


def test_perpendicular_field_accepted_for_long_n():
    theta = 2.375
    geom = DotGeometry.from_orbital_spacing(1000.0, a=75.0, theta=theta)
    n = so_direction_vector(theta, SO.alpha, SO.beta)
    assert np.linalg.norm(n) > 1
    r = ratio_for_field(geom, SO, HF, [1.0, 0.0, 0.0])
    assert r == pytest.approx(56.25 * np.linalg.norm(n), rel=1e-12)


def test_field_parallel_to_n_blocks_spin_orbit_flips():
    geom = DotGeometry.from_orbital_spacing(1000.0, a=75.0, theta=0.3)
    n = so_direction_vector(geom.theta, SO.alpha, SO.beta)
    along_n = np.array([0.0, n[1], n[0]])
    assert ratio_for_field(geom, SO, HF, along_n) == pytest.approx(0.0, abs=1e-12)
    assert ratio_for_field(geom, SO, HF, [1.0, 0.0, 0.0]) > 0


def test_angle_factor_perpendicular_unit_vector():
    assert field_angle_factor([0, 0, 1], [1, 0, 0]) == 1.5
    with pytest.raises(ValidationError):
        field_angle_factor([0, 0, 1], [0, 0, 0])


def test_zero_distance_gives_zero():
    geom = DotGeometry(sigma=33.7, a=0.0)
    assert t_so_magnitude(geom, SO) == 0.0
    assert matrix_element_ratio(geom, SO, HF, 1.5) == 0.0


@settings(max_examples=200)
@given(st.floats(5.0, 200.0), st.floats(0.0, 500.0), st.floats(-math.pi, math.pi), st.floats(0.5, 50.0))
def test_exponential_factors_cancel(sigma, a, theta, lam):
    geom = DotGeometry(sigma=sigma, a=a, theta=theta)
    so = SOCouplingParams(0.6, 0.8, lam)
    tso, tnuc = t_so_magnitude(geom, so), t_nuc_rms(geom, HF)
    n = np.linalg.norm(so_direction_vector(theta, so.alpha, so.beta))
    factor = 1.5 * n  # field perpendicular to n
    closed = matrix_element_ratio(geom, so, HF, factor)
    if tnuc > 1e-300 and tso > 0:
        assert tso / tnuc * factor / n == pytest.approx(closed, rel=1e-12)


def test_t_so_maximal_at_twice_sigma():
    sigma = 30.0

    def neg(a):
        return -t_so_magnitude(DotGeometry(sigma=sigma, a=a), SO)

    res = minimize_scalar(neg, bounds=(1.0, 300.0), method="bounded", options={"xatol": 1e-8})
    assert res.x == pytest.approx(2 * sigma, rel=1e-6)
    assert t_so_magnitude(DotGeometry(sigma=sigma, a=5000.0), SO) < 1e-100


def test_doubling_spin_orbit_length_halves_t_so():
    long = SOCouplingParams(0.6, 0.8, 20.0)
    assert t_so_magnitude(GEOM, long) == pytest.approx(t_so_magnitude(GEOM, SO) / 2, rel=1e-14)


def test_nuclear_element_examples():
    assert t_nuc_rms(DotGeometry(sigma=30.0, a=0.0), HF) == pytest.approx(0.05, rel=1e-14)
    assert t_nuc_rms(DotGeometry(sigma=30.0, a=60.0), HF) == pytest.approx(0.05 * math.exp(-0.5), rel=1e-14)
    assert t_nuc_rms(GEOM, HyperfineParams(100.0, 1e30)) < 1e-12


def test_ratio_decreases_with_dot_size():
    values = [matrix_element_ratio(DotGeometry(sigma=s, a=75.0), SO, HF, 1.5) for s in (20, 30, 40, 60, 100)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_ratio_increases_with_distance():
    values = [matrix_element_ratio(DotGeometry(sigma=33.7, a=a), SO, HF, 1.5) for a in (10, 50, 75, 150, 300)]
    assert all(x < y for x, y in zip(values, values[1:]))


def test_main_text_ratio_and_square():
    r = rate_ratio_main_text(1000.0, 4e6, 100.0, 75.0, 10.0)
    assert r.expression == pytest.approx(37.5, rel=1e-14)
    assert r.square == pytest.approx(1406.25, rel=1e-14)
    assert "square" in r.note
    assert rate_ratio_main_text(1000.0, 4e6, 100.0, 0.0, 10.0).expression == 0.0


def test_main_text_ratio_scaling():
    base = rate_ratio_main_text(1000.0, 4e6, 100.0, 75.0, 10.0).expression
    assert rate_ratio_main_text(1000.0, 4e6, 100.0, 150.0, 10.0).expression == pytest.approx(2 * base)
    assert rate_ratio_main_text(1000.0, 4e6, 100.0, 75.0, 20.0).expression == pytest.approx(base / 2)


def test_default_five_level_spin_orbit_is_same_order():
    # 5% of t_c = 0.435 ueV versus the geometric estimate: reported, only order of magnitude checked
    estimate = t_so_magnitude(DotGeometry.from_orbital_spacing(1000.0, a=75.0, theta=math.pi / 4), SO)
    assert 0.01 < 0.435 / estimate < 100
