import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drivenbath.specfun import (EULER_GAMMA, HBAR, K_B, SERIES_CUTOFF, DomainError, ThermalContext,
                                bose_occupation, cin, cosine_integral, sine_integral, thermal_factor)

mp.mp.dps = 40


def ctx_at(x, omega=1e13):
    """Context where hbar*omega/(2 kT) equals x."""
    return ThermalContext.from_reduced_frequency(omega, x)


# --- sine integral -----------------------------------------------------------

@pytest.mark.parametrize("x", [1e-10, 0.5, 1.0, 3.99, 4.0, 4.01, 7.9, 8.1, 20.0, 123.4, 1e3, 5e4, 1e6])
def test_sine_integral_matches_mpmath(x):
    assert abs(sine_integral(x) - float(mp.si(x))) <= 1e-12


def test_sine_integral_reference_points():
    assert sine_integral(0.0) == 0.0
    # quadrature oracle for Si(1)
    assert sine_integral(1.0) == pytest.approx(0.946083070367, abs=1e-12)
    assert abs(sine_integral(1e6) - math.pi / 2) < 1e-5


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_sine_integral_is_odd(x):
    assert sine_integral(-x) == -sine_integral(x)


def test_sine_integral_monotone_and_bounded_on_first_arch():
    x = np.linspace(0.0, math.pi, 2001)
    s = sine_integral(x)
    assert np.all(np.diff(s) > 0)
    assert np.all(s <= sine_integral(math.pi))
    xs = np.append(np.linspace(0.0, 200.0, 5001), math.pi)
    assert np.max(sine_integral(xs)) == pytest.approx(sine_integral(math.pi), abs=1e-12)


def test_branches_agree_at_seam():
    lo = np.nextafter(SERIES_CUTOFF, 0.0)
    hi = np.nextafter(SERIES_CUTOFF, 10.0)
    assert abs(sine_integral(lo) - sine_integral(hi)) < 1e-13
    assert abs(cosine_integral(lo) - cosine_integral(hi)) < 1e-13


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_sine_integral_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        sine_integral(bad)


def test_vectorized_matches_scalar():
    xs = np.array([0.1, 2.0, 4.5, 30.0, 1e5])
    # array calls share one stopping test, so only the last bits may differ
    np.testing.assert_allclose(sine_integral(xs), [sine_integral(x) for x in xs], rtol=1e-15, atol=1e-16)
    np.testing.assert_allclose(cosine_integral(xs), [cosine_integral(x) for x in xs], rtol=1e-15, atol=1e-16)


# --- cosine integral ---------------------------------------------------------

@pytest.mark.parametrize("x", [1e-8, 1e-3, 0.3, 1.0, 3.99, 4.01, 9.0, 77.0, 1e3, 1e6])
def test_cosine_integral_matches_mpmath(x):
    assert abs(cosine_integral(x) - float(mp.ci(x))) <= 1e-12


def test_cosine_integral_reference_points():
    assert cosine_integral(1.0) == pytest.approx(0.337403922901, abs=1e-12)
    assert abs(cosine_integral(1e6)) < 1e-5
    x = 1e-6
    assert cosine_integral(x) - math.log(x) == pytest.approx(EULER_GAMMA, abs=1e-6)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_cosine_integral_domain(bad):
    with pytest.raises(DomainError):
        cosine_integral(bad)


@given(st.floats(min_value=1e-6, max_value=1e4))
def test_cin_consistent_with_ci(x):
    # Cin(x) = gamma + ln x - Ci(x)
    assert cin(x) == pytest.approx(EULER_GAMMA + math.log(x) - cosine_integral(x), abs=1e-12)
    assert cin(-x) == cin(x)


def test_cin_small_argument_series():
    x = 1e-5
    assert cin(x) == pytest.approx(x * x / 4 - x**4 / 96, rel=1e-12)
    assert cin(0.0) == 0.0


# --- thermal factors -------------------------------------------------------------

def test_thermal_context_validation():
    with pytest.raises(DomainError, match="temperature_K"):
        ThermalContext(-1.0)
    with pytest.raises(DomainError):
        ThermalContext(math.nan)
    assert ThermalContext.ground_state().is_zero
    assert ThermalContext(300.0).kT == pytest.approx(300.0 * K_B, rel=1e-15)


def test_reduced_frequency_round_trip():
    ctx = ctx_at(0.37, omega=2e12)
    assert ctx.reduced_frequency(2e12) == pytest.approx(0.37, rel=1e-14)
    assert ThermalContext.ground_state().reduced_frequency(1.0) == math.inf


def test_thermal_factor_zero_temperature_is_exactly_one():
    ctx = ThermalContext.ground_state()
    assert thermal_factor(1e13, ctx) == 1.0
    assert bose_occupation(1e13, ctx) == 0.0


def test_thermal_factor_reference_value():
    # (e^2 + 1)/(e^2 - 1) in extended precision
    ref = float(mp.coth(1))
    assert thermal_factor(1e13, ctx_at(1.0)) == pytest.approx(ref, rel=1e-14)
    assert thermal_factor(1e13, ctx_at(1.0)) == pytest.approx(1.313035285, abs=1e-9)
    assert bose_occupation(1e13, ctx_at(1.0)) == pytest.approx(0.156517642, abs=1e-9)


def test_classical_limits():
    omega = 1e13
    ctx = ctx_at(0.01, omega)
    assert thermal_factor(omega, ctx) == pytest.approx(2 * ctx.kT / (HBAR * omega), rel=1e-4)
    ctx = ctx_at(1e-4, omega)
    assert bose_occupation(omega, ctx) * HBAR * omega / ctx.kT == pytest.approx(1.0, rel=1e-3)


@given(st.floats(min_value=1e-8, max_value=300.0))
def test_occupation_and_factor_agree(x):
    ctx = ctx_at(x)
    f = thermal_factor(1e13, ctx)
    n = bose_occupation(1e13, ctx)
    assert n >= 0
    assert 2 * n + 1 == pytest.approx(f, rel=2.3e-16, abs=0)
    assert f == pytest.approx(float(mp.coth(mp.mpf(x))), rel=1e-13)


@given(st.floats(min_value=1.0, max_value=1e4))
def test_thermal_factor_above_one_and_decreasing(T):
    ctx = ThermalContext(T)
    w = np.geomspace(1e9, 1e15, 50)
    f = thermal_factor(w, ctx)
    assert np.all(f >= 1.0)
    assert np.all(np.diff(f) <= 0)
    assert thermal_factor(1e11, ctx) > 1.0


@pytest.mark.parametrize("bad", [0.0, -1e12, math.nan])
def test_thermal_factor_domain(bad):
    with pytest.raises(DomainError):
        thermal_factor(bad, ThermalContext(300.0))
    with pytest.raises(DomainError):
        bose_occupation(bad, ThermalContext(300.0))
