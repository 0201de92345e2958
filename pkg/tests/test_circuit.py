import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from drivenbath.bath import DebyeSpec, build_debye_bath, memory_kernel_transform
from drivenbath.circuit import (COPPER, COPPER_CIRCUIT, COPPER_ION_MASS, REFERENCE_RMS, REFERENCE_S_DB, CircuitError,
                                CircuitParams, MaterialPreset, averaged_driven_noise, circuit_response,
                                classical_nyquist_level, copper_estimate, debye_response_integral,
                                driven_bath_spectrum_closed, driven_bath_spectrum_rederived,
                                flat_resistance_equilibrium, load_material_presets, noise_spectrum, resistance,
                                unit_sinc_window, voltage_noise_correlation)
from drivenbath.field import FieldProtocol
from drivenbath.noise import ConfigurationError, _drive_response, analytic_eta_correlation, analytic_sym_correlation
from drivenbath.specfun import E_CHARGE, DomainError, ThermalContext

T300 = ThermalContext(300.0)
UNIT_CIRCUIT = CircuitParams(q=1.0, n=1.0, A=1.0, m=1.0)


@pytest.fixture(scope="module")
def copper_spec():
    return COPPER.debye_spec(COPPER_ION_MASS)


def response_oracle(wD, Omega, t):
    """Direct quadrature of (w sin wt - O sin Ot)/(w^2 - O^2), removing the pole by a symmetric split."""
    def f(w):
        if w == Omega:
            return (math.sin(Omega * t) + Omega * t * math.cos(Omega * t)) / (2 * Omega)
        return (w * math.sin(w * t) - Omega * math.sin(Omega * t)) / (w * w - Omega * Omega)

    edges = np.unique(np.concatenate([np.linspace(0.0, wD, int(wD * t / math.pi) + 2), [Omega]]))
    return sum(integrate.quad(f, a, b, epsabs=1e-14 * (b - a), epsrel=1e-11, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]))


# --- parameters --------------------------------------------------------------------------

def test_circuit_params():
    c = CircuitParams(q=2.0, n=3.0, A=0.5, m=6.0)
    assert c.lam == 3.0 and c.inductance == pytest.approx(6.0 / 9.0)
    for bad in ({"q": 0.0}, {"n": -1.0}, {"A": math.inf}, {"m": 0.0}):
        kw = dict(q=1.0, n=1.0, A=1.0, m=1.0)
        kw.update(bad)
        with pytest.raises(CircuitError):
            CircuitParams(**kw)
    assert COPPER_CIRCUIT.lam == pytest.approx(E_CHARGE * 8.49e28 * 1e-6)


def test_material_presets_csv(tmp_path):
    path = tmp_path / "presets.csv"
    path.write_text("name,A_D_s3,nu_per_s,qbar_C\ncopper,6.72e-41,4e13,1.602176634e-19\nx,9e-39,1e12,2e-19\n")
    presets = load_material_presets(path)
    assert presets["copper"] == COPPER
    assert presets["x"].omega_D == pytest.approx(1e13, rel=1e-12)
    path.write_text("name,A_D,nu,qbar\n")
    with pytest.raises(ValueError, match="header"):
        load_material_presets(path)
    with pytest.raises(ValueError):
        MaterialPreset("bad", -1.0, 1.0, 1.0)


# --- resistance and response --------------------------------------------------------------

def test_resistance_examples(copper_spec):
    assert resistance(copper_spec, COPPER_CIRCUIT, 1.01 * copper_spec.omega_D) == 0.0
    s = copper_spec
    expected = COPPER_CIRCUIT.m * s.mbar * s.nu**4 * s.A_D * (math.pi / 2) / COPPER_CIRCUIT.lam**2
    assert resistance(s, COPPER_CIRCUIT, s.omega_D / 2) == pytest.approx(expected, rel=1e-14)
    wide = CircuitParams(COPPER_CIRCUIT.q, COPPER_CIRCUIT.n, 4 * COPPER_CIRCUIT.A)
    assert resistance(s, wide, s.omega_D / 2) == pytest.approx(expected / 16, rel=1e-14)
    w = np.array([0.1, 0.5]) * s.omega_D
    assert np.allclose(resistance(s, COPPER_CIRCUIT, w),
                       COPPER_CIRCUIT.m * memory_kernel_transform(s, w) / COPPER_CIRCUIT.lam**2)


def test_circuit_response_examples():
    c = CircuitParams(q=1.0, n=1.0, A=1.0, m=2.0)
    assert circuit_response(c, 4.0, 1.0, 1.0, 0.0) == 0.5
    R = 0.01
    omega = 100 * R / c.inductance
    I = circuit_response(c, R, 1.0, 0.5, omega)
    assert abs(I) == pytest.approx(1.5 / (omega * c.inductance), rel=1e-2)
    assert np.angle(circuit_response(c, 1e-9, 1.0, 0.0, 1e6)) == pytest.approx(-math.pi / 2, abs=1e-12)
    with pytest.raises(CircuitError, match="singular"):
        circuit_response(c, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(CircuitError):
        circuit_response(c, -1.0, 1.0, 0.0, 1.0)
    assert circuit_response(c, 0.0, 1.0, 0.0, 2.0) == pytest.approx(-0.25j)


# --- voltage-noise correlation ---------------------------------------------------------------

def test_voltage_noise_without_drive(debye64):
    t = np.linspace(0.0, 1e-12, 9)
    v = voltage_noise_correlation(debye64, T300, COPPER_CIRCUIT, FieldProtocol.off(3e12), t, 0.2e-12)
    ref = analytic_sym_correlation(debye64, T300, t, 0.2e-12) / COPPER_CIRCUIT.lam**2
    assert np.allclose(v, ref, rtol=1e-12, atol=0)


def test_voltage_noise_matches_eta_correlation(debye64):
    field = FieldProtocol(5e8, 3e12)
    t = np.linspace(0.0, 2e-12, 8)
    v = voltage_noise_correlation(debye64, T300, COPPER_CIRCUIT, field, t[:, None], t[None, :])
    ref = analytic_eta_correlation(debye64, T300, field, t[:, None], t[None, :]) / COPPER_CIRCUIT.lam**2
    assert np.allclose(v, ref, rtol=1e-12, atol=0)
    undriven = voltage_noise_correlation(debye64, T300, COPPER_CIRCUIT, FieldProtocol.off(3e12), t, t)
    assert np.all(np.diag(v)[1:] > undriven[1:])
    with pytest.raises(ValueError):
        voltage_noise_correlation(debye64, T300, COPPER_CIRCUIT, field, -1.0, 0.0)


# --- Debye response integral ---------------------------------------------------------------

def test_response_at_origin_and_asymptotic_breakdown(debye_spec):
    assert debye_response_integral(debye_spec, 1e11, 0.0) == 0.0
    assert debye_response_integral(debye_spec, 1e11, 0.0, "asymptotic") == pytest.approx(math.pi / 2)


def test_response_slow_drive_regime(debye_spec):
    Omega = 0.01 * debye_spec.omega_D
    t = 20.0 / Omega
    q = debye_response_integral(debye_spec, Omega, t)
    a = debye_response_integral(debye_spec, Omega, t, "asymptotic")
    assert abs(q - a) <= 0.05 * math.pi / 2


@pytest.mark.parametrize("ratio,wt", [(0.01, 5.0), (0.3, 0.7), (0.5, 40.0), (0.999, 12.0), (1e-4, 300.0)])
def test_response_methods_match_direct_quadrature(ratio, wt):
    spec = DebyeSpec(omega_D=1.0, nu=1.0, qbar=1.0, mbar=1.0)
    ref = response_oracle(1.0, ratio, wt)
    assert debye_response_integral(spec, ratio, wt) == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert debye_response_integral(spec, ratio, wt, "special") == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_response_integrand_continuous_at_drive_frequency():
    Omega, t = 2.0, 1.3
    limit = (math.sin(Omega * t) + Omega * t * math.cos(Omega * t)) / (2 * Omega)
    w = np.array([Omega, Omega * (1 + 1e-7), Omega * (1 - 1e-7)])
    assert np.allclose(_drive_response(w, Omega, t), limit, rtol=1e-6)


def test_response_domain_and_method(debye_spec):
    for bad in (0.0, debye_spec.omega_D, 2 * debye_spec.omega_D):
        with pytest.raises(DomainError):
            debye_response_integral(debye_spec, bad, 1e-12)
    with pytest.raises(ValueError):
        debye_response_integral(debye_spec, 1e12, 1e-12, "series")


@settings(max_examples=25)
@given(st.floats(1e-3, 0.9), st.floats(0.0, 200.0))
def test_special_form_agrees_with_quadrature(ratio, wt):
    spec = DebyeSpec(omega_D=1.0, nu=1.0, qbar=1.0, mbar=1.0)
    q = debye_response_integral(spec, ratio, wt)
    s = debye_response_integral(spec, ratio, wt, "special")
    assert s == pytest.approx(q, rel=1e-8, abs=1e-10)


# --- spectrum -------------------------------------------------------------------------------

def test_spectrum_without_drive(debye64):
    res = noise_spectrum(debye64, T300, COPPER_CIRCUIT, FieldProtocol.off(3e12), 1e11, [0.0, 1e-13])
    assert not res.driven.any()
    ref = analytic_sym_correlation(debye64, T300, res.tau, 0.0) / COPPER_CIRCUIT.lam**2
    assert np.allclose(res.equilibrium, ref, rtol=1e-14)
    assert np.array_equal(res.total, res.equilibrium)


@pytest.mark.parametrize("df", [0.0, -1.0, math.nan])
def test_spectrum_rejects_bad_bandwidth(debye64, df):
    with pytest.raises(ConfigurationError):
        noise_spectrum(debye64, T300, COPPER_CIRCUIT, FieldProtocol(1.0, 3e12), df, 0.0)


def test_driven_term_periodic_in_lag(debye_spec):
    Omega = 0.02 * debye_spec.omega_D
    field = FieldProtocol(1.0, Omega)
    df = Omega / (2 * math.pi) / 2
    period = 2 * math.pi / Omega
    taus = np.array([0.0, 0.3]) * period
    a = noise_spectrum(debye_spec, T300, UNIT_CIRCUIT, field, df, taus).driven
    b = noise_spectrum(debye_spec, T300, UNIT_CIRCUIT, field, df, taus + period).driven
    assert np.allclose(a, b, rtol=0, atol=1e-3 * a[0])
    assert a[0] > 0 and np.all(np.abs(a) <= a[0] * (1 + 1e-3))


def test_continuum_spectrum_matches_fine_discrete_bath(debye_spec):
    bath = build_debye_bath(debye_spec, 2048)
    field = FieldProtocol(1.0, 0.01 * debye_spec.omega_D)
    df = field.Omega / (2 * math.pi)
    taus = [0.0, 0.25 * 2 * math.pi / field.Omega]
    cont = noise_spectrum(debye_spec, T300, UNIT_CIRCUIT, field, df, taus)
    disc = noise_spectrum(bath, T300, UNIT_CIRCUIT, field, df, taus)
    assert cont.driven[0] == pytest.approx(disc.driven[0], rel=1e-3)
    assert abs(cont.driven[1] - disc.driven[1]) <= 1e-3 * cont.driven[0]
    assert cont.equilibrium[0] == pytest.approx(disc.equilibrium[0], rel=1e-3)


def test_spectrum_csv(tmp_path, debye64):
    res = noise_spectrum(debye64, T300, COPPER_CIRCUIT, FieldProtocol(5e8, 3e12), 1e11, [0.0, 1e-13])
    path = tmp_path / "s.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau_s,equilibrium_V2,driven_V2,total_V2" and len(lines) == 3
    assert float(lines[1].split(",")[3]) == res.total[0]


# --- closed forms ------------------------------------------------------------------------------

def test_closed_form_examples():
    Omega = 1e12
    args = (COPPER, COPPER_CIRCUIT, 1e12, Omega)
    E0 = COPPER_CIRCUIT.lam / COPPER.qbar
    s0 = driven_bath_spectrum_closed(*args, 0.0, E0)
    assert s0 == pytest.approx(math.pi**3 / 8 * COPPER.A_D**2 * COPPER.nu**4 * 1e24, rel=1e-14)
    assert abs(driven_bath_spectrum_closed(*args, math.pi / (2 * Omega), E0)) <= 1e-15 * s0
    faster = MaterialPreset("x", COPPER.A_D, 2 * COPPER.nu, COPPER.qbar)
    assert driven_bath_spectrum_closed(faster, *args[1:], 0.0, E0) == pytest.approx(16 * s0, rel=1e-14)
    ratio = driven_bath_spectrum_rederived(*args, 0.0, E0) / s0
    assert ratio == pytest.approx(1 / (2 * math.pi), rel=1e-14)


def test_averaged_noise_examples():
    Omega, E0 = 1e12, COPPER_CIRCUIT.lam / COPPER.qbar
    s0 = driven_bath_spectrum_closed(COPPER, COPPER_CIRCUIT, 1e12, Omega, 0.0, E0)
    assert abs(averaged_driven_noise(COPPER, COPPER_CIRCUIT, 1e12, Omega, math.pi / Omega, E0)) <= 1e-15 * s0 * Omega
    small = averaged_driven_noise(COPPER, COPPER_CIRCUIT, 1e12, Omega, 1e-6 / Omega, E0)
    assert small == pytest.approx(s0, rel=1e-11)
    with pytest.raises(ConfigurationError):
        averaged_driven_noise(COPPER, COPPER_CIRCUIT, 1e12, Omega, 0.0, E0)


@given(st.floats(10.0, 1e13), st.floats(0.05, 0.95))
def test_unit_sinc_window(Omega, guess):
    T = unit_sinc_window(Omega, guess)
    # one ulp of T shifts the phase by Omega*ulp(T), i.e. sin by a relative Omega*ulp(T)*cot(Omega T)
    assert math.sin(Omega * T) / T == pytest.approx(1.0, rel=1e-12 + 4 * Omega * math.ulp(T) / T)
    assert abs(T - guess) <= 2 * math.pi / Omega + 0.1


# --- Nyquist --------------------------------------------------------------------------------

def test_classical_nyquist_level():
    assert classical_nyquist_level(1.0, T300) == pytest.approx(1.65678e-20, rel=1e-6)
    assert classical_nyquist_level(0.0, T300) == 0.0
    assert classical_nyquist_level(3.0, ThermalContext(200.0)) == pytest.approx(
        3 * 2 / 3 * classical_nyquist_level(1.0, T300), rel=1e-15)
    with pytest.raises(DomainError):
        classical_nyquist_level(1.0, ThermalContext.ground_state())
    with pytest.raises(CircuitError):
        classical_nyquist_level(-1.0, T300)


def test_flat_resistance_reduction(debye_spec):
    bath = build_debye_bath(DebyeSpec(1e10, 1.0, 1.0, 1.0), 64)
    for T in (100.0, 300.0, 1000.0):
        ctx = ThermalContext(T)
        assert flat_resistance_equilibrium(bath, 2.0, ctx) == pytest.approx(
            classical_nyquist_level(2.0, ctx), rel=1e-3)
    quantum = flat_resistance_equilibrium(build_debye_bath(debye_spec, 64), 1.0, ThermalContext(1.0))
    assert quantum > classical_nyquist_level(1.0, ThermalContext(1.0))


# --- copper --------------------------------------------------------------------------------------

def test_copper_report():
    rep = copper_estimate()
    assert rep.rms_averaged == math.sqrt(rep.s_db_averaged)
    assert rep.rms_closed == math.sqrt(rep.s_db_closed)
    assert rep.group_V2 == pytest.approx(1.0, rel=1e-14)
    assert rep.extras["group_read_as_volts"] == pytest.approx(1.0, rel=1e-14)
    assert rep.ratio_averaged_vs_reference == rep.s_db_averaged / REFERENCE_S_DB
    assert rep.ratio_rms_vs_reference == rep.rms_averaged / REFERENCE_RMS
    assert math.sin(rep.Omega * rep.T_window) / rep.T_window == pytest.approx(1.0, rel=1e-4)
    # the windowed quadrature tracks the large-wD t limit, not the printed prefactor
    assert rep.s_db_quadrature == pytest.approx(rep.s_db_rederived, rel=1e-2)
    assert 0.1 <= rep.quadrature_over_closed <= 10
    d = rep.as_dict()
    assert d["group_read_as_volts"] == rep.extras["group_read_as_volts"] and "extras" not in d
