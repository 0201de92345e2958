"""
LR-circuit picture of the driven bath and its voltage-noise spectrum.

Dividing the particle equation by ``lambda = q n A`` turns velocity into
current ``I = lambda x'``, mass into inductance ``L = m / lambda**2`` and the
noise into a voltage ``V_I = eta / lambda``.  The voltage correlation is the
force correlation divided by ``lambda**2``; the drive-shift product is
independent of the carrier charge ``q`` because ``q`` enters both the
applied voltage and the ``1/q**2`` prefactor.

For a continuum Debye bath with frequency-independent coupling the drive
shift reduces to ``E0 Omega qbar nu**2 A_D I(t)`` with::

    I(t) = int_0^wD (w sin wt - O sin Ot) / (w**2 - O**2) dw
         = 1/2 {cos Ot [Si((wD - O)t) + Si((wD + O)t)]
                + sin Ot [Cin((wD + O)t) - Cin((wD - O)t)]}

``debye_response_integral`` offers this closed form (``"special"``), direct
adaptive quadrature of the integrand, and the large-``wD t`` limit
``(pi/2) cos(Omega t)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Union

import numpy as np
from scipy import integrate

from .bath import BathSpec, DebyeSpec, memory_kernel_transform
from .field import FieldProtocol
from .noise import ConfigurationError, _drive_response, analytic_sym_correlation, drive_shift
from .specfun import (AMU, E_CHARGE, HBAR, M_ELECTRON, DomainError, ThermalContext, cin,
                      sine_integral, thermal_factor)

__all__ = [
    "CircuitParams", "MaterialPreset", "SpectrumResult", "CircuitError", "COPPER",
    "COPPER_CIRCUIT", "load_material_presets", "resistance", "circuit_response",
    "voltage_noise_correlation", "noise_spectrum", "debye_response_integral",
    "driven_bath_spectrum_closed", "driven_bath_spectrum_rederived", "averaged_driven_noise",
    "classical_nyquist_level", "flat_resistance_equilibrium", "unit_sinc_window",
    "CopperReport", "copper_estimate", "REFERENCE_S_DB", "REFERENCE_RMS",
]

#: Order-of-magnitude reference value for the copper driven-bath noise, V^2.
REFERENCE_S_DB = 1e-11
#: Reference rms voltage, V.
REFERENCE_RMS = 3e-6

RESPONSE_METHODS = ("quadrature", "asymptotic", "special")


class CircuitError(ValueError):
    """Singular or ill-posed circuit evaluation."""


@dataclass(frozen=True)
class CircuitParams:
    q: float  # C, carrier charge
    n: float  # 1/m^3, carrier density
    A: float  # m^2, cross-section
    m: float = M_ELECTRON  # kg, carrier mass

    def __post_init__(self):
        for name in ("q", "n", "A", "m"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise CircuitError(f"{name} must be finite and > 0, got {val!r}")

    @property
    def lam(self) -> float:
        """Line charge density ``q n A`` in C/m."""
        return self.q * self.n * self.A

    @property
    def inductance(self) -> float:
        """``m / lambda**2`` in H."""
        return self.m / self.lam**2


@dataclass(frozen=True)
class MaterialPreset:
    name: str
    A_D: float  # s^3
    nu: float  # 1/s
    qbar: float  # C

    def __post_init__(self):
        if not (math.isfinite(self.A_D) and self.A_D > 0):
            raise ValueError(f"A_D must be > 0, got {self.A_D!r}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be >= 0, got {self.nu!r}")

    @property
    def omega_D(self) -> float:
        """Debye frequency ``(9 / A_D)**(1/3)`` in rad/s."""
        return (9.0 / self.A_D) ** (1.0 / 3.0)

    def debye_spec(self, ion_mass: float) -> DebyeSpec:
        return DebyeSpec(omega_D=self.omega_D, nu=self.nu, qbar=self.qbar, mbar=ion_mass, A_D=self.A_D)


COPPER = MaterialPreset("copper", A_D=6.72e-41, nu=4e13, qbar=E_CHARGE)
COPPER_ION_MASS = 63.546 * AMU
#: Copper wire, one conduction electron per atom, 1 mm^2 cross-section.
COPPER_CIRCUIT = CircuitParams(q=E_CHARGE, n=8.49e28, A=1e-6, m=M_ELECTRON)

PRESET_HEADER = ("name", "A_D_s3", "nu_per_s", "qbar_C")


def load_material_presets(path) -> Dict[str, MaterialPreset]:
    """Read presets from a CSV with header ``name,A_D_s3,nu_per_s,qbar_C``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != PRESET_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PRESET_HEADER)}, got {','.join(header)}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            out[row[0]] = MaterialPreset(row[0], float(row[1]), float(row[2]), float(row[3]))
    return out


def resistance(spec: DebyeSpec, circuit: CircuitParams, omega):
    """``R(w) = m K(w) / lambda**2`` with ``K(w)`` the cosine transform of the Debye kernel."""
    return (circuit.m * np.asarray(memory_kernel_transform(spec, omega)) / circuit.lam**2)[()]


def circuit_response(circuit: CircuitParams, R: float, V, V_I, omega):
    """Current ``(V + V_I) / (R + i w L)`` in A."""
    if R < 0:
        raise CircuitError(f"R must be >= 0, got {R!r}")
    w = np.asarray(omega, dtype=float)
    if R == 0 and np.any(w == 0):
        raise CircuitError("singular response: R = 0 at omega = 0")
    return ((np.asarray(V) + np.asarray(V_I)) / (R + 1j * w * circuit.inductance))[()]


def voltage_noise_correlation(bath: BathSpec, ctx: ThermalContext, circuit: CircuitParams,
                              protocol: FieldProtocol, t, t2):
    """``<V_I(t) V_I(t')>`` in V^2.

    The equilibrium part is the force correlation over ``lambda**2``; the
    driven part is ``D(t) D(t') / lambda**2``, where the voltage protocol is
    ``(q E0 / lambda) sin(Omega t)``.
    """
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t < 0) or np.any(t2 < 0):
        raise ValueError("voltage_noise_correlation is defined for t, t' >= 0")
    lam2 = circuit.lam**2
    eq = np.asarray(analytic_sym_correlation(bath, ctx, t, t2)) / lam2
    dv = np.asarray(drive_shift(bath, protocol, t)) * np.asarray(drive_shift(bath, protocol, t2)) / lam2
    return (eq + dv)[()]


# --- Debye response integral -------------------------------------------------

def _check_band(spec: DebyeSpec, Omega: float):
    if not (Omega > 0 and Omega < spec.omega_D):
        raise DomainError(f"need 0 < Omega < omega_D = {spec.omega_D:.6g}, got Omega = {Omega!r}")


def _response_special(wD: float, Omega: float, t: np.ndarray) -> np.ndarray:
    a = (wD - Omega) * t
    b = (wD + Omega) * t
    ot = Omega * t
    return 0.5 * (np.cos(ot) * (sine_integral(a) + sine_integral(b))
                  + np.sin(ot) * (cin(b) - cin(a)))


def _response_quadrature(wD: float, Omega: float, t: float) -> float:
    if t == 0:
        return 0.0

    def f(w):
        return float(_drive_response(np.array([w]), Omega, np.array(t))[0])

    # split at the drive frequency and at every half period of the integrand
    step = math.pi / t
    edges = np.unique(np.concatenate([np.arange(0.0, wD, step), [Omega, wD]]))
    edges = edges[(edges >= 0) & (edges <= wD)]
    scale = max(t, 1.0 / Omega)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        # the integrand is at most ~max(t, 1/Omega); the floor only matters on chunks that nearly cancel
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-14 * (hi - lo) * scale, epsrel=1e-12, limit=200)
        total += val
    return total


def debye_response_integral(spec: DebyeSpec, Omega: float, t, method: str = "quadrature"):
    """``int_0^wD (w sin wt - O sin Ot) / (w**2 - O**2) dw`` (dimensionless).

    Parameters
    ----------
    method : {"quadrature", "asymptotic", "special"}
        ``quadrature`` integrates the continuous integrand numerically (the
        point ``w = Omega`` uses its analytic limit); ``asymptotic`` returns
        ``(pi/2) cos(Omega t)``, valid for ``wD t >> 1`` and ``Omega << wD``;
        ``special`` uses the closed form in sine and cosine integrals.

    Raises
    ------
    DomainError
        Unless ``0 < Omega < omega_D``.
    """
    _check_band(spec, Omega)
    if method not in RESPONSE_METHODS:
        raise ValueError(f"method must be one of {RESPONSE_METHODS}, got {method!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("debye_response_integral requires t >= 0")
    if method == "asymptotic":
        return (0.5 * math.pi * np.cos(Omega * t_arr))[()]
    if method == "special":
        return _response_special(spec.omega_D, Omega, t_arr)[()]
    flat = [_response_quadrature(spec.omega_D, Omega, float(tt)) for tt in t_arr.reshape(-1)]
    return np.array(flat).reshape(t_arr.shape)[()]


# --- spectrum ------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumResult:
    tau: np.ndarray  # s
    equilibrium: np.ndarray  # V^2
    driven: np.ndarray  # V^2
    bandwidth: float  # Hz
    provenance: str = "quadrature"

    @property
    def total(self) -> np.ndarray:
        return self.equilibrium + self.driven

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("tau_s", "equilibrium_V2", "driven_V2", "total_V2"))
            for row in zip(self.tau, self.equilibrium, self.driven, self.total):
                w.writerow([repr(float(c)) for c in row])


def _continuum_shift(spec: DebyeSpec, protocol: FieldProtocol):
    pref = protocol.E0 * protocol.Omega * spec.qbar * spec.nu**2 * spec.A_D

    def D(t):
        return pref * _response_special(spec.omega_D, protocol.Omega, np.asarray(t, dtype=float))

    return D


def _continuum_equilibrium(spec: DebyeSpec, ctx: ThermalContext, tau: float) -> float:
    # sum -> int over Debye modes with m_a = mbar A_D w^2 dw
    def f(w):
        return HBAR * spec.mbar * spec.A_D * spec.nu**4 * w * thermal_factor(w, ctx) * math.cos(w * tau)

    edges = [0.0, spec.omega_D]
    if tau > 0:
        edges = list(np.linspace(0.0, spec.omega_D, max(2, int(spec.omega_D * tau / math.pi) + 2)))
    lo_pad = spec.omega_D * 1e-300
    return sum(integrate.quad(f, max(a, lo_pad), b, epsrel=1e-10, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]))


def _window_integral(f, length: float, n_chunks: int, epsrel: float, max_nodes: int = 4096) -> float:
    """``int_0^length f`` by composite Gauss-Legendre, doubling the nodes until two passes agree.

    ``f`` must accept an array of times; each chunk spans about one drive period.
    """
    edges = np.linspace(0.0, length, n_chunks + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    prev = None
    n = 32
    while n <= max_nodes:
        x, w = np.polynomial.legendre.leggauss(n)
        val = float(np.sum(f(mid + half * x[None, :]) * w[None, :] * half))
        if prev is not None and abs(val - prev) <= epsrel * abs(val) + 1e-300:
            return val
        prev = val
        n *= 2
    raise ArithmeticError(f"window integral did not reach epsrel={epsrel:g} with {max_nodes} nodes")


def noise_spectrum(bath: Union[BathSpec, DebyeSpec], ctx: ThermalContext, circuit: CircuitParams,
                   protocol: FieldProtocol, delta_f: float, tau, method: str = "quadrature",
                   epsrel: float = 1e-8) -> SpectrumResult:
    """Windowed voltage-noise spectrum ``S(tau)`` in V^2.

    The driven term is ``(df / 4 pi) int_0^{2 pi/df} D(t + tau) D(t) dt /
    lambda**2`` with ``D`` the exact drive shift of the bath (per-mode for a
    discrete bath, the sine/cosine-integral form for a continuum Debye
    bath), integrated by Gauss-Legendre with node doubling until two
    successive estimates agree to ``epsrel``.

    Raises
    ------
    ConfigurationError
        If ``delta_f <= 0`` or the method is unknown.
    """
    if not (math.isfinite(delta_f) and delta_f > 0):
        raise ConfigurationError(f"bandwidth delta_f must be > 0, got {delta_f!r}")
    if method != "quadrature":
        raise ConfigurationError(f"noise_spectrum supports method='quadrature', got {method!r}")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    lam2 = circuit.lam**2
    if isinstance(bath, DebyeSpec):
        _check_band(bath, protocol.Omega)
        D = _continuum_shift(bath, protocol)
        eq = np.array([_continuum_equilibrium(bath, ctx, abs(tt)) for tt in taus]) / lam2
    else:
        def D(t):
            return drive_shift(bath, protocol, t)

        eq = np.asarray(analytic_sym_correlation(bath, ctx, taus, 0.0)) / lam2

    window = 2.0 * math.pi / delta_f
    driven = np.zeros_like(taus)
    if protocol.E0 != 0:
        n_chunks = max(1, int(math.ceil(window * protocol.Omega / (2.0 * math.pi))))
        for i, tt in enumerate(taus):
            acc = _window_integral(lambda t, tt=tt: np.asarray(D(t + tt)) * np.asarray(D(t)),
                                   window, n_chunks, epsrel)
            driven[i] = delta_f / (4.0 * math.pi) * acc / lam2
    return SpectrumResult(taus, np.asarray(eq, dtype=float).reshape(taus.shape), driven, float(delta_f))


def driven_bath_spectrum_closed(material: MaterialPreset, circuit: CircuitParams, delta_f: float,
                                Omega: float, tau, E0: float):
    """Closed form ``(pi**3/8) A_D**2 nu**4 df Omega cos(Omega tau) qbar**2 E0**2 / lambda**2``."""
    group = (material.qbar * E0 / circuit.lam) ** 2
    pref = math.pi**3 / 8.0 * material.A_D**2 * material.nu**4 * delta_f * Omega
    return (pref * np.cos(Omega * np.asarray(tau, dtype=float)) * group)[()]


def driven_bath_spectrum_rederived(material: MaterialPreset, circuit: CircuitParams, delta_f: float,
                                   Omega: float, tau, E0: float):
    """Large-``wD t`` limit of the windowed driven term for ``Omega = delta_f``.

    Substituting ``(pi/2) cos(Omega t)`` for the response integral and
    averaging over one drive period gives ``(pi**2/16) Omega**2`` in place
    of ``(pi**3/8) df Omega``.
    """
    group = (material.qbar * E0 / circuit.lam) ** 2
    pref = math.pi**2 / 16.0 * material.A_D**2 * material.nu**4 * Omega**2
    return (pref * np.cos(Omega * np.asarray(tau, dtype=float)) * group)[()]


def averaged_driven_noise(material: MaterialPreset, circuit: CircuitParams, delta_f: float,
                          Omega: float, T_window: float, E0: float) -> float:
    """Closed form averaged over ``[0, T]``: ``cos(Omega tau)`` becomes ``sin(Omega T)/(Omega T)``."""
    if not T_window > 0:
        raise ConfigurationError(f"T_window must be > 0, got {T_window!r}")
    group = (material.qbar * E0 / circuit.lam) ** 2
    return math.pi**3 / 8.0 * material.A_D**2 * material.nu**4 * delta_f * math.sin(Omega * T_window) / T_window * group


def unit_sinc_window(Omega: float, guess: float = 0.9) -> float:
    """Window ``T`` (s) near ``guess`` with ``sin(Omega T) / T = 1`` per second.

    Solved as the fixed point ``T = (2 pi k + asin T) / Omega`` on the rising
    branch closest to ``guess``; the map contracts by ``1/Omega``.
    """
    if not (Omega > 1.0 and 0 < guess < 1):
        raise ValueError("need Omega > 1 rad/s and 0 < guess < 1 s")
    k = max(1, round((Omega * guess - math.asin(guess)) / (2.0 * math.pi)))
    T = guess
    for _ in range(100):
        T_new = (2.0 * math.pi * k + math.asin(min(T, 1.0))) / Omega
        if T_new == T:
            break
        T = T_new
    return T


def classical_nyquist_level(R: float, ctx: ThermalContext) -> float:
    """``4 R k_B T`` in V^2/Hz."""
    if R < 0:
        raise CircuitError(f"R must be >= 0, got {R!r}")
    if ctx.is_zero:
        raise DomainError("classical Nyquist level needs T > 0")
    return 4.0 * R * ctx.kT


def flat_resistance_equilibrium(bath: BathSpec, R: float, ctx: ThermalContext, tau=0.0):
    """Equilibrium term ``sum m_a hbar w_a R_a f(w_a) cos(w_a tau)`` with flat ``R_a``.

    Every mode carries ``R_a = 2 R / sum(m_a)`` so that ``1/2 sum m_a R_a = R``;
    in the high-temperature limit the value at ``tau = 0`` is ``4 R k_B T``
    (V^2/Hz).
    """
    Ra = 2.0 * R / float(np.sum(bath.mass))
    amp = bath.mass * HBAR * bath.omega * Ra * thermal_factor(bath.omega, ctx)
    tau = np.asarray(tau, dtype=float)
    return (np.cos(np.multiply.outer(tau, bath.omega)) @ amp)[()]


# --- copper estimate -------------------------------------------------------------

@dataclass(frozen=True)
class CopperReport:
    omega_D: float
    Omega: float
    delta_f: float
    E0: float
    group_V2: float
    s_db_closed: float
    s_db_quadrature: float
    s_db_rederived: float
    quadrature_over_closed: float
    T_window: float
    s_db_averaged: float
    rms_closed: float
    rms_averaged: float
    ratio_closed_vs_reference: float
    ratio_averaged_vs_reference: float
    ratio_rms_vs_reference: float
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "extras"}
        d.update(self.extras)
        return d


def copper_estimate(material: MaterialPreset = COPPER, circuit: CircuitParams = COPPER_CIRCUIT,
                    Omega: float = 1e12, delta_f: float = 1e12, group_volts: float = 1.0,
                    ion_mass: float = COPPER_ION_MASS) -> CopperReport:
    """Driven-bath noise of a THz-driven copper wire.

    ``E0`` is chosen so that ``qbar E0 / lambda`` equals ``group_volts``.
    The averaged estimate uses the window ``T`` with ``sin(Omega T)/T = 1``
    per second, the literal reading of an order-one window factor.
    """
    E0 = group_volts * circuit.lam / material.qbar
    group = (material.qbar * E0 / circuit.lam) ** 2
    closed = float(driven_bath_spectrum_closed(material, circuit, delta_f, Omega, 0.0, E0))
    rederived = float(driven_bath_spectrum_rederived(material, circuit, delta_f, Omega, 0.0, E0))
    spec = material.debye_spec(ion_mass)
    quad = float(noise_spectrum(spec, ThermalContext.ground_state(), circuit, FieldProtocol(E0, Omega),
                                delta_f, 0.0).driven[0])
    T = unit_sinc_window(Omega)
    averaged = averaged_driven_noise(material, circuit, delta_f, Omega, T, E0)
    rms_avg = math.sqrt(averaged)
    return CopperReport(
        omega_D=material.omega_D, Omega=Omega, delta_f=delta_f, E0=E0, group_V2=group,
        s_db_closed=closed, s_db_quadrature=quad, s_db_rederived=rederived,
        quadrature_over_closed=quad / closed, T_window=T, s_db_averaged=averaged,
        rms_closed=math.sqrt(closed), rms_averaged=rms_avg,
        ratio_closed_vs_reference=closed / REFERENCE_S_DB, ratio_averaged_vs_reference=averaged / REFERENCE_S_DB,
        ratio_rms_vs_reference=rms_avg / REFERENCE_RMS,
        extras={"group_read_as_volts": math.sqrt(group)},
    )
