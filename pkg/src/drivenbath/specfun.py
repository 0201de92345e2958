"""
Scalar special functions used by the analytic bath formulas.

Sine and cosine integrals are evaluated with a power series near the origin
and, beyond ``SERIES_CUTOFF``, through the continued fraction for
``E1(ix)`` (equivalently, the auxiliary functions f and g).  Both branches
accept numpy arrays.

The thermal factor ``coth(hbar*omega / 2 k_B T)`` and the Bose-Einstein
occupation share a single ``expm1`` evaluation, so ``2*n + 1`` reproduces the
thermal factor exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Reduced Planck constant, J s (CODATA 2018, exact).
HBAR = 1.054571817e-34
#: Boltzmann constant, J/K (CODATA 2018, exact).
K_B = 1.380649e-23
#: Elementary charge, C (CODATA 2018, exact).
E_CHARGE = 1.602176634e-19
#: Electron mass, kg (CODATA 2018).
M_ELECTRON = 9.1093837015e-31
#: Atomic mass constant, kg (CODATA 2018).
AMU = 1.66053906660e-27
EULER_GAMMA = 0.57721566490153286061

SERIES_CUTOFF = 4.0
_CF_EPS = 1e-16
_CF_MAXITER = 200


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


@dataclass(frozen=True)
class ThermalContext:
    """Bath temperature.

    ``temperature_K == 0.0`` is the exact zero-temperature (ground-state)
    limit; use :meth:`ground_state` to build it explicitly.
    """

    temperature_K: float

    def __post_init__(self):
        T = self.temperature_K
        if not math.isfinite(T) or T < 0:
            raise DomainError(f"temperature_K must be finite and >= 0, got {T!r}")

    @classmethod
    def ground_state(cls) -> "ThermalContext":
        return cls(0.0)

    @property
    def is_zero(self) -> bool:
        return self.temperature_K == 0.0

    @property
    def kT(self) -> float:
        return K_B * self.temperature_K

    def reduced_frequency(self, omega):
        """``hbar*omega / (2 k_B T)``; ``inf`` at T = 0."""
        if self.is_zero:
            return np.full_like(np.asarray(omega, dtype=float), np.inf)[()]
        return HBAR * np.asarray(omega, dtype=float) / (2.0 * self.kT)

    @classmethod
    def from_reduced_frequency(cls, omega: float, x: float) -> "ThermalContext":
        """Temperature at which ``hbar*omega / 2 k_B T`` equals ``x``."""
        return cls(HBAR * omega / (2.0 * K_B * x))


def _check_finite(x: np.ndarray, name: str):
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name}: argument must be finite")


def _si_ci_series(x: np.ndarray):
    """Power series for Si(x) and Ci(x) - gamma - ln(x), 0 <= x <= cutoff."""
    si = x.copy()
    cin = np.zeros_like(x)
    term = x.copy()  # x^(2k+1)/(2k+1)! with sign
    k = 0
    while True:
        # even term: x^(2k+2)/(2k+2)!
        term_even = -term * x / (2 * k + 2)
        cin += term_even / (2 * k + 2)
        term = term_even * x / (2 * k + 3)
        si += term / (2 * k + 3)
        k += 1
        if np.all(np.abs(term) <= 1e-18 * np.maximum(np.abs(si), 1e-300)) or k > 60:
            break
    return si, cin


def _e1_imag_axis(x: np.ndarray) -> np.ndarray:
    """``E1(ix)`` for x > 0 by Lentz's method on the continued fraction."""
    b = 1.0 + 1j * x
    c = np.full_like(b, 1e300)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _CF_MAXITER):
        a = -float(i * i)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _CF_EPS):
            break
    return h * (np.cos(x) - 1j * np.sin(x))


def _si_ci(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    si = np.empty_like(ax)
    ci_rest = np.empty_like(ax)
    small = ax <= SERIES_CUTOFF
    if np.any(small):
        s, c = _si_ci_series(ax[small])
        si[small] = s
        ci_rest[small] = c
    big = ~small
    if np.any(big):
        e1 = _e1_imag_axis(ax[big])
        si[big] = 0.5 * math.pi + e1.imag
        ci_rest[big] = -e1.real
    return x, ax, small, si, ci_rest


def sine_integral(x):
    r"""Sine integral :math:`\mathrm{Si}(x) = \int_0^x \sin t / t\,dt`.

    Odd in ``x``.  Absolute error below 1e-12 for ``|x| <= 1e6``.

    Raises
    ------
    DomainError
        If ``x`` is not finite.
    """
    xa = np.asarray(x, dtype=float)
    _check_finite(xa, "sine_integral")
    x, ax, small, si, _ = _si_ci(xa)
    return (np.sign(x) * si)[()]


def cosine_integral(x):
    r"""Cosine integral :math:`\mathrm{Ci}(x) = -\int_x^\infty \cos t / t\,dt`, ``x > 0``.

    Raises
    ------
    DomainError
        If any ``x <= 0`` or is not finite.
    """
    xa = np.asarray(x, dtype=float)
    _check_finite(xa, "cosine_integral")
    if np.any(xa <= 0):
        raise DomainError("cosine_integral: requires x > 0")
    x, ax, small, _, rest = _si_ci(xa)
    out = rest.copy()
    out[small] = EULER_GAMMA + np.log(ax[small]) + rest[small]
    return out[()]


def thermal_factor(omega, ctx: ThermalContext):
    """``coth(hbar*omega / 2 k_B T)``; exactly 1 at T = 0.

    Evaluated as ``1 + 2/expm1(2x)`` to stay accurate for small ``x``.
    """
    return _thermal(omega, ctx)[0]


def bose_occupation(omega, ctx: ThermalContext):
    """Bose-Einstein occupation ``1/(exp(hbar*omega/k_B T) - 1)``; 0 at T = 0."""
    return _thermal(omega, ctx)[1]


def _thermal(omega, ctx: ThermalContext):
    w = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DomainError("thermal factor requires finite omega > 0")
    if ctx.is_zero:
        nbar = np.zeros_like(w)
    else:
        with np.errstate(over="ignore"):
            nbar = 1.0 / np.expm1(2.0 * ctx.reduced_frequency(w))
    coth = 1.0 + 2.0 * nbar
    return coth[()], nbar[()]


def cin(x):
    r"""Entire cosine integral :math:`\mathrm{Cin}(x) = \int_0^x (1 - \cos t)/t\,dt`.

    Even in ``x`` and free of the logarithmic singularity of ``Ci``, so
    differences ``Cin(b) - Cin(a)`` stay accurate for small arguments.
    """
    xa = np.asarray(x, dtype=float)
    _check_finite(xa, "cin")
    x, ax, small, _, rest = _si_ci(xa)
    with np.errstate(divide="ignore"):
        out = np.where(small, 0.0 - rest, EULER_GAMMA + np.log(ax) - rest)
    return out[()]
