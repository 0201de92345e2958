"""
Charged harmonic-oscillator baths and their kernels.

A bath is an ordered tuple of :class:`OscillatorMode`.  Two kernels derive
from it:

* the friction memory kernel ``K(t) = sum m_a nu_a^4 / w_a^2 cos(w_a t)``
* the force-delay kernel ``M(t) = sum q_a nu_a^2 / w_a^2 cos(w_a t)``

Both carry a Heaviside factor: they vanish for ``t < 0``.

Debye baths
-----------
:func:`build_debye_bath` discretizes the Debye density of states
``rho(w) = A_D w^2`` on ``[0, w_D]`` into ``N`` cells of equal width ``dw``
with one mode at each cell midpoint.  The number of modes in a cell,
``A_D w_a^2 dw``, is folded into the mode's mass and charge::

    m_a = m_bar * A_D * w_a^2 * dw
    q_a = q_bar * A_D * w_a^2 * dw

so that ``m_a nu^4 / w_a^2 = m_bar nu^4 A_D dw`` and the discrete kernels are
midpoint rules for ``m_bar nu^4 A_D int cos(w t) dw`` and
``q_bar nu^2 A_D int cos(w t) dw``.  In particular ``K(0)`` and ``M(0)`` equal
their continuum values for every ``N``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class BathError(ValueError):
    """Invalid bath construction or unsupported bath operation."""


class ResolutionError(BathError):
    """Time grid too coarse for the fastest bath mode."""


@dataclass(frozen=True)
class OscillatorMode:
    mass: float  # kg
    omega: float  # rad/s
    nu: float  # rad/s
    charge: float = 0.0  # C

    def __post_init__(self):
        vals = (self.mass, self.omega, self.nu, self.charge)
        if not all(math.isfinite(v) for v in vals):
            raise BathError(f"non-finite mode parameter in {self}")
        if self.mass <= 0 or self.omega <= 0 or self.nu < 0:
            raise BathError(f"mode requires mass > 0, omega > 0, nu >= 0; got {self}")


@dataclass(frozen=True)
class DebyeSpec:
    """Continuum Debye bath.

    ``A_D`` defaults to ``9 / omega_D**3``; a material preset may override it.
    """

    omega_D: float  # rad/s
    nu: float  # rad/s
    qbar: float  # C
    mbar: float  # kg
    A_D: Optional[float] = None  # s^3

    def __post_init__(self):
        if not (self.omega_D > 0 and math.isfinite(self.omega_D)):
            raise BathError(f"omega_D must be > 0, got {self.omega_D!r}")
        if self.nu < 0 or self.mbar <= 0:
            raise BathError("DebyeSpec requires nu >= 0 and mbar > 0")
        if self.A_D is None:
            object.__setattr__(self, "A_D", 9.0 / self.omega_D**3)
        elif not self.A_D > 0:
            raise BathError(f"A_D must be > 0, got {self.A_D!r}")

    @classmethod
    def from_prefactor(cls, A_D: float, nu: float, qbar: float, mbar: float) -> "DebyeSpec":
        """Spec with the Debye frequency derived as ``(9/A_D)**(1/3)``."""
        return cls(omega_D=(9.0 / A_D) ** (1.0 / 3.0), nu=nu, qbar=qbar, mbar=mbar, A_D=A_D)

    def memory_kernel(self, t):
        """Continuum ``K(t) = m_bar nu^4 A_D sin(w_D t)/t`` for ``t >= 0``."""
        return self.mbar * self.nu**4 * self.A_D * _sinc_integral(self.omega_D, t)

    def delay_kernel(self, t):
        """Continuum ``M(t) = q_bar nu^2 A_D sin(w_D t)/t`` for ``t >= 0``."""
        return self.qbar * self.nu**2 * self.A_D * _sinc_integral(self.omega_D, t)


def _sinc_integral(wD, t):
    # int_0^wD cos(w t) dw, with theta(t)
    t = np.asarray(t, dtype=float)
    out = wD * np.sinc(wD * t / math.pi)
    return np.where(t < 0, 0.0, out)[()]


@dataclass(frozen=True)
class BathSpec:
    """Ordered, immutable collection of bath modes.

    Modes are kept sorted by frequency.  ``provenance`` records the Debye
    continuum the bath was discretized from, if any.
    """

    modes: tuple
    provenance: Optional[DebyeSpec] = None
    _arrays: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise BathError("a bath needs at least one mode")
        modes = tuple(sorted(modes, key=lambda m: m.omega))
        omegas = [m.omega for m in modes]
        if any(b <= a for a, b in zip(omegas, omegas[1:])):
            raise BathError("bath frequencies must be distinct")
        object.__setattr__(self, "modes", modes)
        arr = {
            "mass": np.array([m.mass for m in modes]),
            "omega": np.array(omegas),
            "nu": np.array([m.nu for m in modes]),
            "charge": np.array([m.charge for m in modes]),
        }
        for a in arr.values():
            a.flags.writeable = False
        object.__setattr__(self, "_arrays", arr)

    @classmethod
    def from_arrays(cls, mass, omega, nu, charge=None, provenance=None) -> "BathSpec":
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        n = omega.size
        mass = np.broadcast_to(np.asarray(mass, dtype=float), (n,))
        nu = np.broadcast_to(np.asarray(nu, dtype=float), (n,))
        charge = np.zeros(n) if charge is None else np.broadcast_to(np.asarray(charge, dtype=float), (n,))
        modes = [OscillatorMode(float(m), float(w), float(v), float(q)) for m, w, v, q in zip(mass, omega, nu, charge)]
        return cls(tuple(modes), provenance)

    def __len__(self):
        return len(self.modes)

    @property
    def mass(self) -> np.ndarray:
        return self._arrays["mass"]

    @property
    def omega(self) -> np.ndarray:
        return self._arrays["omega"]

    @property
    def nu(self) -> np.ndarray:
        return self._arrays["nu"]

    @property
    def charge(self) -> np.ndarray:
        return self._arrays["charge"]

    @property
    def omega_max(self) -> float:
        return float(self.omega[-1])

    @property
    def omega_min(self) -> float:
        return float(self.omega[0])

    @property
    def friction_weights(self) -> np.ndarray:
        """Per-mode amplitudes ``m_a nu_a^4 / w_a^2`` of ``K(t)``."""
        return self.mass * self.nu**4 / self.omega**2

    @property
    def delay_weights(self) -> np.ndarray:
        """Per-mode amplitudes ``q_a nu_a^2 / w_a^2`` of ``M(t)``."""
        return self.charge * self.nu**2 / self.omega**2

    def with_charges(self, charge) -> "BathSpec":
        return BathSpec.from_arrays(self.mass, self.omega, self.nu, charge, self.provenance)


CSV_HEADER = ("mass_kg", "omega_rad_s", "nu_rad_s", "charge_C")


def write_bath_csv(bath: BathSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for m in bath.modes:
            w.writerow([repr(m.mass), repr(m.omega), repr(m.nu), repr(m.charge)])


def read_bath_csv(path) -> BathSpec:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
        raise BathError(f"{path}: expected header {','.join(CSV_HEADER)}")
    modes = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise BathError(f"{Path(path).name}:{lineno}: expected 4 columns, got {len(row)}")
        modes.append(OscillatorMode(*(float(v) for v in row)))
    return BathSpec(tuple(modes))


def build_debye_bath(spec: DebyeSpec, N: int) -> BathSpec:
    """Discretize a Debye continuum into ``N`` equal-width frequency cells.

    See the module docstring for the weight-folding convention.
    """
    if int(N) != N or N < 1:
        raise BathError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    dw = spec.omega_D / N
    omega = (np.arange(N) + 0.5) * dw
    count = spec.A_D * omega**2 * dw
    return BathSpec.from_arrays(
        mass=spec.mbar * count,
        omega=omega,
        nu=spec.nu,
        charge=spec.qbar * count,
        provenance=spec,
    )


def _cos_sum(weights, omega, t):
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    vals = np.cos(np.outer(flat, omega)) @ weights
    vals = np.where(flat < 0, 0.0, vals)
    return vals.reshape(t.shape)[()]


def memory_kernel(bath: BathSpec, t):
    """Friction kernel ``K(t)`` in kg/s^2; zero for ``t < 0``."""
    return _cos_sum(bath.friction_weights, bath.omega, t)


def delay_kernel(bath: BathSpec, t):
    """Force-delay kernel ``M(t)`` in C; zero for ``t < 0``.

    Does not depend on temperature.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise BathError("delay_kernel: t must be finite")
    return _cos_sum(bath.delay_weights, bath.omega, t)


def max_time_step(bath: BathSpec) -> float:
    """Largest step that resolves the fastest mode, ``pi / (10 w_max)``."""
    return math.pi / (10.0 * bath.omega_max)


def check_resolution(bath: BathSpec, dt: float) -> None:
    limit = max_time_step(bath)
    if dt > limit * (1 + 1e-12):
        raise ResolutionError(
            f"time step {dt:.6g} s under-resolves the fastest bath mode "
            f"(w_max = {bath.omega_max:.6g} rad/s); need dt <= {limit:.6g} s"
        )


def uniform_grid(t_max: float, dt: float) -> np.ndarray:
    """Grid ``0, dt, 2dt, ...`` up to ``t_max`` (included when it lands on the grid)."""
    if not dt > 0:
        raise BathError(f"dt must be > 0, got {dt!r}")
    if t_max < 0:
        raise BathError(f"t_max must be >= 0, got {t_max!r}")
    n = int(math.floor(t_max / dt * (1 + 1e-12)))
    return np.arange(n + 1) * dt


@dataclass(frozen=True)
class KernelTable:
    t: np.ndarray  # s
    K: np.ndarray  # kg/s^2
    M: np.ndarray  # C

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_s", "K_kg_s2", "M_C"))
            for row in zip(self.t, self.K, self.M):
                w.writerow([repr(float(v)) for v in row])


def kernel_table(bath: BathSpec, t_max: float, dt: float) -> KernelTable:
    """Tabulate ``K`` and ``M`` on ``[0, t_max]`` with step ``dt``."""
    check_resolution(bath, dt)
    t = uniform_grid(t_max, dt)
    return KernelTable(t=t, K=np.atleast_1d(memory_kernel(bath, t)), M=np.atleast_1d(delay_kernel(bath, t)))


def memory_kernel_transform(spec, omega):
    """One-sided cosine transform of the continuum friction kernel.

    ``K(w) = int_0^inf K(t) cos(w t) dt`` equals ``m_bar nu^4 A_D pi/2`` inside
    the Debye band, half that at ``w = w_D``, and zero above it.

    Parameters
    ----------
    spec : DebyeSpec or BathSpec
        A bath is accepted only if it carries Debye provenance; the transform
        of a finite mode sum is a set of spectral lines and is not defined
        pointwise.
    omega : float or array, rad/s, ``>= 0``
    """
    if isinstance(spec, BathSpec):
        if spec.provenance is None:
            raise BathError(
                "memory_kernel_transform needs a continuum description; "
                "this discrete bath has no Debye provenance"
            )
        spec = spec.provenance
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise BathError("memory_kernel_transform requires finite omega >= 0")
    flat = spec.mbar * spec.nu**4 * spec.A_D * math.pi / 2.0
    out = np.where(w < spec.omega_D, flat, np.where(w == spec.omega_D, flat / 2.0, 0.0))
    return out[()]


def random_bath(rng: np.random.Generator, n_modes: int, omega_range: Sequence[float] = (1.0, 3.0),
                coupling: float = 0.3, particle_mass: float = 1.0, charge_scale: float = 1.0) -> BathSpec:
    """Random discrete bath in reduced units for equivalence tests.

    Mode masses are set so that ``K(0) = coupling * particle_mass * w_min**2``.
    """
    lo, hi = omega_range
    omega = np.sort(rng.uniform(lo, hi, n_modes))
    nu = rng.uniform(0.5, 1.5, n_modes) * np.sqrt(omega)
    raw = rng.uniform(0.5, 1.5, n_modes)
    w = raw * nu**4 / omega**2
    mass = raw * coupling * particle_mass * omega.min() ** 2 / w.sum()
    charge = charge_scale * rng.uniform(0.2, 1.0, n_modes) * mass
    return BathSpec.from_arrays(mass, omega, nu, charge)
