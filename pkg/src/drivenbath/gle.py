"""
Driven generalized Langevin equation and its microscopic oracle.

:func:`integrate_gle` solves::

    m x'' = -V'(x) + q_eff E(t) + eta(t) - int_0^t K(t - s) x'(s) ds

on the grid of a pre-generated noise path.  The history integral is summed
directly over the stored velocities with 6th-order Gregory end corrections,
and the state advances with the implicit 5-step Adams-Moulton formula (a
6th-order block formula supplies the first five steps).  Only grid values
of the noise are used.

:func:`integrate_microscopic` integrates the particle together with every
bath oscillator using classical RK4.  For ``x(0) = 0``, the counterterm on,
and ``q_eff = q + delta_q(bath)``, eliminating the bath from these equations
gives exactly the GLE above with ``eta = xi - D``; the two integrators are
therefore independent routes to the same trajectory.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .bath import BathSpec, check_resolution, memory_kernel
from .field import FieldProtocol, field_value
from .noise import BathInitialState, NoisePath, ShapeError

__all__ = [
    "FieldProtocol", "field_value", "ParticleParams", "Free", "Harmonic", "TabulatedForce",
    "Trajectory", "integrate_gle", "integrate_microscopic", "delta_q", "microscopic_energy",
    "IntegrationError",
]


class IntegrationError(ValueError):
    """Grid, resolution or regime problem in a trajectory integration."""


@dataclass(frozen=True)
class ParticleParams:
    mass: float  # kg
    charge: float  # C
    q_eff: Optional[float] = None  # C; drive coefficient, defaults to charge

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"particle mass must be > 0, got {self.mass!r}")

    @property
    def drive_charge(self) -> float:
        return self.charge if self.q_eff is None else self.q_eff

    def renormalized(self, bath: BathSpec) -> "ParticleParams":
        """Same particle driven with ``q + delta_q(bath)``."""
        return ParticleParams(self.mass, self.charge, self.charge + delta_q(bath))


@dataclass(frozen=True)
class Free:
    quadratic = True

    def force(self, x, mass):
        return np.zeros_like(np.asarray(x, dtype=float))

    def stiffness(self, x, mass):
        return 0.0

    def energy(self, x, mass):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Harmonic:
    omega0: float  # rad/s
    quadratic = True

    def __post_init__(self):
        if not self.omega0 >= 0:
            raise ValueError(f"omega0 must be >= 0, got {self.omega0!r}")

    def force(self, x, mass):
        return -mass * self.omega0**2 * np.asarray(x, dtype=float)

    def stiffness(self, x, mass):
        return mass * self.omega0**2

    def energy(self, x, mass):
        return 0.5 * mass * self.omega0**2 * np.asarray(x, dtype=float) ** 2


@dataclass(frozen=True)
class TabulatedForce:
    """Force ``-dV/dx`` tabulated on a strictly increasing grid, linear in between."""

    x: np.ndarray
    values: np.ndarray
    quadratic = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        f = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise ValueError("tabulated force needs matching 1-D arrays with >= 2 points")
        if np.any(np.diff(x) <= 0):
            raise ValueError("tabulated force grid must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", f)

    def force(self, x, mass):
        return np.interp(x, self.x, self.values)

    def stiffness(self, x, mass):
        i = int(np.clip(np.searchsorted(self.x, x) - 1, 0, self.x.size - 2))
        return -(self.values[i + 1] - self.values[i]) / (self.x[i + 1] - self.x[i])

    def energy(self, x, mass):
        # V(x) = -int_{x_0}^{x} F
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.x))])
        xs = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.x, xs) - 1, 0, self.x.size - 2)
        dx = xs - self.x[i]
        f = self.force(xs, mass)
        return -(cum[i] + 0.5 * (self.values[i] + f) * dx)


Potential = Union[Free, Harmonic, TabulatedForce]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray  # s
    x: np.ndarray  # m
    v: np.ndarray  # m/s
    bath_x: Optional[np.ndarray] = field(default=None, repr=False)  # (len(t), N)
    bath_v: Optional[np.ndarray] = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_s", "x_m", "v_m_s"))
            for row in zip(self.t, self.x, self.v):
                w.writerow([repr(float(c)) for c in row])


def delta_q(bath: BathSpec) -> float:
    """Bath-induced drive charge ``M(0) = sum q_a nu_a^2 / w_a^2`` in C."""
    return float(np.sum(bath.delay_weights))


def _grid_step(t: np.ndarray) -> float:
    if t.ndim != 1 or t.size < 2:
        raise IntegrationError("integration grid needs at least two points")
    dt = t[1] - t[0]
    if not dt > 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0.0):
        raise IntegrationError("integration grid must be uniform and increasing")
    return float(dt)


def _interp_weights(nodes, a: float, b: float) -> np.ndarray:
    """Weights ``w`` with ``sum w_j f(nodes_j) = int_a^b p`` for the interpolant ``p`` of ``f``."""
    nodes = np.asarray(nodes, dtype=float)
    k = np.arange(nodes.size)
    V = nodes[None, :] ** k[:, None]
    moments = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    return np.linalg.solve(V, moments)


# 6th-order Gregory end weights (units of the step).
_GREGORY_END = np.array([19087.0, 84199.0, 37738.0, 75242.0, 55031.0, 61343.0]) / 60480.0
_ORDER = _GREGORY_END.size  # nodes per local interpolant
_START = _ORDER - 1  # steps supplied by the start-up block


def quadrature_weights(n: int) -> np.ndarray:
    """6th-order weights for ``int_0^{n h} f`` on ``n + 1`` equispaced points.

    Below ``2 * 6`` intervals the weights come from local degree-5 (or lower)
    interpolants; above, from the Gregory end corrections.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n <= _START:
        return _interp_weights(np.arange(n + 1), 0.0, float(n)) if n else np.zeros(1)
    w = np.zeros(n + 1)
    if n < 2 * _ORDER:
        w[:_ORDER] += _interp_weights(np.arange(_ORDER), 0.0, float(_START))
        w[n - _START:] += _interp_weights(np.arange(n - _START, n + 1), float(_START), float(n))
        return w
    w[:] = 1.0
    w[:_ORDER] = _GREGORY_END
    w[-_ORDER:] = _GREGORY_END[::-1]
    return w


class _History:
    """Running sums ``h * sum_j w_j K(t_n - t_j) v_j`` split into known and endpoint parts."""

    def __init__(self, K: np.ndarray, h: float):
        self.K = K
        self.h = h

    def known(self, n: int, v: np.ndarray) -> float:
        """Contribution of ``v_0 .. v_{n-1}`` to the integral up to ``t_n``."""
        if n == 0:
            return 0.0
        K = self.K
        if n < 2 * _ORDER:
            w = quadrature_weights(n)
            return self.h * float(np.dot(w[:n] * K[n:0:-1], v[:n]))
        s = float(np.dot(K[n:0:-1], v[:n]))
        for j in range(_ORDER):
            s += (_GREGORY_END[j] - 1.0) * K[n - j] * v[j]
        for j in range(1, _ORDER):
            s += (_GREGORY_END[j] - 1.0) * K[j] * v[n - j]
        return self.h * s

    def endpoint(self, n: int) -> float:
        """Coefficient of ``v_n`` in the integral up to ``t_n``."""
        if n == 0:
            return 0.0
        return self.h * quadrature_weights(n)[-1] * self.K[0]


# implicit Adams-Moulton, 5 steps: y_k = y_{k-1} + h * sum_i AM[i] f_{k-i}
_AM = _interp_weights([1.0, 0.0, -1.0, -2.0, -3.0, -4.0], 0.0, 1.0)
_TOL = 4e-16
_MAXITER = 200


def _block(nb: int) -> np.ndarray:
    """Rows ``k = 1..nb``: ``y_k = y_0 + h * sum_j B[k-1, j] f_j`` over nodes ``0..nb``."""
    nodes = np.arange(nb + 1)
    return np.array([_interp_weights(nodes, 0.0, float(k)) for k in range(1, nb + 1)])


def integrate_gle(particle: ParticleParams, potential: Potential, bath: Optional[BathSpec],
                  noise: NoisePath, field: FieldProtocol, grid=None,
                  x0: float = 0.0, v0: float = 0.0) -> Trajectory:
    """Integrate the driven GLE on the noise path's grid.

    Parameters
    ----------
    particle
        Mass and drive coefficient; the drive force is ``particle.drive_charge * E(t)``.
    potential
        :class:`Free`, :class:`Harmonic` or :class:`TabulatedForce`.
    bath
        Supplies ``K(t)``; ``None`` means no friction.
    noise
        ``eta`` on a uniform grid (it must already contain ``-D(t)`` if the
        bath is driven).
    grid
        Optional grid; must equal ``noise.t`` exactly.

    Raises
    ------
    IntegrationError
        Grid mismatch, under-resolved grid, or quantum-sampled noise with an
        anharmonic potential.
    """
    t = np.asarray(noise.t, dtype=float)
    if grid is not None and not np.array_equal(np.asarray(grid, dtype=float), t):
        raise IntegrationError("integrate_gle: noise path is on a different grid")
    h = _grid_step(t)
    if noise.regime == "quantum-wigner" and not potential.quadratic:
        raise IntegrationError(
            "Wigner-sampled noise is only valid with quadratic potentials (Free, Harmonic); "
            "an anharmonic potential would mix quantum and classical statistics"
        )
    if bath is not None:
        try:
            check_resolution(bath, h)
        except ValueError as exc:
            raise IntegrationError(str(exc)) from exc
        K = np.asarray(memory_kernel(bath, t - t[0]), dtype=float)
    else:
        K = np.zeros_like(t)

    m = particle.mass
    drive = particle.drive_charge * np.asarray(field_value(field, t)) + np.asarray(noise.values, dtype=float)
    n_steps = t.size
    x = np.zeros(n_steps)
    v = np.zeros(n_steps)
    a = np.zeros(n_steps)
    hist = _History(K, h)

    x[0], v[0] = x0, v0
    a[0] = (potential.force(x0, m) + drive[0]) / m

    # start-up block: steps 1..nb from the degree-nb interpolant of the
    # derivatives; the history integrand uses K's even extension
    nb = min(_START, n_steps - 1)
    block = _block(nb)
    lag = np.abs(np.arange(nb + 1)[:, None] - np.arange(nb + 1)[None, :])
    for _ in range(_MAXITER):
        old = np.concatenate([x[1:nb + 1], v[1:nb + 1], a[1:nb + 1]])
        x[1:nb + 1] = x[0] + h * block @ v[:nb + 1]
        v[1:nb + 1] = v[0] + h * block @ a[:nb + 1]
        for k in range(1, nb + 1):
            mem = h * np.dot(block[k - 1] * K[lag[k]], v[:nb + 1])
            a[k] = (potential.force(x[k], m) + drive[k] - mem) / m
        settled = True
        for arr, prev in zip((x, v, a), np.split(old, 3)):
            scale = np.max(np.abs(arr[:nb + 1]))
            settled &= bool(np.max(np.abs(arr[1:nb + 1] - prev)) <= _TOL * scale)
        if settled:
            break
    else:
        raise IntegrationError("start-up block did not converge")

    beta = _AM[0] * h
    tail = _AM[1:]
    for n in range(nb, n_steps - 1):
        k = n + 1
        X = x[n] + h * np.dot(tail, v[n:n - _START:-1])
        Vk = v[n] + h * np.dot(tail, a[n:n - _START:-1])
        G = drive[k] - hist.known(k, v)
        c = hist.endpoint(k)
        vk = Vk + beta * a[n]
        for _ in range(_MAXITER):
            xk = X + beta * vk
            r = vk - Vk - beta / m * (potential.force(xk, m) + G - c * vk)
            dr = 1.0 + beta / m * (potential.stiffness(xk, m) * beta + c)
            step = r / dr
            vk -= step
            if abs(step) <= _TOL * (abs(vk) + abs(Vk) + 1e-300):
                break
        v[k] = vk
        x[k] = X + beta * vk
        a[k] = (potential.force(x[k], m) + G - c * vk) / m
    return Trajectory(t.copy(), x, v)


def _rk4_affine(A: np.ndarray, b: np.ndarray, h: float):
    """RK4 step for ``y' = A y + b e(t)`` as ``y+ = P y + c0 e0 + ch e_half + c1 e1``."""
    n = A.shape[0]
    hA = h * A
    I = np.eye(n)
    P = I + hA @ (I + hA @ (I / 2 + hA @ (I / 6 + hA / 24)))
    c0 = h / 6 * (I + hA + hA @ hA / 2 + hA @ hA @ hA / 4) @ b
    ch = h / 6 * (4 * I + 2 * hA + hA @ hA / 2) @ b
    c1 = h / 6 * b
    return P, c0, ch, c1


def integrate_microscopic(particle: ParticleParams, potential: Potential, bath: BathSpec,
                          init: BathInitialState, field: FieldProtocol, grid,
                          x0: float = 0.0, v0: float = 0.0, include_counterterm: bool = True,
                          substeps: int = 1) -> Trajectory:
    """Integrate particle and bath oscillators together with classical RK4.

    Equations of motion::

        m x''   = -V'(x) + sum m_a nu_a^2 x_a + q E(t) - [sum m_a nu_a^4 / w_a^2] x
        x_a''   = -w_a^2 x_a + nu_a^2 x + (q_a / m_a) E(t)

    where the bracketed counterterm force is present when
    ``include_counterterm`` is set.  The drive acts with the bare charge
    ``particle.charge``.  ``substeps`` RK4 steps are taken per grid interval.
    """
    if not init.matches(bath):
        raise ShapeError(f"initial state has {init.x.shape} modes, bath has {len(bath)}")
    t = np.asarray(grid, dtype=float)
    h_grid = _grid_step(t)
    substeps = int(substeps)
    if substeps < 1:
        raise IntegrationError("substeps must be >= 1")
    h = h_grid / substeps
    N = len(bath)
    m, q = particle.mass, particle.charge
    w2 = bath.omega**2
    nu2 = bath.nu**2
    coupling = bath.mass * nu2
    ct = float(np.sum(bath.friction_weights)) if include_counterterm else 0.0

    out_x = np.empty(t.size)
    out_v = np.empty(t.size)
    out_bx = np.empty((t.size, N))
    out_bv = np.empty((t.size, N))
    y = np.concatenate([[x0, v0], init.x, init.p / bath.mass])

    def record(i, y):
        out_x[i], out_v[i] = y[0], y[1]
        out_bx[i] = y[2:2 + N]
        out_bv[i] = y[2 + N:]

    record(0, y)
    if potential.quadratic:
        k = potential.stiffness(0.0, m)
        A = np.zeros((2 + 2 * N, 2 + 2 * N))
        A[0, 1] = 1.0
        A[1, 0] = -(k + ct) / m
        A[1, 2:2 + N] = coupling / m
        A[2:2 + N, 2 + N:] = np.eye(N)
        A[2 + N:, 0] = nu2
        A[2 + N:, 2:2 + N] = -np.diag(w2)
        b = np.concatenate([[0.0, q / m], np.zeros(N), bath.charge / bath.mass])
        P, c0, ch, c1 = _rk4_affine(A, b, h)
        for i in range(t.size - 1):
            ts = t[i] + h * np.arange(substeps + 1)
            e = field_value(field, np.concatenate([ts, ts[:-1] + h / 2]))
            e0, eh = e[:substeps + 1], e[substeps + 1:]
            for s in range(substeps):
                y = P @ y + c0 * e0[s] + ch * eh[s] + c1 * e0[s + 1]
            record(i + 1, y)
    else:
        qa = bath.charge / bath.mass

        def deriv(tt, y):
            xx, vv = y[0], y[1]
            bx, bv = y[2:2 + N], y[2 + N:]
            E = field_value(field, tt)
            ax = (potential.force(xx, m) + coupling @ bx - ct * xx + q * E) / m
            return np.concatenate([[vv, ax], bv, -w2 * bx + nu2 * xx + qa * E])

        for i in range(t.size - 1):
            tt = t[i]
            for _ in range(substeps):
                k1 = deriv(tt, y)
                k2 = deriv(tt + h / 2, y + h / 2 * k1)
                k3 = deriv(tt + h / 2, y + h / 2 * k2)
                k4 = deriv(tt + h, y + h * k3)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                tt += h
            record(i + 1, y)
    return Trajectory(t.copy(), out_x, out_v, out_bx, out_bv)


def microscopic_energy(traj: Trajectory, particle: ParticleParams, potential: Potential,
                       bath: BathSpec, include_counterterm: bool = True) -> np.ndarray:
    """Total energy of the undriven closed system along a microscopic trajectory."""
    if traj.bath_x is None:
        raise ValueError("trajectory carries no bath coordinates")
    m = particle.mass
    e = 0.5 * m * traj.v**2 + potential.energy(traj.x, m)
    e = e + 0.5 * traj.bath_v**2 @ bath.mass + 0.5 * traj.bath_x**2 @ (bath.mass * bath.omega**2)
    e = e - traj.x * (traj.bath_x @ (bath.mass * bath.nu**2))
    if include_counterterm:
        e = e + 0.5 * float(np.sum(bath.friction_weights)) * traj.x**2
    return e
