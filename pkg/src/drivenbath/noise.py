"""
Thermal bath sampling, noise paths and fluctuation-dissipation formulas.

Initial bath states are independent Gaussians per mode with zero mean
(equilibrium of the bare bath Hamiltonian).  Two regimes are supported:

``classical``
    Boltzmann variances ``k_B T / (m w^2)`` and ``m k_B T``.
``quantum-wigner``
    Wigner-function variances ``hbar/(2 m w) coth`` and ``m hbar w / 2 coth``.
    For a quadratic bath the real-valued sampled products reproduce the
    symmetrized operator correlations ``<{A, B}>/2`` exactly in distribution.

Reproducibility
---------------
Ensembles are drawn in fixed blocks of :data:`BLOCK_SIZE` realizations.  Block
``b`` uses a generator seeded from ``SeedSequence([master_seed, b])`` and each
realization consumes one contiguous row of ``2N`` normals, so realization
``i`` depends only on ``(master_seed, i)``, never on the ensemble size or the
number of worker threads.

Correlation conventions
-----------------------
The printed equilibrium correlation uses the coefficient
``hbar m_a nu_a^4 / w_a`` (``convention="literal"``), whose classical limit is
``2 k_B T K(t)``.  The second moment of the sampled noise is half of it
(``convention="symmetrized"``): ``hbar m_a nu_a^4 / (2 w_a) coth``, with
classical limit ``k_B T K(t)``.  Both are available; nothing is rescaled
silently.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .bath import BathSpec, memory_kernel
from .field import FieldProtocol
from .specfun import HBAR, ThermalContext, thermal_factor

REGIMES = ("classical", "quantum-wigner")
CONVENTIONS = ("literal", "symmetrized")
BLOCK_SIZE = 4096
RESONANCE_GAP = 1e-9


class ConfigurationError(ValueError):
    """Invalid sampling or experiment configuration."""


class ShapeError(ValueError):
    """Mismatched bath, grid or path shapes."""


class EstimationError(ValueError):
    """Not enough data for the requested estimate."""


def _check_regime(regime: str):
    if regime not in REGIMES:
        raise ConfigurationError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def _convention_scale(convention: str) -> float:
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    return 1.0 if convention == "literal" else 0.5


@dataclass(frozen=True)
class BathInitialState:
    x: np.ndarray  # m
    p: np.ndarray  # kg m/s
    regime: str
    seed: Optional[int]

    def matches(self, bath: BathSpec) -> bool:
        return self.x.shape == (len(bath),) and self.p.shape == (len(bath),)

    @classmethod
    def at_rest(cls, bath: BathSpec) -> "BathInitialState":
        z = np.zeros(len(bath))
        return cls(z, z.copy(), "classical", None)


@dataclass(frozen=True)
class ThermalEnsemble:
    """``count`` sampled bath states stored as ``(count, N)`` arrays."""

    x: np.ndarray
    p: np.ndarray
    regime: str
    master_seed: int

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i) -> BathInitialState:
        return BathInitialState(self.x[i].copy(), self.p[i].copy(), self.regime, self.master_seed)


def thermal_variances(bath: BathSpec, ctx: ThermalContext, regime: str):
    """Per-mode ``(Var[x], Var[p])`` of the equilibrium bath state."""
    _check_regime(regime)
    m, w = bath.mass, bath.omega
    if regime == "classical":
        kT = ctx.kT
        return kT / (m * w**2), m * kT
    f = thermal_factor(w, ctx)
    return HBAR / (2 * m * w) * f, m * HBAR * w / 2 * f


def _draw_block(master_seed: int, block: int, n: int, n_modes: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, block]))
    return rng.standard_normal((n, 2, n_modes))


def sample_thermal_ensemble(bath: BathSpec, ctx: ThermalContext, regime: str, count: int,
                            master_seed: int, threads: int = 1) -> ThermalEnsemble:
    """Draw ``count`` independent equilibrium bath states.

    The result is a pure function of ``(bath, ctx, regime, master_seed)``
    row by row; ``threads`` only changes wall-clock time.
    """
    _check_regime(regime)
    master_seed = _check_seed(master_seed)
    if int(count) != count or count < 1:
        raise ConfigurationError(f"count must be a positive integer, got {count!r}")
    count = int(count)
    n = len(bath)
    sx, sp = (np.sqrt(v) for v in thermal_variances(bath, ctx, regime))
    x = np.empty((count, n))
    p = np.empty((count, n))
    if regime == "classical" and ctx.is_zero:
        x.fill(0.0)
        p.fill(0.0)
        return ThermalEnsemble(x, p, regime, master_seed)

    n_blocks = -(-count // BLOCK_SIZE)

    def work(b):
        lo = b * BLOCK_SIZE
        hi = min(count, lo + BLOCK_SIZE)
        z = _draw_block(master_seed, b, hi - lo, n)
        x[lo:hi] = z[:, 0, :] * sx
        p[lo:hi] = z[:, 1, :] * sp

    _run_blocks(work, n_blocks, threads)
    return ThermalEnsemble(x, p, regime, master_seed)


def _run_blocks(work, n_blocks: int, threads: int):
    threads = max(1, int(threads))
    if threads == 1 or n_blocks == 1:
        for b in range(n_blocks):
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(n_blocks)))


def sample_thermal_state(bath: BathSpec, ctx: ThermalContext, regime: str = "classical",
                         rng_seed: int = 0) -> BathInitialState:
    """One equilibrium bath state; equals realization 0 of the ensemble with this seed."""
    return sample_thermal_ensemble(bath, ctx, regime, 1, rng_seed)[0]


@dataclass(frozen=True)
class NoisePath:
    t: np.ndarray  # s, uniform
    values: np.ndarray  # N
    kind: str  # "xi" or "eta"
    regime: Optional[str] = None

    def __post_init__(self):
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ShapeError("NoisePath needs 1-D time and value arrays of equal length")


@dataclass(frozen=True)
class PathEnsemble:
    """Realizations on a shared grid; ``values`` has shape ``(count, len(t))``."""

    t: np.ndarray
    values: np.ndarray
    kind: str
    regime: Optional[str] = None

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> NoisePath:
        return NoisePath(self.t, self.values[i].copy(), self.kind, self.regime)


def _xi_matrices(bath: BathSpec, t: np.ndarray):
    coupling = bath.mass * bath.nu**2
    phase = np.outer(bath.omega, t)
    cx = coupling[:, None] * np.cos(phase)
    cp = (coupling / (bath.mass * bath.omega))[:, None] * np.sin(phase)
    return cx, cp


def xi_values(bath: BathSpec, x0: np.ndarray, p0: np.ndarray, t) -> np.ndarray:
    """``xi(t) = sum m nu^2 [x0 cos(w t) + p0/(m w) sin(w t)]`` for one or many states."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if x0.shape[-1] != len(bath) or p0.shape != x0.shape:
        raise ShapeError(f"initial state has {x0.shape[-1]} modes, bath has {len(bath)}")
    cx, cp = _xi_matrices(bath, t)
    return x0 @ cx + p0 @ cp


def xi_path(bath: BathSpec, init: BathInitialState, grid) -> NoisePath:
    """Bath noise ``xi`` on ``grid`` from the free evolution of ``init``."""
    if not init.matches(bath):
        raise ShapeError(f"initial state has {init.x.shape} modes, bath has {len(bath)}")
    t = np.asarray(grid, dtype=float)
    return NoisePath(t, xi_values(bath, init.x, init.p, t), "xi", init.regime)


def xi_ensemble(bath: BathSpec, ensemble: ThermalEnsemble, grid, threads: int = 1) -> PathEnsemble:
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    cx, cp = _xi_matrices(bath, t)
    out = np.empty((len(ensemble), t.size))
    n_blocks = -(-len(ensemble) // BLOCK_SIZE)

    def work(b):
        sl = slice(b * BLOCK_SIZE, (b + 1) * BLOCK_SIZE)
        out[sl] = ensemble.x[sl] @ cx + ensemble.p[sl] @ cp

    _run_blocks(work, n_blocks, threads)
    return PathEnsemble(t, out, "xi", ensemble.regime)


def _drive_response(omega: np.ndarray, Omega: float, t: np.ndarray) -> np.ndarray:
    """``int_0^t cos(w (t-s)) cos(Omega s) ds`` for every (t, w) pair.

    Off resonance ``(w sin wt - Omega sin Omega t)/(w^2 - Omega^2)``, written in
    the cancellation-free form ``t/2 cos((w+O)t/2) sinc((w-O)t/2) +
    (sin wt + sin Ot)/(2(w+O))``; within ``RESONANCE_GAP`` of ``Omega`` the
    exact limit ``(sin Ot + Ot cos Ot)/(2 Omega)`` is used.
    """
    t = np.asarray(t, dtype=float)[..., None]
    w = np.asarray(omega, dtype=float)
    half_diff = 0.5 * (w - Omega) * t
    first = 0.5 * t * np.cos(0.5 * (w + Omega) * t) * np.sinc(half_diff / math.pi)
    second = (np.sin(w * t) + np.sin(Omega * t)) / (2.0 * (w + Omega))
    out = first + second
    resonant = np.abs(w - Omega) < RESONANCE_GAP * Omega
    if np.any(resonant):
        ot = Omega * t
        limit = (np.sin(ot) + ot * np.cos(ot)) / (2.0 * Omega)
        out = np.where(resonant, limit, out)
    return np.where(t < 0, 0.0, out)


def drive_shift(bath: BathSpec, field: FieldProtocol, t):
    """``D(t) = int_0^t M(t-s) dE/ds ds`` in N, evaluated per mode in closed form."""
    t_arr = np.asarray(t, dtype=float)
    resp = _drive_response(bath.omega, field.Omega, t_arr)
    return (field.E0 * field.Omega * resp @ bath.delay_weights)[()]


def eta_path(xi: NoisePath, bath: BathSpec, field: FieldProtocol, grid=None) -> NoisePath:
    """Effective noise ``eta(t) = xi(t) - D(t)`` on the path's grid."""
    if grid is not None and not np.array_equal(np.asarray(grid, dtype=float), xi.t):
        raise ShapeError("eta_path: xi was sampled on a different grid")
    return NoisePath(xi.t, xi.values - drive_shift(bath, field, xi.t), "eta", xi.regime)


def eta_ensemble(xi: PathEnsemble, bath: BathSpec, field: FieldProtocol) -> PathEnsemble:
    return PathEnsemble(xi.t, xi.values - drive_shift(bath, field, xi.t)[None, :], "eta", xi.regime)


def analytic_sym_correlation(bath: BathSpec, ctx: ThermalContext, t, t2, convention: str = "literal"):
    """Equilibrium noise correlation ``C(t, t')`` in N^2.

    ``literal``: ``sum hbar m nu^4 / w coth(hbar w / 2kT) cos(w (t - t'))``.
    ``symmetrized``: half of that, the second moment of the sampled noise.
    Depends on ``t - t'`` only.
    """
    scale = _convention_scale(convention)
    tau = np.asarray(t, dtype=float) - np.asarray(t2, dtype=float)
    amp = HBAR * bath.mass * bath.nu**4 / bath.omega * thermal_factor(bath.omega, ctx)
    flat = tau.reshape(-1)
    vals = np.cos(np.outer(flat, bath.omega)) @ amp
    return (scale * vals.reshape(tau.shape))[()]


def classical_correlation(bath: BathSpec, ctx: ThermalContext, tau, convention: str = "literal"):
    """High-temperature limit ``2 k_B T K(tau)`` (literal) or ``k_B T K(tau)``."""
    scale = _convention_scale(convention)
    return (2.0 * scale * ctx.kT * np.asarray(memory_kernel(bath, np.abs(tau))))[()]


def analytic_eta_correlation(bath: BathSpec, ctx: ThermalContext, field: FieldProtocol, t, t2,
                             convention: str = "literal"):
    """Driven correlation ``C(t, t') + D(t) D(t')`` for ``t, t' >= 0``."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t < 0) or np.any(t2 < 0):
        raise ValueError("analytic_eta_correlation is defined for t, t' >= 0")
    C = analytic_sym_correlation(bath, ctx, t, t2, convention)
    return (C + np.asarray(drive_shift(bath, field, t)) * np.asarray(drive_shift(bath, field, t2)))[()]


@dataclass(frozen=True)
class CorrelationEstimate:
    lags: np.ndarray  # s
    mean: np.ndarray  # N^2
    stderr: np.ndarray
    count: int
    mode: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("lag_s", "mean", "stderr", "count"))
            for lag, m, s in zip(self.lags, self.mean, self.stderr):
                w.writerow([repr(float(lag)), repr(float(m)), repr(float(s)), self.count])


PathsLike = Union[NoisePath, PathEnsemble, Sequence[NoisePath]]


def _as_matrix(paths: PathsLike):
    if isinstance(paths, NoisePath):
        return paths.t, paths.values[None, :]
    if isinstance(paths, PathEnsemble):
        return paths.t, paths.values
    paths = list(paths)
    if not paths:
        raise EstimationError("no paths given")
    t = paths[0].t
    for p in paths[1:]:
        if not np.array_equal(p.t, t):
            raise ShapeError("all paths must share one grid")
    return t, np.stack([p.values for p in paths])


def _grid_index(t: np.ndarray, value: float, what: str) -> int:
    dt = t[1] - t[0] if t.size > 1 else 1.0
    k = (value - t[0]) / dt
    i = int(round(k))
    if abs(k - i) > 1e-6 or i < 0 or i >= t.size:
        raise EstimationError(f"{what} = {value!r} s is not a grid point of the path")
    return i


def estimate_correlation(paths: PathsLike, lags, mode: str = "ensemble", t_ref: float = 0.0,
                         window: Optional[float] = None, n_blocks: int = 8) -> CorrelationEstimate:
    """Estimate ``<A(t) A(t + tau)>`` from sampled real-valued paths.

    Parameters
    ----------
    paths
        A single path, a list of paths, or a :class:`PathEnsemble`.
    lags
        Non-negative lags, each a multiple of the grid step.
    mode
        ``"ensemble"``: average ``A(t_ref) A(t_ref + tau)`` over realizations
        (needs at least two).  ``"time-average"``: per path,
        ``(1/W) int_{t_ref}^{t_ref+W} A(s) A(s + tau) ds`` by the trapezoidal
        rule; the standard error comes from the spread across paths, or from
        ``n_blocks`` sub-windows when only one path is given.
    window
        Averaging window ``W`` in seconds for time-average mode; defaults to
        the longest window the path supports.
    """
    t, V = _as_matrix(paths)
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if np.any(lags < 0):
        raise EstimationError("lags must be >= 0")
    count = V.shape[0]
    i0 = _grid_index(t, t_ref, "t_ref")
    dt = t[1] - t[0] if t.size > 1 else 0.0
    shifts = [int(round(l / dt)) if dt else 0 for l in lags]
    for l, k in zip(lags, shifts):
        if dt and abs(l / dt - k) > 1e-6:
            raise EstimationError(f"lag {l!r} s is not a multiple of the grid step {dt!r} s")

    if mode == "ensemble":
        if count < 2:
            raise EstimationError(f"ensemble mode needs >= 2 paths, got {count}")
        if i0 + max(shifts) >= t.size:
            raise EstimationError(
                f"path ends at {t[-1]!r} s; lag {lags.max()!r} s from t_ref needs {t[0] + (i0 + max(shifts)) * dt!r} s"
            )
        prods = V[:, [i0]] * V[:, [i0 + k for k in shifts]]
        mean = prods.mean(axis=0)
        stderr = prods.std(axis=0, ddof=1) / math.sqrt(count)
        return CorrelationEstimate(lags, mean, stderr, count, "ensemble")

    if mode != "time-average":
        raise ConfigurationError(f"unknown averaging mode {mode!r}")
    kmax = max(shifts)
    avail = t.size - 1 - i0 - kmax
    if window is None:
        nw = avail
    else:
        nw = int(round(window / dt))
        if abs(window / dt - nw) > 1e-6:
            raise EstimationError(f"window {window!r} s is not a multiple of the grid step")
    if nw < 1 or nw > avail:
        need = (i0 + kmax + max(nw, 1)) * dt
        raise EstimationError(
            f"time-average needs path length >= t_ref + max lag + window = {need!r} s, "
            f"path covers {t[-1] - t[0]!r} s"
        )

    def trap_mean(seg):
        return (seg[..., 1:].sum(axis=-1) + seg[..., :-1].sum(axis=-1)) * 0.5 / (seg.shape[-1] - 1)

    means = np.empty((count, len(shifts)))
    block_means = []
    for j, k in enumerate(shifts):
        prod = V[:, i0:i0 + nw + 1] * V[:, i0 + k:i0 + k + nw + 1]
        means[:, j] = trap_mean(prod)
        if count == 1:
            edges = np.linspace(0, nw, n_blocks + 1).round().astype(int)
            block_means.append([trap_mean(prod[0, a:b + 1]) for a, b in zip(edges[:-1], edges[1:]) if b > a])
    if count >= 2:
        mean = means.mean(axis=0)
        stderr = means.std(axis=0, ddof=1) / math.sqrt(count)
    else:
        mean = means[0]
        stderr = np.array([np.std(b, ddof=1) / math.sqrt(len(b)) if len(b) > 1 else 0.0 for b in block_means])
    return CorrelationEstimate(lags, mean, stderr, count, "time-average")


def estimate_two_time(ensemble: PathEnsemble, times, times2):
    """Ensemble ``<A(t) A(t')>`` on a ``len(times) x len(times2)`` grid.

    Returns ``(mean, stderr, count)``.
    """
    t = ensemble.t
    ia = [_grid_index(t, v, "t") for v in np.atleast_1d(times)]
    ib = [_grid_index(t, v, "t'") for v in np.atleast_1d(times2)]
    A = ensemble.values[:, ia]
    B = ensemble.values[:, ib]
    count = A.shape[0]
    if count < 2:
        raise EstimationError(f"ensemble estimate needs >= 2 paths, got {count}")
    prods = A[:, :, None] * B[:, None, :]
    mean = prods.mean(axis=0)
    stderr = prods.std(axis=0, ddof=1) / math.sqrt(count)
    return mean, stderr, count


def estimate_mean(ensemble: PathEnsemble):
    """Ensemble mean and standard error at every grid time."""
    count = len(ensemble)
    if count < 2:
        raise EstimationError(f"ensemble mean needs >= 2 paths, got {count}")
    return ensemble.values.mean(axis=0), ensemble.values.std(axis=0, ddof=1) / math.sqrt(count)
