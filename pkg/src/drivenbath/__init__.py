"""Charged harmonic baths driven by an AC field: noise, GLE dynamics and circuit noise."""

__version__ = "0.1.0"

from .specfun import ThermalContext, cosine_integral, sine_integral, thermal_factor  # noqa: E402
from .bath import BathSpec, DebyeSpec, build_debye_bath, delay_kernel, memory_kernel  # noqa: E402
from .field import FieldProtocol  # noqa: E402
from .noise import analytic_eta_correlation, analytic_sym_correlation, drive_shift  # noqa: E402
from .gle import ParticleParams, integrate_gle, integrate_microscopic  # noqa: E402
from .circuit import CircuitParams, MaterialPreset, copper_estimate, noise_spectrum  # noqa: E402

__all__ = [
    "ThermalContext", "sine_integral", "cosine_integral", "thermal_factor",
    "BathSpec", "DebyeSpec", "build_debye_bath", "memory_kernel", "delay_kernel",
    "FieldProtocol", "drive_shift", "analytic_sym_correlation", "analytic_eta_correlation",
    "ParticleParams", "integrate_gle", "integrate_microscopic",
    "CircuitParams", "MaterialPreset", "noise_spectrum", "copper_estimate",
]
