"""Switched-on sinusoidal drive ``E(t) = E0 sin(Omega t) theta(t)``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FieldProtocol:
    E0: float  # V/m
    Omega: float  # rad/s

    def __post_init__(self):
        if not (math.isfinite(self.E0) and self.E0 >= 0):
            raise ValueError(f"E0 must be finite and >= 0, got {self.E0!r}")
        if not (math.isfinite(self.Omega) and self.Omega > 0):
            raise ValueError(f"Omega must be finite and > 0, got {self.Omega!r}")

    @classmethod
    def off(cls, Omega: float = 1.0) -> "FieldProtocol":
        return cls(0.0, Omega)

    def scaled(self, factor: float) -> "FieldProtocol":
        return FieldProtocol(self.E0 * factor, self.Omega)

    def __call__(self, t):
        return field_value(self, t)

    def rate(self, t):
        """``dE/dt``; the protocol is continuous at 0 so no delta term appears."""
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, self.E0 * self.Omega * np.cos(self.Omega * t))[()]


def field_value(protocol: FieldProtocol, t):
    """``E(t)`` in V/m: zero before switch-on, ``E0 sin(Omega t)`` after."""
    t = np.asarray(t, dtype=float)
    return np.where(t < 0, 0.0, protocol.E0 * np.sin(protocol.Omega * t))[()]
