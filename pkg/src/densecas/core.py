"""Domain types and constants shared by the whole package."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Advisory(enum.IntEnum):
    """Discrete CAS output.

    The integer values fix the canonical ordering used for tie-breaking,
    so ``np.argmax`` over a Q-row indexed by advisory already prefers COC.
    """

    COC = 0
    MAINTAIN = 1
    WR = 2
    WL = 3
    SR = 4
    SL = 5


ADVISORIES = tuple(Advisory)
N_ADVISORIES = len(ADVISORIES)

# deg/s; COC is zero in the solver, nominal guidance takes over in simulation
TURN_RATES_DEG = np.array([0.0, 0.0, -5.0, 5.0, -10.0, 10.0])
TURN_RATES = np.deg2rad(TURN_RATES_DEG)

# WL<->WR, SL<->SR; used to mirror Q-rows and advisories across the ownship axis
MIRROR_INDEX = np.array([0, 1, 3, 2, 5, 4])


def turn_rate(a):
    """Turn rate in rad/s commanded by advisory ``a``."""
    return float(TURN_RATES[int(a)])


def turn_rate_deg(a):
    return float(TURN_RATES_DEG[int(a)])


def mirror(a):
    return Advisory(int(MIRROR_INDEX[int(a)]))


def wrap_angle(x):
    """Wrap angles into (-pi, pi]. Works on scalars and arrays."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap_angle requires finite input")
    out = np.pi - np.mod(np.pi - arr, 2.0 * np.pi)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class AircraftState:
    x: float
    y: float
    v: float
    phi: float
    phi_dot: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.v, self.phi, self.phi_dot)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite aircraft state: {vals}")
        if self.v <= 0:
            raise ValueError(f"speed must be positive, got {self.v}")
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class PairwiseObservation:
    """Relative state of one intruder as seen from the ownship."""

    rho: float
    theta: float
    psi: float
    v_own: float
    v_int: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not self.is_empty():
            object.__setattr__(self, "theta", wrap_angle(self.theta))
            object.__setattr__(self, "psi", wrap_angle(self.psi))

    @classmethod
    def empty(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def is_empty(self):
        return self.rho == 0 and self.theta == 0 and self.psi == 0 and self.v_own == 0 and self.v_int == 0

    def as_array(self):
        return np.array([self.rho, self.theta, self.psi, self.v_own, self.v_int])


@dataclass(frozen=True)
class Constants:
    sensing_range: float = 1000.0
    nmac_range: float = 150.0
    dt: float = 1.0
    cruise_speed: float = 30.0
    dest_capture_radius: float = 100.0

    def __post_init__(self):
        if not 0 < self.nmac_range < self.sensing_range:
            raise ValueError("need 0 < nmac_range < sensing_range")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.cruise_speed <= 0 or self.dest_capture_radius < 0:
            raise ValueError("cruise_speed must be positive and dest_capture_radius non-negative")


DEFAULT_CONSTANTS = Constants()
