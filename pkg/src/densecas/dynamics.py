"""Kinematics, relative sensing and sigma-point noise sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AircraftState, PairwiseObservation, wrap_angle


@dataclass(frozen=True)
class NoiseModel:
    sigma_v: float = 2.0
    sigma_phidot: float = math.radians(2.0)

    def __post_init__(self):
        if self.sigma_v < 0 or self.sigma_phidot < 0:
            raise ValueError("noise standard deviations must be >= 0")


@dataclass(frozen=True)
class SigmaPointSet:
    """Weighted perturbations; ``points`` has one row per sigma point."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if len(pts) != len(w):
            raise ValueError("points and weights must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    def mean(self):
        return self.weights @ self.points

    def second_moment(self):
        return self.weights @ self.points**2


def axis_sigma_points(stds, center_weight=1.0 / 3.0):
    """Symmetric axis set: one center point plus +/- offsets along each axis.

    With ``d`` dimensions each of the ``2d`` axis points carries weight
    ``(1 - w0) / 2d`` and offset ``std / sqrt(2 w)``, which matches the zero
    mean and the per-dimension variance exactly.
    """
    stds = np.asarray(stds, dtype=float)
    d = len(stds)
    w_axis = (1.0 - center_weight) / (2 * d)
    scale = 1.0 / math.sqrt(2.0 * w_axis)
    points = [np.zeros(d)]
    for i in range(d):
        for sign in (1.0, -1.0):
            p = np.zeros(d)
            p[i] = sign * scale * stds[i]
            points.append(p)
    weights = np.array([center_weight] + [w_axis] * (2 * d))
    return SigmaPointSet(np.array(points), weights)


def sigma_points(noise):
    """Five-point (dv, dphidot) set for one aircraft."""
    return axis_sigma_points([noise.sigma_v, noise.sigma_phidot])


def pair_sigma_points(own_noise, int_noise):
    """Nine-point joint set over (dv_own, dphidot_own, dv_int, dphidot_int).

    Same axis construction as :func:`sigma_points` lifted to four
    dimensions, so each aircraft's marginal moments still match its model.
    """
    return axis_sigma_points(
        [own_noise.sigma_v, own_noise.sigma_phidot, int_noise.sigma_v, int_noise.sigma_phidot]
    )


def step(s, turn_rate, dt):
    """Advance one aircraft: heading first, then position along the new heading."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not math.isfinite(turn_rate):
        raise ValueError("turn rate must be finite")
    phi = wrap_angle(s.phi + turn_rate * dt)
    x = s.x + s.v * math.cos(phi) * dt
    y = s.y + s.v * math.sin(phi) * dt
    return AircraftState(x, y, s.v, phi, turn_rate)


def step_arrays(x, y, v, phi, turn_rate, dt):
    """Vectorized :func:`step`; returns new (x, y, phi)."""
    phi = wrap_angle(np.asarray(phi) + np.asarray(turn_rate) * dt)
    return x + v * np.cos(phi) * dt, y + v * np.sin(phi) * dt, phi


def observe(own, intruder):
    dx = intruder.x - own.x
    dy = intruder.y - own.y
    rho = math.hypot(dx, dy)
    theta = wrap_angle(math.atan2(dy, dx) - own.phi) if rho > 0 else 0.0
    psi = wrap_angle(intruder.phi - own.phi)
    return PairwiseObservation(rho, theta, psi, own.v, intruder.v)


def observe_arrays(ox, oy, ophi, ov, ix, iy, iphi, iv):
    """Vectorized :func:`observe`; returns an (n, 5) array."""
    dx = np.asarray(ix) - ox
    dy = np.asarray(iy) - oy
    rho = np.hypot(dx, dy)
    theta = np.where(rho > 0, wrap_angle(np.arctan2(dy, dx) - ophi), 0.0)
    psi = wrap_angle(np.asarray(iphi) - ophi)
    return np.column_stack(np.broadcast_arrays(rho, theta, psi, ov, iv)).astype(float)
