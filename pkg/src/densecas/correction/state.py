"""Fixed-length observation vectors for the correction network."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..core import PairwiseObservation, wrap_angle
from ..dynamics import observe_arrays

SUBSTATE_DIM = 5
DEST_DIM = 3


class BuilderKind(enum.Enum):
    SECTOR = "sector"
    CLOSEST = "closest"


def state_dim(n_slots):
    return SUBSTATE_DIM * n_slots + DEST_DIM


@dataclass(frozen=True)
class DestinationObservation:
    theta_dest: float
    rho_dest: float
    rho_dest_prev: float

    def __post_init__(self):
        if self.rho_dest < 0 or self.rho_dest_prev < 0:
            raise ValueError("destination distances must be >= 0")
        if not -math.pi <= self.theta_dest <= math.pi:
            raise ValueError("theta_dest must lie in [-pi, pi]")

    def as_array(self):
        return np.array([self.theta_dest, self.rho_dest, self.rho_dest_prev])


@dataclass(frozen=True)
class CorrectionState:
    sub_states: np.ndarray
    dest: DestinationObservation
    builder_kind: BuilderKind

    @property
    def n_slots(self):
        return len(self.sub_states)

    def to_vector(self):
        return np.concatenate([np.asarray(self.sub_states, dtype=float).ravel(), self.dest.as_array()])

    def observations(self):
        return [PairwiseObservation(*row) for row in self.sub_states]

    @classmethod
    def from_vector(cls, vec, n_slots, kind):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (state_dim(n_slots),):
            raise ValueError(f"expected {state_dim(n_slots)} values, got {vec.shape}")
        return cls(vec[:-DEST_DIM].reshape(n_slots, SUBSTATE_DIM).copy(),
                   DestinationObservation(*vec[-DEST_DIM:]), BuilderKind(kind))


def sector_index(theta, n_slots):
    """0-based sector of a relative bearing; sector 0 spans [0, 2pi/N) counterclockwise."""
    ang = np.mod(np.asarray(theta, dtype=float), 2.0 * math.pi)
    return np.minimum((ang / (2.0 * math.pi / n_slots)).astype(int), n_slots - 1)


def sector_slots(obs, n_slots):
    """Keep the closest observation per sector; empty sectors stay zero."""
    obs = np.asarray(obs, dtype=float).reshape(-1, SUBSTATE_DIM)
    slots = np.zeros((n_slots, SUBSTATE_DIM))
    if len(obs) == 0:
        return slots
    sec = sector_index(obs[:, 1], n_slots)
    # sector, then range, then the remaining fields so ties do not depend on input order
    order = np.lexsort(tuple(obs.T[::-1]) + (sec,))
    first = np.r_[True, sec[order][1:] != sec[order][:-1]]
    keep = order[first]
    slots[sec[keep]] = obs[keep]
    return slots


def closest_slots(obs, n_slots):
    """Up to ``n_slots`` observations sorted by range, zero rows trailing."""
    obs = np.asarray(obs, dtype=float).reshape(-1, SUBSTATE_DIM)
    slots = np.zeros((n_slots, SUBSTATE_DIM))
    if len(obs) == 0:
        return slots
    # full-row lexsort makes the result independent of input order on range ties
    order = np.lexsort(obs.T[::-1])[:n_slots]
    slots[: len(order)] = obs[order]
    return slots


def destination_observation(own, dest, prev_rho_dest):
    dx, dy = dest[0] - own.x, dest[1] - own.y
    rho = math.hypot(dx, dy)
    theta = wrap_angle(math.atan2(dy, dx) - own.phi) if rho > 0 else 0.0
    return DestinationObservation(theta, rho, float(prev_rho_dest))


def _intruder_obs(own, intruders):
    if not intruders:
        return np.zeros((0, SUBSTATE_DIM))
    ix = np.array([s.x for s in intruders])
    iy = np.array([s.y for s in intruders])
    iphi = np.array([s.phi for s in intruders])
    iv = np.array([s.v for s in intruders])
    return observe_arrays(own.x, own.y, own.phi, own.v, ix, iy, iphi, iv)


def build_state_sector(own, intruders, dest, prev_rho_dest, n_slots=4):
    if n_slots < 1:
        raise ValueError("need at least one slot")
    slots = sector_slots(_intruder_obs(own, intruders), n_slots)
    return CorrectionState(slots, destination_observation(own, dest, prev_rho_dest), BuilderKind.SECTOR)


def build_state_closest(own, intruders, dest, prev_rho_dest, n_slots=4):
    if n_slots < 1:
        raise ValueError("need at least one slot")
    slots = closest_slots(_intruder_obs(own, intruders), n_slots)
    return CorrectionState(slots, destination_observation(own, dest, prev_rho_dest), BuilderKind.CLOSEST)


def build_state(kind, own, intruders, dest, prev_rho_dest, n_slots=4):
    if BuilderKind(kind) is BuilderKind.SECTOR:
        return build_state_sector(own, intruders, dest, prev_rho_dest, n_slots)
    return build_state_closest(own, intruders, dest, prev_rho_dest, n_slots)


def slot_fn(kind):
    return sector_slots if BuilderKind(kind) is BuilderKind.SECTOR else closest_slots


def build_vectors(kind, obs, owners, n_owners, dest_obs, n_slots):
    """Batch builder: one state vector per owner from grouped pair observations.

    ``dest_obs`` is an (n_owners, 3) array of (theta_dest, rho_dest, rho_dest_prev).
    """
    fn = slot_fn(kind)
    out = np.zeros((n_owners, state_dim(n_slots)))
    out[:, -DEST_DIM:] = dest_obs
    owners = np.asarray(owners, dtype=np.intp)
    if len(owners) == 0:
        return out
    order = np.argsort(owners, kind="stable")
    owners_sorted = owners[order]
    starts = np.flatnonzero(np.r_[True, owners_sorted[1:] != owners_sorted[:-1]])
    ends = np.r_[starts[1:], len(order)]
    for s, e in zip(starts, ends):
        out[owners_sorted[s], :-DEST_DIM] = fn(obs[order[s:e]], n_slots).ravel()
    return out
