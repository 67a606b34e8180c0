"""Multi-intruder reward with destination shaping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import DEFAULT_CONSTANTS, TURN_RATES_DEG, Advisory
from .state import DEST_DIM, SUBSTATE_DIM


@dataclass(frozen=True)
class CorrectionRewardParams:
    w_rho: float = 1.0
    w_nmac: float = 100.0
    w_a: float = 0.005
    # higher than the pairwise weight: the corrected policy sees every intruder
    # at once, so alert persistence compounds (calibrated against alert frequency)
    w_conflict: float = 0.5
    w_digression: float = 0.01
    w_deviation: float = 0.05
    w_dest: float = 10.0
    dest_capture: float = DEFAULT_CONSTANTS.dest_capture_radius
    rho_nmac: float = DEFAULT_CONSTANTS.nmac_range
    # empty slots are scored as an intruder sitting at this range
    empty_range: float = DEFAULT_CONSTANTS.sensing_range

    def __post_init__(self):
        if min(self.w_rho, self.w_nmac, self.w_a, self.w_conflict, self.w_digression,
               self.w_deviation, self.w_dest, self.dest_capture) < 0:
            raise ValueError("reward weights must be non-negative")


def correction_reward(s, a, p):
    """Reward for state ``s`` (CorrectionState or flat vector) and advisory ``a``."""
    vec = s.to_vector() if hasattr(s, "to_vector") else np.asarray(s, dtype=float)
    return float(correction_reward_batch(vec[None, :], np.array([int(a)]), p)[0])


def correction_reward_batch(vecs, actions, p):
    vecs = np.atleast_2d(np.asarray(vecs, dtype=float))
    actions = np.asarray(actions, dtype=np.intp)
    n_slots = (vecs.shape[1] - DEST_DIM) // SUBSTATE_DIM
    slots = vecs[:, :-DEST_DIM].reshape(len(vecs), n_slots, SUBSTATE_DIM)
    empty = np.all(slots == 0.0, axis=2)
    rho = np.where(empty, p.empty_range, slots[:, :, 0])
    per_slot = -p.w_rho * np.exp(-(rho - p.rho_nmac) / p.rho_nmac)
    per_slot -= p.w_nmac * ((rho <= p.rho_nmac) & ~empty)
    theta_dest, rho_dest, rho_prev = vecs[:, -3], vecs[:, -2], vecs[:, -1]
    r = per_slot.mean(axis=1)
    r -= p.w_a * TURN_RATES_DEG[actions] ** 2
    r -= p.w_conflict * (actions != Advisory.COC)
    r -= p.w_digression * (rho_dest - rho_prev)
    r -= p.w_deviation * np.abs(theta_dest)
    r += p.w_dest * (rho_dest <= p.dest_capture)
    return r
