"""Multi-threat resolution from pairwise Q-values.

Each intruder in sensing range defines a pairwise sub-problem; its
interpolated Q-row is fused with the others (elementwise min, elementwise
sum, or the closest intruder's row) and the fused row is acted on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import N_ADVISORIES, Advisory
from .solver import extract_action, lookup_batch


class FusionKind(enum.Enum):
    MAX_MIN = "maxmin"
    MAX_SUM = "maxsum"
    CLOSEST_ONLY = "closest"


@dataclass
class MultiObservation:
    intruders: list = field(default_factory=list)
    own_dest: object = None

    def as_array(self):
        if not self.intruders:
            return np.zeros((0, 5))
        return np.array([o.as_array() if hasattr(o, "as_array") else o for o in self.intruders], dtype=float)


def fuse(rows, kind, dists=None):
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("fuse needs at least one Q-row; issue COC for empty airspace")
    kind = FusionKind(kind)
    if kind is FusionKind.MAX_MIN:
        return rows.min(axis=0)
    if kind is FusionKind.MAX_SUM:
        return rows.sum(axis=0)
    if dists is None or len(dists) != len(rows):
        raise ValueError("closest-only fusion needs one distance per row")
    # argmin returns the first minimum, so equal ranges keep list order
    return rows[int(np.argmin(dists))].copy()


def fuse_groups(rows, owners, n_owners, kind, dists=None):
    """Fuse Q-rows grouped by owner index.

    Returns ``(fused, has_threat)`` with ``fused`` of shape (n_owners, 6);
    owners with no rows get zeros and ``has_threat`` False.
    """
    rows = np.asarray(rows, dtype=float)
    owners = np.asarray(owners, dtype=np.intp)
    kind = FusionKind(kind)
    fused = np.zeros((n_owners, N_ADVISORIES))
    has = np.zeros(n_owners, dtype=bool)
    if len(rows) == 0:
        return fused, has
    order = np.argsort(owners, kind="stable")
    rows, owners = rows[order], owners[order]
    starts = np.flatnonzero(np.r_[True, owners[1:] != owners[:-1]])
    keys = owners[starts]
    has[keys] = True
    if kind is FusionKind.MAX_MIN:
        fused[keys] = np.minimum.reduceat(rows, starts, axis=0)
    elif kind is FusionKind.MAX_SUM:
        fused[keys] = np.add.reduceat(rows, starts, axis=0)
    else:
        d = np.asarray(dists, dtype=float)[order]
        ends = np.r_[starts[1:], len(rows)]
        for k, s, e in zip(keys, starts, ends):
            fused[k] = rows[s + int(np.argmin(d[s:e]))]
    return fused, has


def decomposed_qvalues(q, obs, kind):
    """Fused Q-row for a multi-threat observation, or None with no intruders."""
    arr = obs.as_array() if hasattr(obs, "as_array") else np.atleast_2d(np.asarray(obs, dtype=float))
    if len(arr) == 0:
        return None
    return fuse(lookup_batch(q, arr), kind, arr[:, 0])


def decomposition_policy(q, obs, kind=FusionKind.MAX_MIN):
    qv = decomposed_qvalues(q, obs, kind)
    if qv is None:
        return Advisory.COC
    return extract_action(qv)


def corrected_qvalues(q_lo, delta, w_c):
    if not 0.0 <= w_c <= 1.0:
        raise ValueError(f"correction weight must lie in [0, 1], got {w_c}")
    return (1.0 - w_c) * np.asarray(q_lo, dtype=float) + w_c * np.asarray(delta, dtype=float)


def softmax_probabilities(qvalues, temperature=1.0):
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(qvalues, dtype=float) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_policy(qvalues, temperature, rng):
    p = softmax_probabilities(qvalues, temperature)
    return Advisory(int(rng.choice(N_ADVISORIES, p=p)))


def softmax_sample_rows(qrows, temperature, rng):
    """One softmax draw per row, via inverse CDF on a single uniform each."""
    p = softmax_probabilities(qrows, temperature)
    u = rng.random(len(p))
    idx = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(idx, N_ADVISORIES - 1)
