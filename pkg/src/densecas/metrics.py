"""Safety, efficiency and airspace-impact metrics computed from episode logs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import DEFAULT_CONSTANTS, Advisory
from .dynamics import observe_arrays
from .simulation import WorldView

ENCOUNTER_BINS = ("1", "2", "3", "4", "5", ">=6")


def mean_se(values):
    """Mean and standard error of the mean (zero error for a single value)."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        raise ValueError("no values to aggregate")
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), se


@dataclass(frozen=True)
class EncounterDistribution:
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(ENCOUNTER_BINS),):
            raise ValueError(f"expected {len(ENCOUNTER_BINS)} bins")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("encounter distribution must be non-negative and sum to 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    def as_array(self):
        return np.array(self.probs)

    def multi_threat_probability(self):
        return 1.0 - self.probs[0]


@dataclass
class AirspaceMetrics:
    nmac_per_flight_hour: float
    normalized_route_length: float
    normalized_route_length_se: float
    encounter_distribution: tuple
    d_tv: float
    nmac_severity: float
    nmac_severity_se: float
    speed_efficiency: float
    speed_efficiency_se: float
    flight_hours: float
    n_nmac: int
    dense: bool

    def row(self):
        d = asdict(self)
        enc = d.pop("encounter_distribution")
        for label, p in zip(ENCOUNTER_BINS, enc):
            d[f"enc_{label}"] = p
        return d


def nmac_rate(log):
    hours = log.flight_hours
    if hours <= 0:
        raise ValueError("log has zero flight hours")
    return len(log.nmac_events) / hours


def route_length_ratio(log):
    # the polyline can come out a few ulps shorter than the chord; clip that rounding away
    ratios = [max(1.0, a.path_length / a.nominal_distance) for a in log.aircraft
              if a.arrived and a.nominal_distance > 0]
    if not ratios:
        raise ValueError("no arrived aircraft in log")
    return mean_se(ratios)


def encounter_histogram(counts):
    counts = np.asarray(counts, dtype=int)
    counts = counts[counts >= 1]
    if len(counts) == 0:
        raise ValueError("no encounters: distribution undefined")
    binned = np.minimum(counts, len(ENCOUNTER_BINS)) - 1
    return np.bincount(binned, minlength=len(ENCOUNTER_BINS)).astype(float)


def encounter_distribution(log):
    """Per (aircraft, timestep) intruder counts binned into 1..5 and >=6."""
    counts = log.intruder_counts() if hasattr(log, "intruder_counts") else np.asarray(log)
    h = encounter_histogram(counts)
    p = h / h.sum()
    # renormalize once more so the sum is 1 to within rounding of the last bin
    p[-1] = max(0.0, 1.0 - p[:-1].sum())
    return EncounterDistribution(tuple(p))


def tv_divergence(p, q):
    a = p.as_array() if hasattr(p, "as_array") else np.asarray(p, dtype=float)
    b = q.as_array() if hasattr(q, "as_array") else np.asarray(q, dtype=float)
    if a.shape != b.shape:
        raise ValueError("distributions have different supports")
    return 0.5 * float(np.abs(a - b).sum())


def severity(min_separation, nmac_range=DEFAULT_CONSTANTS.nmac_range):
    return max(0.0, 1.0 - min_separation / nmac_range)


def nmac_severity(events, nmac_range=DEFAULT_CONSTANTS.nmac_range):
    events = events.nmac_events if hasattr(events, "nmac_events") else events
    if not events:
        raise ValueError("no NMAC events")
    return mean_se([severity(e.min_separation if hasattr(e, "min_separation") else e, nmac_range) for e in events])


def speed_efficiency(log, dt=None):
    """Mean closing speed toward the destination over each aircraft's own speed."""
    dt = log.dt if dt is None else dt
    per_aircraft = []
    for a in log.aircraft:
        if len(a.t) < 2:
            continue
        rho = np.hypot(a.dest[0] - a.x, a.dest[1] - a.y)
        closing = -np.diff(rho) / dt
        per_aircraft.append(closing.mean() / a.speed)
    if not per_aircraft:
        raise ValueError("no trajectories with at least two samples")
    return mean_se(per_aircraft)


def summarize(log, reference=None, dense_threshold=0.5, nmac_range=DEFAULT_CONSTANTS.nmac_range):
    """All metrics for one log; ``reference`` is the No-CAS encounter distribution."""
    nan = float("nan")
    try:
        enc = encounter_distribution(log)
    except ValueError:
        enc = None
    try:
        rl, rl_se = route_length_ratio(log)
    except ValueError:
        rl, rl_se = nan, nan
    try:
        sev, sev_se = nmac_severity(log.nmac_events, nmac_range)
    except ValueError:
        sev, sev_se = nan, nan
    try:
        se, se_se = speed_efficiency(log)
    except ValueError:
        se, se_se = nan, nan
    hours = log.flight_hours
    return AirspaceMetrics(
        nmac_per_flight_hour=nmac_rate(log) if hours > 0 else nan,
        normalized_route_length=rl,
        normalized_route_length_se=rl_se,
        encounter_distribution=enc.probs if enc else (nan,) * len(ENCOUNTER_BINS),
        d_tv=tv_divergence(reference, enc) if (reference is not None and enc is not None) else nan,
        nmac_severity=sev,
        nmac_severity_se=sev_se,
        speed_efficiency=se,
        speed_efficiency_se=se_se,
        flight_hours=hours,
        n_nmac=len(log.nmac_events),
        dense=bool(enc is not None and enc.multi_threat_probability() >= dense_threshold),
    )


# policy probes -----------------------------------------------------------


def _probe_view(own_xy, own_phi, own_v, dest_xy, intr_xy, intr_phi, intr_v, sensing_range, dt):
    """Batch of independent single-ownship worlds.

    Ownship ``i`` sits at index ``i``; its intruders follow all ownships and
    only ownships observe (intruders within sensing range).
    """
    n, k = intr_xy.shape[:2]
    ix = intr_xy[..., 0].ravel()
    iy = intr_xy[..., 1].ravel()
    owners = np.repeat(np.arange(n), k)
    others = n + np.arange(n * k)
    obs = observe_arrays(own_xy[owners, 0], own_xy[owners, 1], own_phi[owners], own_v[owners],
                         ix, iy, intr_phi.ravel(), intr_v.ravel())
    keep = obs[:, 0] <= sensing_range
    x = np.r_[own_xy[:, 0], ix]
    y = np.r_[own_xy[:, 1], iy]
    phi = np.r_[own_phi, intr_phi.ravel()]
    v = np.r_[own_v, intr_v.ravel()]
    dx = np.r_[dest_xy[:, 0], ix]
    dy = np.r_[dest_xy[:, 1], iy]
    prev = np.hypot(dx - x, dy - y) + v * dt
    prev[n:] = 0.0
    return WorldView(x, y, v, phi, dx, dy, prev, owners[keep], others[keep], obs[keep])


def alert_frequency(policy, k_intruders, n_samples, rng, constants=DEFAULT_CONSTANTS, speed_range=(25.0, 35.0),
                    dest_range=(2000.0, 5000.0)):
    """Fraction of random k-intruder states where the policy issues a non-COC advisory.

    Intruders are area-uniform over the annulus between NMAC and sensing
    range with uniform headings; the ownship heads at a destination dead
    ahead. Returns (probability, binomial standard error).
    """
    if k_intruders < 1:
        raise ValueError("need at least one intruder")
    n, k = int(n_samples), int(k_intruders)
    r = np.sqrt(rng.uniform(constants.nmac_range**2, constants.sensing_range**2, size=(n, k)))
    b = rng.uniform(-np.pi, np.pi, size=(n, k))
    intr_xy = np.stack([r * np.cos(b), r * np.sin(b)], axis=-1)
    intr_phi = rng.uniform(-np.pi, np.pi, size=(n, k))
    intr_v = rng.uniform(*speed_range, size=(n, k))
    own_v = rng.uniform(*speed_range, size=n)
    dest = np.column_stack([rng.uniform(*dest_range, size=n), np.zeros(n)])
    view = _probe_view(np.zeros((n, 2)), np.zeros(n), own_v, dest, intr_xy, intr_phi, intr_v,
                       constants.sensing_range, constants.dt)
    adv = np.asarray(policy.advise(view, rng))[:n]
    p = float(np.mean(adv != Advisory.COC))
    return p, math.sqrt(p * (1 - p) / n)


def policy_slice(policy, fixed_intruders, xs, ys, free_heading, free_speed=30.0, own_speed=30.0,
                 own_heading=0.0, dest=(5000.0, 0.0), constants=DEFAULT_CONSTANTS, rng=None):
    """Advisory raster for a free intruder swept over the (x, y) grid.

    ``fixed_intruders`` is a list of (x, y, heading, speed) in the ownship
    frame (ownship at the origin). Returns an int array of shape (len(ys), len(xs)).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    n = gx.size
    fixed = np.asarray(fixed_intruders, dtype=float).reshape(-1, 4)
    k = len(fixed) + 1
    intr_xy = np.zeros((n, k, 2))
    intr_phi = np.zeros((n, k))
    intr_v = np.zeros((n, k))
    for j, (fx, fy, fh, fv) in enumerate(fixed):
        intr_xy[:, j] = (fx, fy)
        intr_phi[:, j] = fh
        intr_v[:, j] = fv
    intr_xy[:, -1, 0] = gx.ravel()
    intr_xy[:, -1, 1] = gy.ravel()
    intr_phi[:, -1] = free_heading
    intr_v[:, -1] = free_speed
    dest_xy = np.tile(np.asarray(dest, dtype=float), (n, 1))
    view = _probe_view(np.zeros((n, 2)), np.full(n, own_heading), np.full(n, own_speed), dest_xy,
                       intr_xy, intr_phi, intr_v, constants.sensing_range, constants.dt)
    rng = np.random.default_rng(0) if rng is None else rng
    adv = np.asarray(policy.advise(view, rng))[:n]
    return adv.reshape(gx.shape)


def slice_csv(raster, xs, ys):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "advisory"])
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            w.writerow([f"{x:g}", f"{y:g}", Advisory(int(raster[i, j])).name])
    return buf.getvalue()
