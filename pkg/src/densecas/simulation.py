"""Batch airspace simulation: take-off-rate world, annulus stress test, training scenario."""

from __future__ import annotations

import csv
import enum
import gzip
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import DEFAULT_CONSTANTS, TURN_RATES, Advisory, AircraftState
from .dynamics import observe_arrays, step_arrays

MAX_GUIDANCE_RATE = math.radians(10.0)
ALIGN_DEADBAND = math.radians(1.0)


class CAS(enum.Enum):
    NOCAS = "nocas"
    VICAS_MULTI = "vicasmulti"
    VICAS_CLOSEST = "vicasclosest"
    CORRECTED_SECTOR = "correctedsector"
    CORRECTED_CLOSEST = "correctedclosest"


@dataclass
class AirspaceWorld:
    side: float = 10_000.0
    takeoff_rate: float = 5.0  # flights / (km^2 hr)
    duration: float = 5000.0

    def __post_init__(self):
        if self.side <= 0 or self.duration <= 0 or self.takeoff_rate < 0:
            raise ValueError("airspace side and duration must be positive, take-off rate non-negative")

    @property
    def spawn_rate(self):
        """Expected spawns per second."""
        return self.takeoff_rate * (self.side / 1000.0) ** 2 / 3600.0


@dataclass
class StressWorld:
    n_aircraft: int = 7
    r_inner: float = 2000.0
    r_outer: float = 4000.0
    time_cap: float = 600.0

    def __post_init__(self):
        if self.n_aircraft < 2:
            raise ValueError("stress test needs at least two aircraft")
        if not 0 <= self.r_inner < self.r_outer:
            raise ValueError("need 0 <= r_inner < r_outer")


@dataclass
class TrainingWorld:
    """Single learning ownship with intruders entering its sensing disc.

    ``entry_angle_weights`` is a histogram over equal-width bearing bins on
    (-pi, pi] relative to the ownship heading; None means uniform.
    """

    entry_angle_weights: list | None = None
    max_intruders: int = 8
    entry_rate: float = 0.08  # intruder entries per second
    entry_heading_spread: float = math.radians(30.0)
    dest_range: tuple = (2000.0, 5000.0)
    horizon: int = 500
    release_range: float = 1500.0

    def __post_init__(self):
        if self.max_intruders < 0 or self.entry_rate < 0 or self.horizon < 1:
            raise ValueError("invalid training world parameters")


@dataclass
class ScenarioConfig:
    world: object = field(default_factory=AirspaceWorld)
    cas: CAS = CAS.NOCAS
    seed: int = 0
    speed_range: tuple = (25.0, 35.0)
    constants: object = DEFAULT_CONSTANTS

    def __post_init__(self):
        self.cas = CAS(self.cas)
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("speed range must be positive and ordered")


@dataclass
class NmacEvent:
    a: int
    b: int
    onset: float
    min_separation: float
    end: float | None = None


@dataclass
class AircraftRecord:
    id: int
    spawn_time: float
    spawn: tuple
    dest: tuple
    speed: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    advisory: np.ndarray
    n_intruders: np.ndarray
    arrived: bool = False
    arrival_time: float | None = None

    @property
    def airborne_seconds(self):
        return float(len(self.t))

    def path(self):
        """Logged positions, plus the destination itself for arrived aircraft."""
        xs, ys = self.x, self.y
        if self.arrived:
            xs = np.r_[xs, self.dest[0]]
            ys = np.r_[ys, self.dest[1]]
        return xs, ys

    @property
    def path_length(self):
        xs, ys = self.path()
        return float(np.sum(np.hypot(np.diff(xs), np.diff(ys))))

    @property
    def nominal_distance(self):
        return math.hypot(self.dest[0] - self.spawn[0], self.dest[1] - self.spawn[1])


@dataclass
class EpisodeLog:
    aircraft: list
    nmac_events: list
    dt: float
    duration: float
    min_separation: float = math.inf
    meta: dict = field(default_factory=dict)

    @property
    def flight_seconds(self):
        return sum(len(a.t) for a in self.aircraft) * self.dt

    @property
    def flight_hours(self):
        return self.flight_seconds / 3600.0

    def intruder_counts(self):
        if not self.aircraft:
            return np.zeros(0, dtype=int)
        return np.concatenate([a.n_intruders for a in self.aircraft])

    # serialization -----------------------------------------------------

    def to_records(self):
        records = []
        for a in self.aircraft:
            records.append({
                "kind": "aircraft",
                "id": a.id,
                "spawn_time": a.spawn_time,
                "spawn": list(a.spawn),
                "dest": list(a.dest),
                "speed": a.speed,
                "arrived": a.arrived,
                "arrival_time": a.arrival_time,
                "t": a.t.tolist(),
                "x": a.x.tolist(),
                "y": a.y.tolist(),
                "phi": a.phi.tolist(),
                "advisory": a.advisory.tolist(),
                "n_intruders": a.n_intruders.tolist(),
            })
        records.append({
            "kind": "world",
            "dt": self.dt,
            "duration": self.duration,
            "min_separation": None if math.isinf(self.min_separation) else self.min_separation,
            "meta": self.meta,
            "nmac_events": [asdict(e) for e in self.nmac_events],
        })
        return records

    def write(self, path):
        """Gzipped newline-delimited JSON; the gzip header carries no timestamp."""
        buf = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            for rec in self.to_records():
                gz.write((json.dumps(rec, separators=(",", ":")) + "\n").encode())
        _atomic_write_bytes(path, buf.getvalue())

    @classmethod
    def read(cls, path):
        aircraft = []
        world = None
        with gzip.open(path, "rt") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec["kind"] == "aircraft":
                    aircraft.append(AircraftRecord(
                        rec["id"], rec["spawn_time"], tuple(rec["spawn"]), tuple(rec["dest"]), rec["speed"],
                        np.array(rec["t"], dtype=float), np.array(rec["x"], dtype=float),
                        np.array(rec["y"], dtype=float), np.array(rec["phi"], dtype=float),
                        np.array(rec["advisory"], dtype=int), np.array(rec["n_intruders"], dtype=int),
                        rec["arrived"], rec["arrival_time"],
                    ))
                else:
                    world = rec
        if world is None:
            raise ValueError(f"{path}: missing world record")
        events = [NmacEvent(**e) for e in world["nmac_events"]]
        min_sep = math.inf if world["min_separation"] is None else world["min_separation"]
        return cls(aircraft, events, world["dt"], world["duration"], min_sep, world.get("meta", {}))

    def write_trajectory_csv(self, path):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "id", "x", "y", "phi", "advisory"])
        for a in self.aircraft:
            for t, x, y, p, adv in zip(a.t, a.x, a.y, a.phi, a.advisory):
                w.writerow([f"{t:g}", a.id, f"{x:.3f}", f"{y:.3f}", f"{p:.6f}", Advisory(int(adv)).name])
        _atomic_write_bytes(path, buf.getvalue().encode())


def concatenate_logs(logs):
    """Superpose logs; aircraft ids are offset so they stay unique."""
    aircraft, events = [], []
    offset = 0
    for log in logs:
        for a in log.aircraft:
            aircraft.append(AircraftRecord(**{**a.__dict__, "id": a.id + offset}))
        for e in log.nmac_events:
            events.append(NmacEvent(e.a + offset, e.b + offset, e.onset, e.min_separation, e.end))
        offset += 1 + max((a.id for a in log.aircraft), default=-1)
    dt = logs[0].dt if logs else DEFAULT_CONSTANTS.dt
    return EpisodeLog(aircraft, events, dt, sum(l.duration for l in logs),
                      min((l.min_separation for l in logs), default=math.inf))


def _atomic_write_bytes(path, payload):
    import os

    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


# guidance and NMAC bookkeeping -------------------------------------------


def nominal_guidance(own, dest):
    """Proportional turn toward the destination bearing (1 deg/s per deg), clipped to +/-10 deg/s."""
    return float(nominal_guidance_arrays(own.x, own.y, own.phi, dest[0], dest[1]))


def nominal_guidance_arrays(x, y, phi, dx, dy):
    err = np.pi - np.mod(np.pi - (np.arctan2(np.asarray(dy) - y, np.asarray(dx) - x) - phi), 2 * np.pi)
    rate = np.clip(err, -MAX_GUIDANCE_RATE, MAX_GUIDANCE_RATE)
    return np.where(np.abs(err) < ALIGN_DEADBAND, 0.0, rate)


class NmacDetector:
    """Debounced NMAC events: one per continuous violation of a pair."""

    def __init__(self, nmac_range=DEFAULT_CONSTANTS.nmac_range):
        self.nmac_range = nmac_range
        self.open = {}
        self.events = []

    def update(self, t, pairs, separations):
        """Feed all pairs currently at or below the NMAC range (ids, not indices)."""
        current = set()
        for (a, b), d in zip(pairs, separations):
            key = (int(min(a, b)), int(max(a, b)))
            if d > self.nmac_range:
                continue
            current.add(key)
            ev = self.open.get(key)
            if ev is None:
                ev = NmacEvent(key[0], key[1], float(t), float(d))
                self.open[key] = ev
                self.events.append(ev)
            elif d < ev.min_separation:
                ev.min_separation = float(d)
        for key in [k for k in self.open if k not in current]:
            self.open.pop(key).end = float(t)

    def close_all(self, t):
        for ev in self.open.values():
            ev.end = float(t)
        self.open.clear()


def detect_nmac_events(separations, nmac_range=DEFAULT_CONSTANTS.nmac_range, dt=DEFAULT_CONSTANTS.dt):
    """Events from per-pair separation series ``{(a, b): [d0, d1, ...]}`` sampled every ``dt``."""
    det = NmacDetector(nmac_range)
    n = max((len(v) for v in separations.values()), default=0)
    for k in range(n):
        pairs, dists = [], []
        for key, series in separations.items():
            if k < len(series):
                pairs.append(key)
                dists.append(series[k])
        det.update(k * dt, pairs, dists)
    det.close_all(n * dt)
    return det.events


# world machinery ---------------------------------------------------------


@dataclass
class WorldView:
    """Snapshot handed to policies; pair arrays are directed (owner sees other)."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    dest_x: np.ndarray
    dest_y: np.ndarray
    prev_rho_dest: np.ndarray
    owners: np.ndarray
    others: np.ndarray
    obs: np.ndarray

    @property
    def n(self):
        return len(self.x)

    def dest_observations(self):
        dx, dy = self.dest_x - self.x, self.dest_y - self.y
        rho = np.hypot(dx, dy)
        theta = np.where(rho > 0, np.pi - np.mod(np.pi - (np.arctan2(dy, dx) - self.phi), 2 * np.pi), 0.0)
        return np.column_stack([theta, rho, self.prev_rho_dest])

    def intruder_counts(self):
        return np.bincount(self.owners, minlength=self.n)


class Fleet:
    """Active aircraft as parallel arrays plus per-step log buffers."""

    def __init__(self):
        self.ids = np.zeros(0, dtype=int)
        self.x = np.zeros(0)
        self.y = np.zeros(0)
        self.v = np.zeros(0)
        self.phi = np.zeros(0)
        self.dest_x = np.zeros(0)
        self.dest_y = np.zeros(0)
        self.prev_rho = np.zeros(0)
        self.info = {}
        self.next_id = 0
        self.rows = []

    def __len__(self):
        return len(self.ids)

    def add(self, t, x, y, v, phi, dx, dy):
        i = self.next_id
        self.next_id += 1
        self.ids = np.r_[self.ids, i]
        self.x = np.r_[self.x, x]
        self.y = np.r_[self.y, y]
        self.v = np.r_[self.v, v]
        self.phi = np.r_[self.phi, phi]
        self.dest_x = np.r_[self.dest_x, dx]
        self.dest_y = np.r_[self.dest_y, dy]
        self.prev_rho = np.r_[self.prev_rho, math.hypot(dx - x, dy - y)]
        self.info[i] = {"spawn_time": float(t), "spawn": (float(x), float(y)), "dest": (float(dx), float(dy)),
                        "speed": float(v), "arrived": False, "arrival_time": None}
        return i

    def remove(self, mask):
        keep = ~mask
        for name in ("ids", "x", "y", "v", "phi", "dest_x", "dest_y", "prev_rho"):
            setattr(self, name, getattr(self, name)[keep])

    def sense(self, sensing_range):
        n = len(self)
        if n < 2:
            empty = np.zeros(0, dtype=np.intp)
            return empty, empty, np.zeros((0, 5))
        pos = np.column_stack([self.x, self.y])
        pairs = cKDTree(pos).query_pairs(sensing_range, output_type="ndarray")
        if len(pairs) == 0:
            empty = np.zeros(0, dtype=np.intp)
            return empty, empty, np.zeros((0, 5))
        owners = np.r_[pairs[:, 0], pairs[:, 1]]
        others = np.r_[pairs[:, 1], pairs[:, 0]]
        order = np.lexsort((others, owners))
        owners, others = owners[order], others[order]
        obs = observe_arrays(self.x[owners], self.y[owners], self.phi[owners], self.v[owners],
                             self.x[others], self.y[others], self.phi[others], self.v[others])
        return owners, others, obs

    def view(self, owners, others, obs):
        return WorldView(self.x, self.y, self.v, self.phi, self.dest_x, self.dest_y, self.prev_rho,
                         owners, others, obs)

    def log_step(self, t, advisories, n_intruders):
        self.rows.append((np.full(len(self), float(t)), self.ids.copy(), self.x.copy(), self.y.copy(),
                          self.phi.copy(), np.asarray(advisories, dtype=int).copy(), n_intruders.copy()))

    def records(self):
        if not self.rows:
            return []
        cols = [np.concatenate(c) for c in zip(*self.rows)]
        t, ids, x, y, phi, adv, nint = cols
        order = np.argsort(ids, kind="stable")
        t, ids, x, y, phi, adv, nint = (c[order] for c in (t, ids, x, y, phi, adv, nint))
        starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
        ends = np.r_[starts[1:], len(ids)]
        out = []
        for s, e in zip(starts, ends):
            i = int(ids[s])
            info = self.info[i]
            out.append(AircraftRecord(i, info["spawn_time"], info["spawn"], info["dest"], info["speed"],
                                      t[s:e], x[s:e], y[s:e], phi[s:e], adv[s:e], nint[s:e],
                                      info["arrived"], info["arrival_time"]))
        return out


def apply_advisories(fleet, advisories, dt):
    adv = np.asarray(advisories, dtype=int)
    guide = nominal_guidance_arrays(fleet.x, fleet.y, fleet.phi, fleet.dest_x, fleet.dest_y)
    rates = np.where(adv == Advisory.COC, guide, TURN_RATES[adv])
    fleet.x, fleet.y, fleet.phi = step_arrays(fleet.x, fleet.y, fleet.v, fleet.phi, rates, dt)


def gate_advisories(advisories, n_intruders):
    """Advisories are only issued with at least one intruder in sensing range."""
    return np.where(n_intruders > 0, advisories, int(Advisory.COC))


def _world_step(fleet, policy, rng, t, constants, detector, bounds=None):
    """Sense, decide, log, move, detect arrivals. Returns the closest separation seen."""
    owners, others, obs = fleet.sense(constants.sensing_range)
    n_intr = np.bincount(owners, minlength=len(fleet))
    close = owners < others
    near = close & (obs[:, 0] <= constants.nmac_range)
    detector.update(t, list(zip(fleet.ids[owners[near]], fleet.ids[others[near]])), obs[near, 0])
    min_sep = float(obs[close, 0].min()) if close.any() else math.inf
    adv = policy.advise(fleet.view(owners, others, obs), rng) if len(fleet) else np.zeros(0, dtype=int)
    adv = gate_advisories(np.asarray(adv, dtype=int), n_intr)
    fleet.log_step(t, adv, n_intr)
    fleet.prev_rho = np.hypot(fleet.dest_x - fleet.x, fleet.dest_y - fleet.y)
    apply_advisories(fleet, adv, constants.dt)
    if bounds is not None:
        fleet.x = np.clip(fleet.x, bounds[0], bounds[1])
        fleet.y = np.clip(fleet.y, bounds[0], bounds[1])
    rho = np.hypot(fleet.dest_x - fleet.x, fleet.dest_y - fleet.y)
    arrived = rho <= constants.dest_capture_radius
    for i in fleet.ids[arrived]:
        fleet.info[int(i)]["arrived"] = True
        fleet.info[int(i)]["arrival_time"] = float(t + constants.dt)
    if arrived.any():
        fleet.remove(arrived)
    return min_sep


def _spawn_point(rng, side, fleet, nmac_range, tries=100):
    for _ in range(tries):
        p = rng.uniform(0.0, side, size=2)
        if len(fleet) == 0 or np.min(np.hypot(fleet.x - p[0], fleet.y - p[1])) > nmac_range:
            return p
    return p


def run_airspace(cfg, policy, rng):
    """Poisson take-offs in a square airspace; every aircraft runs ``policy``."""
    world = cfg.world
    if not isinstance(world, AirspaceWorld):
        raise ValueError("run_airspace needs an AirspaceWorld")
    c = cfg.constants
    fleet = Fleet()
    detector = NmacDetector(c.nmac_range)
    n_steps = int(round(world.duration / c.dt))
    lam = world.spawn_rate * c.dt
    min_sep = math.inf
    for k in range(n_steps):
        t = k * c.dt
        for _ in range(rng.poisson(lam) if lam > 0 else 0):
            p = _spawn_point(rng, world.side, fleet, c.nmac_range)
            d = rng.uniform(0.0, world.side, size=2)
            while math.hypot(*(d - p)) <= 2 * c.dest_capture_radius:
                d = rng.uniform(0.0, world.side, size=2)
            v = rng.uniform(*cfg.speed_range)
            fleet.add(t, p[0], p[1], v, math.atan2(d[1] - p[1], d[0] - p[0]), d[0], d[1])
        if len(fleet) == 0:
            detector.update(t, [], [])
            continue
        min_sep = min(min_sep, _world_step(fleet, policy, rng, t, c, detector, bounds=(0.0, world.side)))
    detector.close_all(n_steps * c.dt)
    meta = {"scenario": "airspace", "cas": cfg.cas.value, "seed": cfg.seed, "takeoff_rate": world.takeoff_rate,
            "side": world.side, "spawned": fleet.next_id}
    return EpisodeLog(fleet.records(), detector.events, c.dt, world.duration, min_sep, meta)


def stress_initial_states(world, rng, speed_range=(25.0, 35.0), nmac_range=DEFAULT_CONSTANTS.nmac_range):
    """Annulus spawn positions (area-uniform), headings toward the center."""
    pts = []
    while len(pts) < world.n_aircraft:
        r = math.sqrt(rng.uniform(world.r_inner**2, world.r_outer**2))
        a = rng.uniform(-math.pi, math.pi)
        p = (r * math.cos(a), r * math.sin(a))
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) > nmac_range for q in pts):
            pts.append(p)
    out = []
    for x, y in pts:
        out.append((AircraftState(x, y, rng.uniform(*speed_range), math.atan2(-y, -x)), (-x, -y)))
    return out


def run_stress(cfg, policy, rng, initial=None):
    """Fixed-count annulus encounter; destinations are diametrically opposite spawn points."""
    world = cfg.world
    if not isinstance(world, StressWorld):
        raise ValueError("run_stress needs a StressWorld")
    c = cfg.constants
    initial = stress_initial_states(world, rng, cfg.speed_range, c.nmac_range) if initial is None else initial
    if len(initial) < 2:
        raise ValueError("stress test needs at least two aircraft")
    fleet = Fleet()
    for s, d in initial:
        fleet.add(0.0, s.x, s.y, s.v, s.phi, d[0], d[1])
    detector = NmacDetector(c.nmac_range)
    n_steps = int(round(world.time_cap / c.dt))
    min_sep = math.inf
    k = 0
    while k < n_steps and len(fleet):
        min_sep = min(min_sep, _world_step(fleet, policy, rng, k * c.dt, c, detector))
        k += 1
    detector.close_all(k * c.dt)
    meta = {"scenario": "stress", "cas": cfg.cas.value, "seed": cfg.seed, "n_aircraft": len(initial),
            "steps": k}
    return EpisodeLog(fleet.records(), detector.events, c.dt, k * c.dt, min_sep, meta)


# training scenario -------------------------------------------------------


class TrainingScenario:
    """One learning ownship (fleet index 0) among policy-driven intruders.

    Intruders enter on the ownship's sensing circle at bearings drawn from
    the configured histogram, aimed roughly at the ownship, and are released
    once they drift beyond ``release_range``.
    """

    def __init__(self, world=None, intruder_policy=None, constants=DEFAULT_CONSTANTS, speed_range=(25.0, 35.0)):
        self.world = TrainingWorld() if world is None else world
        self.intruder_policy = intruder_policy
        self.constants = constants
        self.speed_range = speed_range
        w = self.world.entry_angle_weights
        if w is not None:
            w = np.asarray(w, dtype=float)
            if np.any(w < 0) or w.sum() <= 0:
                raise ValueError("entry angle weights must be non-negative with positive mass")
            w = w / w.sum()
        self._entry_p = w

    def sample_entry_angle(self, rng):
        if self._entry_p is None:
            return rng.uniform(-math.pi, math.pi)
        n = len(self._entry_p)
        b = rng.choice(n, p=self._entry_p)
        return -math.pi + 2 * math.pi * (b + rng.random()) / n

    def reset(self, rng):
        self.fleet = Fleet()
        self.t = 0
        heading = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(*self.world.dest_range)
        bearing = rng.uniform(-math.pi, math.pi)
        self.fleet.add(0.0, 0.0, 0.0, rng.uniform(*self.speed_range), heading,
                       dist * math.cos(bearing), dist * math.sin(bearing))
        self.nmacs = 0
        self._near = set()
        return self.sense()

    def _spawn_intruder(self, rng):
        f = self.fleet
        c = self.constants
        beta = self.sample_entry_angle(rng)
        ang = f.phi[0] + beta
        x = f.x[0] + c.sensing_range * math.cos(ang)
        y = f.y[0] + c.sensing_range * math.sin(ang)
        heading = math.atan2(f.y[0] - y, f.x[0] - x) + rng.uniform(-1, 1) * self.world.entry_heading_spread
        far = 3.0 * c.sensing_range
        f.add(self.t, x, y, rng.uniform(*self.speed_range), heading,
              x + far * math.cos(heading), y + far * math.sin(heading))

    def sense(self):
        self.owners, self.others, self.obs = self.fleet.sense(self.constants.sensing_range)
        return self.view()

    def view(self):
        return self.fleet.view(self.owners, self.others, self.obs)

    def learner_observations(self):
        mask = self.owners == 0
        return self.obs[mask]

    def step(self, learner_advisory, rng):
        """Advance one decision period; returns (arrived, nmac_now)."""
        f = self.fleet
        c = self.constants
        if self.intruder_policy is not None and len(f) > 1:
            adv = np.asarray(self.intruder_policy.advise(self.view(), rng), dtype=int)
        else:
            adv = np.zeros(len(f), dtype=int)
        adv = gate_advisories(adv, np.bincount(self.owners, minlength=len(f)))
        adv[0] = int(learner_advisory)
        f.prev_rho = np.hypot(f.dest_x - f.x, f.dest_y - f.y)
        apply_advisories(f, adv, c.dt)
        self.t += 1
        rho0 = math.hypot(f.dest_x[0] - f.x[0], f.dest_y[0] - f.y[0])
        arrived = rho0 <= c.dest_capture_radius
        # release intruders that left the neighbourhood
        d = np.hypot(f.x - f.x[0], f.y - f.y[0])
        gone = d > self.world.release_range
        gone[0] = False
        if gone.any():
            f.remove(gone)
        if len(f) - 1 < self.world.max_intruders and rng.random() < 1.0 - math.exp(-self.world.entry_rate * c.dt):
            self._spawn_intruder(rng)
        self.sense()
        mine = self.owners == 0
        near = {int(self.fleet.ids[j]) for j in self.others[mine][self.obs[mine, 0] <= c.nmac_range]}
        new_nmac = len(near - self._near)
        self._near = near
        self.nmacs += new_nmac
        return arrived, new_nmac > 0

    @property
    def learner(self):
        f = self.fleet
        return AircraftState(f.x[0], f.y[0], f.v[0], f.phi[0])
