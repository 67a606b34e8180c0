"""Pairwise conflict MDP: reward, value iteration, interpolated Q-table, persistence."""

from __future__ import annotations

import json
import logging
import math
import os
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .core import N_ADVISORIES, TURN_RATES, TURN_RATES_DEG, Advisory, Constants, DEFAULT_CONSTANTS
from .dynamics import NoiseModel, pair_sigma_points

logger = logging.getLogger(__name__)

MAGIC = b"DCQT"
FORMAT_VERSION = 1
DIM_NAMES = ("rho", "theta", "psi", "v_own", "v_int")
PERIODIC = (False, True, True, False, False)


def uniform_angles(n):
    """``n`` evenly spaced angles covering (-pi, pi], ending at pi."""
    return -math.pi + 2.0 * math.pi * np.arange(1, n + 1) / n


def default_rho_points():
    return np.concatenate([np.arange(0.0, 501.0, 50.0), np.arange(600.0, 1001.0, 100.0), [1200.0]])


class GridSpec:
    """Cut points for (rho, theta, psi, v_own, v_int)."""

    def __init__(self, rho=None, theta=None, psi=None, v_own=None, v_int=None):
        axes = [
            default_rho_points() if rho is None else rho,
            uniform_angles(21) if theta is None else theta,
            uniform_angles(21) if psi is None else psi,
            np.arange(20.0, 41.0, 5.0) if v_own is None else v_own,
            np.arange(20.0, 41.0, 5.0) if v_int is None else v_int,
        ]
        self.axes = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in axes)
        for name, periodic, a in zip(DIM_NAMES, PERIODIC, self.axes):
            if a.ndim != 1 or len(a) < 2:
                raise ValueError(f"grid dimension {name} needs at least 2 points")
            if not np.all(np.diff(a) > 0):
                raise ValueError(f"grid dimension {name} must be strictly increasing")
            if periodic and (a[0] <= -math.pi or a[-1] > math.pi):
                raise ValueError(f"angle dimension {name} must lie in (-pi, pi]")

    @classmethod
    def uniform(cls, rho, n_angles, speeds):
        return cls(rho, uniform_angles(n_angles), uniform_angles(n_angles), speeds, speeds)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def n_states(self):
        return int(np.prod(self.shape))

    def points(self):
        """All grid states as an (n_states, 5) array in row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def to_dict(self):
        return {name: a.tolist() for name, a in zip(DIM_NAMES, self.axes)}

    @classmethod
    def from_dict(cls, d):
        return cls(*(d[name] for name in DIM_NAMES))

    def __eq__(self, other):
        return isinstance(other, GridSpec) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )

    def __repr__(self):
        return f"GridSpec(shape={self.shape})"


@dataclass(frozen=True)
class RewardParams:
    w_rho: float = 1.0
    w_a: float = 0.005
    w_nmac: float = 100.0
    w_conflict: float = 0.1
    rho_nmac: float = DEFAULT_CONSTANTS.nmac_range

    def __post_init__(self):
        if min(self.w_rho, self.w_a, self.w_nmac, self.w_conflict) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.rho_nmac <= 0:
            raise ValueError("rho_nmac must be positive")


def reward(s, a, p):
    """Pairwise reward; turn rate enters the quadratic penalty in deg/s."""
    rho = s.rho if hasattr(s, "rho") else float(s)
    a = Advisory(a)
    r = -p.w_rho * math.exp(-(rho - p.rho_nmac) / p.rho_nmac)
    r -= p.w_a * TURN_RATES_DEG[a] ** 2
    if rho <= p.rho_nmac:
        r -= p.w_nmac
    if a != Advisory.COC:
        r -= p.w_conflict
    return r


def reward_table(rho, p):
    """Vectorized reward for an array of ranges; returns (len(rho), 6)."""
    rho = np.asarray(rho, dtype=float)[:, None]
    r = -p.w_rho * np.exp(-(rho - p.rho_nmac) / p.rho_nmac)
    r = r - p.w_a * TURN_RATES_DEG[None, :] ** 2
    r = r - p.w_nmac * (rho <= p.rho_nmac)
    alert = np.ones(N_ADVISORIES)
    alert[Advisory.COC] = 0.0
    return r - p.w_conflict * alert[None, :]


@dataclass
class QTable:
    grid: GridSpec
    values: np.ndarray
    gamma: float
    residual: float = float("nan")
    iterations: int = 0
    converged: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(self.grid.shape + (N_ADVISORIES,))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Q-table values must be finite")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def flat(self):
        return self.values.reshape(-1, N_ADVISORIES)

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.gamma == other.gamma
            and self.values.tobytes() == other.values.tobytes()
            and self.iterations == other.iterations
            and (self.residual == other.residual or (math.isnan(self.residual) and math.isnan(other.residual)))
        )

    def lookup(self, s):
        return lookup(self, s)


@dataclass
class TabularMDP:
    """Explicit finite MDP: rewards (S, A) and transitions (S, A, S)."""

    rewards: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.transitions = np.asarray(self.transitions, dtype=float)
        if self.transitions.shape != self.rewards.shape + (self.rewards.shape[0],):
            raise ValueError("transitions must have shape (S, A, S)")
        if not np.allclose(self.transitions.sum(axis=-1), 1.0):
            raise ValueError("transition rows must sum to 1")


@dataclass
class SolveResult:
    """Final iterate plus the residual history of a value-iteration run."""

    q: np.ndarray
    residuals: list
    converged: bool

    @property
    def iterations(self):
        return len(self.residuals)

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else float("nan")


def _iterate(backup, q0, gamma, tol, max_iters, callback=None):
    q = q0
    residuals = []
    converged = False
    for _ in range(max_iters):
        q_new = backup(q)
        res = float(np.max(np.abs(q_new - q)))
        residuals.append(res)
        q = q_new
        if callback is not None:
            callback(len(residuals), res)
        # with gamma = 0 the backup ignores the iterate, so one pass is exact
        if res <= tol or gamma == 0:
            converged = True
            break
    return SolveResult(q, residuals, converged)


class _PairwiseBackup:
    def __init__(self, grid, params, noise, constants):
        self.grid = grid
        pts = grid.points()
        self.R = np.ascontiguousarray(reward_table(pts[:, 0], params))
        sig = pair_sigma_points(noise, noise)
        self.sig_pts = _kernels.as_f64(sig.points)
        self.sig_w = _kernels.as_f64(sig.weights)
        self.rates = _kernels.as_f64(TURN_RATES)
        self.dt = float(constants.dt)
        self.gamma = None

    def __call__(self, q):
        out = np.empty_like(self.R)
        _kernels.bellman_sweep(np.ascontiguousarray(q), self.R, *self.grid.axes, self.rates, self.sig_pts, self.sig_w,
                               float(self.gamma), self.dt, out)
        return out


def value_iterate(problem, params=None, gamma=0.95, tol=1e-3, max_iters=1000, noise=None,
                  constants=DEFAULT_CONSTANTS, callback=None):
    """Run Q-value iteration until the max-abs change drops to ``tol``.

    ``problem`` is either a :class:`GridSpec` (the pairwise encounter model,
    returns a :class:`QTable`) or a :class:`TabularMDP` (returns a
    :class:`SolveResult`). Non-convergence is reported through the
    ``converged`` flag and the final residual, never raised.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    if isinstance(problem, TabularMDP):
        R, T = problem.rewards, problem.transitions

        def backup(q):
            return R + gamma * T @ q.max(axis=1)

        return _iterate(backup, np.zeros_like(R), gamma, tol, max_iters, callback)

    grid = problem
    params = RewardParams() if params is None else params
    noise = NoiseModel() if noise is None else noise
    backup = _PairwiseBackup(grid, params, noise, constants)
    backup.gamma = gamma
    start = time.perf_counter()
    result = _iterate(backup, np.zeros_like(backup.R), gamma, tol, max_iters, callback)
    elapsed = time.perf_counter() - start
    if not result.converged:
        logger.warning("value iteration stopped at residual %.3g after %d iterations", result.residual, result.iterations)
    meta = {
        "reward": asdict(params),
        "noise": asdict(noise),
        "dt": constants.dt,
        "tol": tol,
        "residuals": result.residuals,
        "solve_seconds": elapsed,
    }
    return QTable(grid, result.q, gamma, result.residual, result.iterations, result.converged, meta)


def transition_expectation(s, a, q, noise=None, constants=DEFAULT_CONSTANTS):
    """Sigma-point expectation of max_a' Q(s', a') after taking ``a`` in ``s``."""
    noise = NoiseModel() if noise is None else noise
    sig = pair_sigma_points(noise, noise)
    s = np.asarray(s.as_array() if hasattr(s, "as_array") else s, dtype=float)
    Q = _kernels.as_f64(q.flat)
    return _kernels.expectation(Q, *q.grid.axes, *s, float(TURN_RATES[int(a)]),
                                _kernels.as_f64(sig.points), _kernels.as_f64(sig.weights), float(constants.dt),
                                np.empty(N_ADVISORIES))


def lookup_batch(q, obs):
    """Interpolated Q-rows for an (m, 5) array of observations."""
    obs = np.ascontiguousarray(np.atleast_2d(obs), dtype=np.float64)
    out = np.empty((len(obs), N_ADVISORIES))
    if len(obs):
        _kernels.interp_rows(q.flat, *q.grid.axes, obs, out)
    return out


def lookup(q, s):
    s = s.as_array() if hasattr(s, "as_array") else s
    return lookup_batch(q, np.asarray(s, dtype=float)[None, :])[0]


def extract_action(qvalues):
    """Argmax advisory; ties resolve to the earliest in canonical order."""
    qvalues = np.asarray(qvalues, dtype=float)
    if qvalues.shape != (N_ADVISORIES,) or not np.all(np.isfinite(qvalues)):
        raise ValueError("expected six finite Q-values")
    return Advisory(int(np.argmax(qvalues)))


def _header_size(shape):
    return 4 + 4 + 4 + 4 * len(shape) + 8 * sum(shape) + 8


def save(q, path):
    """Write the binary table and a JSON sidecar; both atomically."""
    if q.iterations < 1:
        raise ValueError("refusing to save an unsolved table")
    path = os.fspath(path)
    shape = q.grid.shape
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(shape)), struct.pack(f"<{len(shape)}I", *shape)]
    for axis in q.grid.axes:
        parts.append(np.asarray(axis, dtype="<f8").tobytes())
    parts.append(struct.pack("<d", q.gamma))
    parts.append(np.ascontiguousarray(q.values, dtype="<f4").tobytes())
    _atomic_write(path, b"".join(parts))
    sidecar = {
        "format_version": FORMAT_VERSION,
        "grid": q.grid.to_dict(),
        "shape": list(shape) + [N_ADVISORIES],
        "gamma": q.gamma,
        "residual": q.residual,
        "iterations": q.iterations,
        "converged": q.converged,
        "metadata": q.metadata,
    }
    _atomic_write(path + ".json", json.dumps(sidecar, indent=2).encode())


def load(path):
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ValueError(f"{path}: not a DCQT file")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    if ndim != len(DIM_NAMES):
        raise ValueError(f"{path}: expected {len(DIM_NAMES)} dimensions, found {ndim}")
    if len(data) < 12 + 4 * ndim:
        raise ValueError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{ndim}I", data, 12)
    expected = _header_size(shape) + 4 * int(np.prod(shape)) * N_ADVISORIES
    if len(data) != expected:
        raise ValueError(f"{path}: size {len(data)} does not match declared shape (expected {expected})")
    off = 12 + 4 * ndim
    axes = []
    for n in shape:
        axes.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64))
        off += 8 * n
    (gamma,) = struct.unpack_from("<d", data, off)
    off += 8
    values = np.frombuffer(data, dtype="<f4", offset=off).astype(np.float32).reshape(tuple(shape) + (N_ADVISORIES,))
    q = QTable(GridSpec(*axes), values, gamma)
    if os.path.exists(path + ".json"):
        with open(path + ".json") as fh:
            side = json.load(fh)
        q.residual = float(side.get("residual", float("nan")))
        q.iterations = int(side.get("iterations", 0))
        q.converged = bool(side.get("converged", False))
        q.metadata = side.get("metadata", {})
    return q


def _atomic_write(path, payload):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
