"""Deep correction: TD learning of the additive term with a fixed low-fidelity Q."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import N_ADVISORIES, Advisory
from ..decomposition import FusionKind, fuse_groups
from ..solver import lookup_batch
from .network import SGD, Adam, CorrectionNetwork
from .replay import ReplayBuffer, Transitions
from .reward import CorrectionRewardParams, correction_reward_batch
from .state import BuilderKind, slot_fn, state_dim

logger = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    alpha: float = 1e-4
    gamma: float = 0.95
    w_c: float = 0.5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.5
    replay_capacity: int = 100_000
    batch_size: int = 64
    target_update: int = 1000
    horizon: int = 500
    total_steps: int = 1_000_000
    hidden: tuple = (64, 64)
    n_slots: int = 4
    optimizer: str = "adam"
    intruder_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.w_c <= 1.0:
            raise ValueError("w_c must lie in [0, 1]")
        if self.horizon < 1 or self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("horizon and batch size must be >= 1")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.hidden = tuple(self.hidden)

    def epsilon(self, step):
        ramp = self.epsilon_fraction * self.total_steps
        if ramp <= 0:
            return self.epsilon_end
        frac = min(1.0, step / ramp)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def make_optimizer(net, cfg):
    cls = Adam if cfg.optimizer == "adam" else SGD
    return cls(net.params, lr=cfg.alpha)


def _batch_with_qlo(batch, q_lo):
    if q_lo is None:
        return batch
    return batch._replace(qlo=q_lo(batch.states), qlo_next=q_lo(batch.next_states))


def td_targets(target, batch, cfg):
    """r + gamma * V(s') with V taken over the blended values of the frozen target."""
    w = cfg.w_c
    blended = (1.0 - w) * batch.qlo_next + w * target.forward(batch.next_states)
    v_next = np.where(batch.threat_next, blended.max(axis=1), blended[:, Advisory.COC])
    return batch.rewards + cfg.gamma * np.where(batch.terminal, 0.0, v_next)


def td_loss(net, target, batch, cfg, q_lo=None):
    """Half mean squared TD error of the blended value."""
    batch = _batch_with_qlo(batch, q_lo)
    y = td_targets(target, batch, cfg)
    idx = np.arange(batch.size)
    c = (1.0 - cfg.w_c) * batch.qlo[idx, batch.actions] + cfg.w_c * net.forward(batch.states)[idx, batch.actions]
    return 0.5 * float(np.mean((y - c) ** 2))


def td_gradients(net, target, batch, cfg, q_lo=None):
    """Loss and parameter gradients; only the correction term depends on theta."""
    batch = _batch_with_qlo(batch, q_lo)
    y = td_targets(target, batch, cfg)
    idx = np.arange(batch.size)
    delta = net.forward(batch.states)
    c = (1.0 - cfg.w_c) * batch.qlo[idx, batch.actions] + cfg.w_c * delta[idx, batch.actions]
    err = y - c
    grad_out = np.zeros_like(delta)
    grad_out[idx, batch.actions] = -cfg.w_c * err / batch.size
    return 0.5 * float(np.mean(err**2)), net.gradients(batch.states, grad_out)


def td_update(net, target, batch, q_lo=None, cfg=None, optimizer=None):
    """One gradient step on ``net``; returns the pre-step loss.

    Without an explicit optimizer the step is plain gradient descent with
    learning rate ``cfg.alpha``.
    """
    cfg = TrainingConfig() if cfg is None else cfg
    loss, grads = td_gradients(net, target, batch, cfg, q_lo)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise FloatingPointError(f"non-finite TD loss {loss}")
    opt = SGD(net.params, cfg.alpha) if optimizer is None else optimizer
    opt.step(net.params, grads)
    return loss


class LowFidelity:
    """Max-min decomposition Q-values used as the fixed low-fidelity term."""

    def __init__(self, q, kind=FusionKind.MAX_MIN):
        self.q = q
        self.kind = FusionKind(kind)

    def from_pairs(self, owners, obs, n_owners):
        rows = lookup_batch(self.q, obs) if len(obs) else np.zeros((0, N_ADVISORIES))
        return fuse_groups(rows, owners, n_owners, self.kind, obs[:, 0] if len(obs) else None)

    def from_states(self, states, n_slots):
        """Low-fidelity rows recomputed from the occupied slots of state vectors."""
        states = np.atleast_2d(states)
        slots = states[:, : 5 * n_slots].reshape(len(states), n_slots, 5)
        occupied = ~np.all(slots == 0.0, axis=2)
        owners, k = np.nonzero(occupied)
        fused, _ = self.from_pairs(owners, slots[owners, k], len(states))
        return fused

    __call__ = from_states


@dataclass
class TrainingLog:
    episodes: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    action_counts: np.ndarray = field(default_factory=lambda: np.zeros(N_ADVISORIES, dtype=int))
    steps: int = 0

    def returns(self):
        return np.array([e["return"] for e in self.episodes])

    def to_rows(self):
        return [(e["episode"], e["steps"], e["return"], e["nmacs"], int(e["arrived"])) for e in self.episodes]


def learner_state(scenario, kind, n_slots, low):
    """(state vector, low-fidelity row, has_threat) for the learning ownship."""
    obs = scenario.learner_observations()
    view = scenario.view()
    vec = np.zeros(state_dim(n_slots))
    vec[: 5 * n_slots] = slot_fn(kind)(obs, n_slots).ravel()
    vec[5 * n_slots:] = view.dest_observations()[0]
    if len(obs) == 0:
        return vec, np.zeros(N_ADVISORIES), False
    fused, _ = low.from_pairs(np.zeros(len(obs), dtype=np.intp), obs, 1)
    return vec, fused[0], True


def train(cfg, q, scenario, builder_kind=BuilderKind.CLOSEST, reward_params=None, net=None, callback=None):
    """Collect experience in ``scenario`` and fit the correction network.

    The learner acts epsilon-greedily on the blended values whenever an
    intruder is in range and flies COC otherwise; the scenario's intruders
    run their own policy. Returns the trained network and a TrainingLog.
    """
    kind = BuilderKind(builder_kind)
    reward_params = CorrectionRewardParams() if reward_params is None else reward_params
    rng = np.random.default_rng(cfg.seed)
    if net is None:
        net = CorrectionNetwork(cfg.n_slots, cfg.hidden, kind, seed=cfg.seed,
                                sensing_range=scenario.constants.sensing_range,
                                cruise_speed=scenario.constants.cruise_speed)
    target = net.copy()
    opt = make_optimizer(net, cfg)
    low = LowFidelity(q)
    buf = ReplayBuffer(cfg.replay_capacity, state_dim(cfg.n_slots))
    log = TrainingLog()
    step = 0
    episode = 0
    while step < cfg.total_steps:
        scenario.reset(rng)
        s, qlo, threat = learner_state(scenario, kind, cfg.n_slots, low)
        ep_return = 0.0
        arrived = False
        k = 0
        for k in range(cfg.horizon):
            if threat:
                if rng.random() < cfg.epsilon(step):
                    a = int(rng.integers(N_ADVISORIES))
                else:
                    a = int(np.argmax((1 - cfg.w_c) * qlo + cfg.w_c * net.forward(s)))
                log.action_counts[a] += 1
            else:
                a = int(Advisory.COC)
            arrived, _ = scenario.step(a, rng)
            s2, qlo2, threat2 = learner_state(scenario, kind, cfg.n_slots, low)
            r = float(correction_reward_batch(s2[None, :], np.array([a]), reward_params)[0])
            ep_return += r
            terminal = arrived or k == cfg.horizon - 1
            buf.add(s, a, r, s2, terminal, qlo, qlo2, threat2)
            if len(buf) >= cfg.batch_size:
                loss = td_update(net, target, buf.sample(rng, cfg.batch_size), cfg=cfg, optimizer=opt)
                log.losses.append(loss)
            step += 1
            if step % cfg.target_update == 0:
                target.load_params_from(net)
            s, qlo, threat = s2, qlo2, threat2
            if arrived or step >= cfg.total_steps:
                break
        log.episodes.append({"episode": episode, "steps": k + 1, "return": ep_return,
                             "nmacs": scenario.nmacs, "arrived": bool(arrived)})
        if callback is not None:
            callback(episode, step, log)
        episode += 1
    log.steps = step
    return net, log
