from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..core import N_ADVISORIES


class Transitions(NamedTuple):
    """A batch of experience.

    ``qlo`` / ``qlo_next`` hold the fixed low-fidelity Q-rows of the two
    states; ``threat_next`` marks successors with an intruder in range (the
    CAS only chooses freely there, otherwise it flies COC).
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray
    qlo: np.ndarray
    qlo_next: np.ndarray
    threat_next: np.ndarray

    @property
    def size(self):
        return len(self.actions)


class ReplayBuffer:
    """Fixed-capacity ring buffer; once full, the oldest item is overwritten."""

    def __init__(self, capacity, state_dim):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.qlo = np.zeros((capacity, N_ADVISORIES))
        self.qlo_next = np.zeros((capacity, N_ADVISORIES))
        self.threat_next = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, terminal, qlo, qlo_next, threat_next=True):
        i = self.pos
        self.states[i] = s
        self.actions[i] = int(a)
        self.rewards[i] = r
        self.next_states[i] = s2
        self.terminal[i] = terminal
        self.qlo[i] = qlo
        self.qlo_next[i] = qlo_next
        self.threat_next[i] = threat_next
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Transitions(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx],
                           self.terminal[idx], self.qlo[idx], self.qlo_next[idx], self.threat_next[idx])

    def sample_indices(self, rng, batch_size):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, rng, batch_size):
        return self.get(self.sample_indices(rng, batch_size))
