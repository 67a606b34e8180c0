"""Learned additive correction on top of the decomposed pairwise policy."""

from .network import CorrectionNetwork, forward
from .replay import ReplayBuffer, Transitions
from .reward import CorrectionRewardParams, correction_reward, correction_reward_batch
from .state import (
    BuilderKind,
    CorrectionState,
    DestinationObservation,
    build_state,
    build_state_closest,
    build_state_sector,
    state_dim,
)
from .training import LowFidelity, TrainingConfig, TrainingLog, td_gradients, td_loss, td_update, train

__all__ = [
    "BuilderKind", "CorrectionNetwork", "CorrectionRewardParams", "CorrectionState", "DestinationObservation",
    "LowFidelity", "ReplayBuffer", "TrainingConfig", "TrainingLog", "Transitions", "build_state",
    "build_state_closest", "build_state_sector", "correction_reward", "correction_reward_batch", "forward",
    "state_dim", "td_gradients", "td_loss", "td_update", "train",
]
