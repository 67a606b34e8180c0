"""Collision-avoidance systems with a scikit-learn style interface.

``fit`` builds the policy (value iteration or correction training),
``decision_function`` returns Q-rows and ``predict`` returns advisory codes.
``advise`` evaluates every aircraft of a simulation snapshot at once.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import DEFAULT_CONSTANTS, N_ADVISORIES, Advisory
from .correction.network import CorrectionNetwork
from .correction.reward import CorrectionRewardParams
from .correction.state import BuilderKind, build_vectors, state_dim
from .correction.training import LowFidelity, TrainingConfig, train
from .decomposition import FusionKind, corrected_qvalues, fuse_groups, softmax_sample_rows
from .simulation import CAS, TrainingScenario, TrainingWorld
from .solver import GridSpec, QTable, RewardParams, load, lookup_batch, value_iterate
from .validation import check_observations, check_states, check_temperature


def _select(rows, has, temperature, rng):
    if temperature is None:
        adv = np.argmax(rows, axis=1)
    else:
        rng = np.random.default_rng() if rng is None else rng
        adv = softmax_sample_rows(rows, temperature, rng)
    return np.where(has, adv, int(Advisory.COC)).astype(int)


class NoCAS(BaseEstimator):
    """Always clear of conflict."""

    def fit(self, X=None, y=None):
        self.n_advisories_ = N_ADVISORIES
        return self

    def predict(self, X):
        return np.zeros(len(np.atleast_2d(X)), dtype=int)

    def advise(self, view, rng=None):
        return np.zeros(view.n, dtype=int)


class VICAS(BaseEstimator):
    """Value-iteration pairwise CAS with utility decomposition over intruders.

    Parameters
    ----------
    fusion : {"maxmin", "maxsum", "closest"}
        How per-intruder Q-rows are combined in multi-threat encounters.
    temperature : float or None
        When set, advisories are sampled from a softmax over the fused
        Q-values instead of taking the argmax.
    q_table : QTable, path or None
        A pre-solved table; ``fit`` then skips value iteration.
    """

    def __init__(self, fusion="maxmin", gamma=0.95, tol=1e-3, max_iters=1000, grid=None, reward=None,
                 noise=None, constants=None, temperature=None, q_table=None):
        self.fusion = fusion
        self.gamma = gamma
        self.tol = tol
        self.max_iters = max_iters
        self.grid = grid
        self.reward = reward
        self.noise = noise
        self.constants = constants
        self.temperature = temperature
        self.q_table = q_table

    def fit(self, X=None, y=None):
        FusionKind(self.fusion)
        check_temperature(self.temperature)
        if self.q_table is not None:
            q = self.q_table if isinstance(self.q_table, QTable) else load(self.q_table)
        else:
            q = value_iterate(self.grid or GridSpec(), self.reward or RewardParams(), self.gamma, self.tol,
                              self.max_iters, self.noise, self.constants or DEFAULT_CONSTANTS)
        self.q_table_ = q
        self.converged_ = q.converged
        return self

    def decision_function(self, X):
        """Pairwise Q-rows for an (n, 5) array of single-intruder observations."""
        check_is_fitted(self, "q_table_")
        return lookup_batch(self.q_table_, check_observations(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def fused_qvalues(self, view):
        check_is_fitted(self, "q_table_")
        rows = lookup_batch(self.q_table_, view.obs) if len(view.obs) else np.zeros((0, N_ADVISORIES))
        dists = view.obs[:, 0] if len(view.obs) else None
        return fuse_groups(rows, view.owners, view.n, FusionKind(self.fusion), dists)

    def advise(self, view, rng=None):
        fused, has = self.fused_qvalues(view)
        return _select(fused, has, self.temperature, rng)


class CorrectedVICAS(BaseEstimator):
    """Max-min decomposition plus a learned additive correction.

    Parameters
    ----------
    base : VICAS, QTable or path
        Supplies the pairwise table behind the low-fidelity values.
    builder : {"closest", "sector"}
        State layout fed to the correction network.
    w_c : float
        Blend weight of the correction term.
    training : TrainingConfig or None
    network : CorrectionNetwork or path, optional
        Pre-trained correction; ``fit`` then only validates it.
    """

    def __init__(self, base=None, builder="closest", n_slots=4, w_c=0.5, training=None, reward=None,
                 scenario=None, network=None, constants=None):
        self.base = base
        self.builder = builder
        self.n_slots = n_slots
        self.w_c = w_c
        self.training = training
        self.reward = reward
        self.scenario = scenario
        self.network = network
        self.constants = constants

    def _table(self):
        if isinstance(self.base, VICAS):
            return (self.base if hasattr(self.base, "q_table_") else self.base.fit()).q_table_
        if isinstance(self.base, QTable):
            return self.base
        if self.base is None:
            raise ValueError("CorrectedVICAS needs a base table")
        return load(self.base)

    def fit(self, X=None, y=None, callback=None):
        if not 0.0 <= self.w_c <= 1.0:
            raise ValueError("w_c must lie in [0, 1]")
        kind = BuilderKind(self.builder)
        q = self._table()
        if self.network is not None:
            net = self.network if isinstance(self.network, CorrectionNetwork) else CorrectionNetwork.load(self.network)
            if net.builder_kind is not kind or net.n_slots != self.n_slots:
                raise ValueError(f"checkpoint was trained with builder {net.builder_kind.value} and "
                                 f"N={net.n_slots}, expected {kind.value} and N={self.n_slots}")
            self.training_log_ = None
        else:
            cfg = self.training or TrainingConfig(w_c=self.w_c, n_slots=self.n_slots)
            if cfg.w_c != self.w_c or cfg.n_slots != self.n_slots:
                raise ValueError("training config disagrees with w_c / n_slots")
            constants = self.constants or DEFAULT_CONSTANTS
            intruders = VICAS(fusion="maxmin", temperature=cfg.intruder_temperature, q_table=q).fit()
            world = self.scenario or TrainingWorld(horizon=cfg.horizon)
            scenario = TrainingScenario(world, intruders, constants)
            net, self.training_log_ = train(cfg, q, scenario, kind, self.reward or CorrectionRewardParams(),
                                            callback=callback)
        self.q_table_ = q
        self.network_ = net
        self.low_fidelity_ = LowFidelity(q)
        return self

    def decision_function(self, X):
        """Blended Q-rows for correction-state vectors (low fidelity from the occupied slots)."""
        check_is_fitted(self, "network_")
        X = check_states(X, state_dim(self.n_slots))
        q_lo = self.low_fidelity_.from_states(X, self.n_slots)
        return corrected_qvalues(q_lo, self.network_.forward(X), self.w_c)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def corrected_view_qvalues(self, view):
        check_is_fitted(self, "network_")
        q_lo, has = self.low_fidelity_.from_pairs(view.owners, view.obs, view.n)
        vecs = build_vectors(self.builder, view.obs, view.owners, view.n, view.dest_observations(), self.n_slots)
        return corrected_qvalues(q_lo, self.network_.forward(vecs), self.w_c), has

    def advise(self, view, rng=None):
        blended, has = self.corrected_view_qvalues(view)
        return _select(blended, has, None, rng)


def make_policy(cas, q_table=None, network=None, w_c=0.5):
    """Fitted policy for a CAS variant; corrected variants need a matching checkpoint."""
    cas = CAS(cas)
    if cas is CAS.NOCAS:
        return NoCAS().fit()
    if q_table is None:
        raise ValueError(f"{cas.value} needs a Q-table")
    if cas is CAS.VICAS_MULTI:
        return VICAS(fusion="maxmin", q_table=q_table).fit()
    if cas is CAS.VICAS_CLOSEST:
        return VICAS(fusion="closest", q_table=q_table).fit()
    builder = "sector" if cas is CAS.CORRECTED_SECTOR else "closest"
    if network is None:
        raise ValueError(f"{cas.value} needs a correction checkpoint")
    net = network if isinstance(network, CorrectionNetwork) else CorrectionNetwork.load(network)
    return CorrectedVICAS(q_table, builder, net.n_slots, w_c, network=net).fit()
