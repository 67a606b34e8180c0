import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import RegularGridInterpolator

from densecas.core import Advisory, AircraftState, PairwiseObservation, turn_rate
from densecas.dynamics import NoiseModel, observe, pair_sigma_points, step
from densecas.solver import (
    GridSpec, QTable, RewardParams, TabularMDP, extract_action, load, lookup, lookup_batch,
    reward, save, transition_expectation, value_iterate,
)

P = RewardParams(w_rho=1.0, w_a=0.005, w_nmac=100.0, w_conflict=0.1, rho_nmac=150.0)


def obs(rho, theta=0.0, psi=0.0, vo=30.0, vi=30.0):
    return PairwiseObservation(rho, theta, psi, vo, vi)


class TestReward:
    def test_at_nmac_range(self):
        assert reward(obs(150.0), Advisory.COC, P) == pytest.approx(-1.0 - 100.0)

    def test_far_coc(self):
        assert reward(obs(1500.0), Advisory.COC, P) == pytest.approx(-math.exp(-9))
        assert reward(obs(1500.0), Advisory.COC, P) == pytest.approx(-1.23e-4, rel=1e-2)

    def test_far_strong_left(self):
        assert reward(obs(1500.0), Advisory.SL, P) == pytest.approx(-math.exp(-9) - 0.005 * 100 - 0.1)

    def test_maintain_pays_alert_only(self):
        assert reward(obs(1500.0), Advisory.MAINTAIN, P) == pytest.approx(-math.exp(-9) - 0.1)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            RewardParams(w_nmac=-1)


class TestGrid:
    def test_default_shape(self):
        g = GridSpec()
        assert g.shape == (17, 21, 21, 5, 5)
        assert g.axes[1][-1] == pytest.approx(math.pi)
        assert g.axes[1][0] > -math.pi

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            GridSpec(rho=[0, 100, 50])
        with pytest.raises(ValueError):
            GridSpec(v_own=[30.0])


def _random_table(grid, seed=0, gamma=0.9):
    rng = np.random.default_rng(seed)
    return QTable(grid, rng.normal(size=grid.shape + (6,)).astype(np.float32), gamma, 0.0, 1, True)


def _scipy_oracle(q, query):
    """Brute-force multilinear interpolation with explicit periodic padding."""
    rho, th, ps, vo, vi = q.grid.axes

    def pad(a):
        return np.concatenate([[a[-1] - 2 * math.pi], a])

    vals = q.values.astype(np.float64)
    vals = np.concatenate([vals[:, -1:], vals], axis=1)
    vals = np.concatenate([vals[:, :, -1:], vals], axis=2)
    f = RegularGridInterpolator((rho, pad(th), pad(ps), vo, vi), vals)
    r, t, p, a, b = query
    r = np.clip(r, rho[0], rho[-1])
    a = np.clip(a, vo[0], vo[-1])
    b = np.clip(b, vi[0], vi[-1])
    t = math.pi - (math.pi - t) % (2 * math.pi)
    p = math.pi - (math.pi - p) % (2 * math.pi)
    return f([r, t, p, a, b])[0]


class TestLookup:
    def test_grid_point_identity(self, tiny_grid):
        q = _random_table(tiny_grid)
        pts = tiny_grid.points()
        np.testing.assert_allclose(lookup_batch(q, pts), q.flat, atol=1e-6)

    def test_midpoint_is_mean(self, tiny_grid):
        q = _random_table(tiny_grid)
        rho = tiny_grid.axes[0]
        th, ps, vo, vi = tiny_grid.axes[1][2], tiny_grid.axes[2][2], tiny_grid.axes[3][1], tiny_grid.axes[4][1]
        i = (2, 2, 1, 1)
        mid = lookup(q, [0.5 * (rho[1] + rho[2]), th, ps, vo, vi])
        np.testing.assert_allclose(mid, 0.5 * (q.values[1][i] + q.values[2][i]), atol=1e-6)

    def test_periodic_seam(self, tiny_grid):
        q = _random_table(tiny_grid, seed=3)
        base = [400.0, math.pi + 0.1, 0.3, 30.0, 27.0]
        shifted = list(base)
        shifted[1] = base[1] - 2 * math.pi
        np.testing.assert_allclose(lookup(q, base), lookup(q, shifted), atol=1e-9)
        # the seam cell blends the theta = pi and first-angle rows
        th = tiny_grid.axes[1]
        seam = lookup(q, [300.0, 0.5 * (th[-1] + th[0] + 2 * math.pi), th[0], 25.0, 25.0])
        expected = 0.5 * (q.values[2, -1, 0, 0, 0] + q.values[2, 0, 0, 0, 0])
        np.testing.assert_allclose(seam, expected, atol=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(-100, 1500), st.floats(-10, 10), st.floats(-10, 10), st.floats(15, 45), st.floats(15, 45)
    )
    def test_matches_bruteforce_oracle(self, tiny_grid, r, t, p, a, b):
        q = _random_table(tiny_grid, seed=5)
        got = lookup(q, [r, t, p, a, b])
        np.testing.assert_allclose(got, _scipy_oracle(q, (r, t, p, a, b)), atol=1e-9)

    def test_lipschitz(self, tiny_grid, rng):
        q = _random_table(tiny_grid, seed=9)
        base = rng.uniform([0, -3, -3, 25, 25], [1200, 3, 3, 35, 35], size=(200, 5))
        eps = 1e-6
        for d in range(5):
            bumped = base.copy()
            bumped[:, d] += eps
            diff = np.abs(lookup_batch(q, bumped) - lookup_batch(q, base))
            # cell widths are >= 0.78 rad / 10 m / 150 m and values are O(5)
            assert diff.max() < 50 * eps


class TestExtractAction:
    def test_tie_goes_to_coc(self):
        assert extract_action(np.zeros(6)) is Advisory.COC

    def test_unique_max(self):
        v = np.zeros(6)
        v[Advisory.SL] = 1
        assert extract_action(v) is Advisory.SL

    @given(st.lists(st.floats(-100, 100), min_size=6, max_size=6), st.floats(-1e3, 1e3), st.floats(0.01, 100))
    def test_shift_and_scale_invariant(self, vals, c, k):
        v = np.array(vals)
        assert extract_action(v) == extract_action(v + c) or np.isclose(np.sort(v)[-1], np.sort(v)[-2], atol=1e-9)
        assert extract_action(v) == extract_action(v * k)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            extract_action([0, 1, np.nan, 0, 0, 0])


class TestValueIteration:
    def test_gamma_zero_is_reward(self, tiny_grid):
        q = value_iterate(tiny_grid, P, gamma=0.0, tol=1e-9)
        assert q.iterations == 1
        pts = tiny_grid.points()
        expected = np.array([[reward(obs(*p), a, P) for a in Advisory] for p in pts[::37]])
        np.testing.assert_allclose(q.flat[::37], expected.astype(np.float32), rtol=1e-6)

    def test_synthetic_fixed_point(self):
        mdp = TabularMDP([[1.0, 0.0]], np.ones((1, 2, 1)))
        res = value_iterate(mdp, gamma=0.5, tol=1e-12, max_iters=200)
        assert res.converged
        np.testing.assert_allclose(res.q[0], [2.0, 1.0], atol=1e-9)

    def test_contraction_bound(self):
        rng = np.random.default_rng(1)
        T = rng.random((6, 3, 6))
        T /= T.sum(axis=-1, keepdims=True)
        gamma = 0.8
        res = value_iterate(TabularMDP(rng.normal(size=(6, 3)), T), gamma=gamma, tol=1e-10, max_iters=500)
        r = np.array(res.residuals)
        k = np.arange(len(r))
        assert np.all(r <= gamma**k * r[0] * (1 + 1e-9))
        assert np.all(np.diff(r) <= 1e-12)

    def test_residuals_nonincreasing_on_pairwise(self, tiny_table):
        r = np.array(tiny_table.metadata["residuals"])
        assert tiny_table.converged and tiny_table.residual <= 1e-3
        assert np.all(np.diff(r[1:]) <= 1e-9 * r[0])
        assert np.all(r <= 0.9 ** np.arange(len(r)) * r[0] / (1 - 0.9))

    def test_nmac_states_worse_than_far(self, tiny_table, tiny_grid):
        U = tiny_table.values.max(axis=-1)
        rho = tiny_grid.axes[0]
        near = U[rho <= 150.0]
        far = U[np.argmin(np.abs(rho - 1000.0))]
        assert np.all(near < far[None])

    def test_nonconvergence_flagged(self, tiny_grid):
        q = value_iterate(tiny_grid, P, gamma=0.95, tol=1e-9, max_iters=2)
        assert not q.converged and q.iterations == 2 and q.residual > 1e-9

    def test_argument_validation(self, tiny_grid):
        with pytest.raises(ValueError):
            value_iterate(tiny_grid, P, gamma=1.0)
        with pytest.raises(ValueError):
            value_iterate(tiny_grid, P, tol=0.0)


class TestTransitionExpectation:
    def test_zero_table(self, tiny_grid):
        q = QTable(tiny_grid, np.zeros(tiny_grid.shape + (6,)), 0.9)
        for a in Advisory:
            assert transition_expectation(obs(300.0, 0.2, 2.0), a, q) == 0.0

    def test_deterministic_head_on(self, tiny_grid):
        q = _random_table(tiny_grid, seed=2)
        s = obs(600.0, 0.0, math.pi, 30.0, 30.0)
        got = transition_expectation(s, Advisory.MAINTAIN, q, noise=NoiseModel(0.0, 0.0))
        nxt = obs(540.0, 0.0, math.pi, 30.0, 30.0)
        assert got == pytest.approx(lookup(q, nxt).max(), abs=1e-9)

    def test_sigma_summation_oracle(self, tiny_grid):
        q = _random_table(tiny_grid, seed=4)
        noise = NoiseModel(2.0, math.radians(2.0))
        s = obs(420.0, 0.7, -2.1, 25.0, 35.0)
        sig = pair_sigma_points(noise, noise)
        for a in (Advisory.COC, Advisory.SL, Advisory.WR):
            total = 0.0
            for (dvo, dwo, dvi, dwi), w in zip(sig.points, sig.weights):
                own = step(AircraftState(0.0, 0.0, s.v_own + dvo, 0.0), turn_rate(a) + dwo, 1.0)
                x0, y0 = s.rho * math.cos(s.theta), s.rho * math.sin(s.theta)
                intr = step(AircraftState(x0, y0, s.v_int + dvi, s.psi), dwi, 1.0)
                o = observe(own, intr)
                total += w * lookup(q, [o.rho, o.theta, o.psi, s.v_own, s.v_int]).max()
            assert transition_expectation(s, a, q, noise=noise) == pytest.approx(total, abs=1e-9)


class TestPersistence:
    def test_round_trip(self, tiny_table, tmp_path):
        path = tmp_path / "t.dcqt"
        save(tiny_table, path)
        assert load(path) == tiny_table
        assert os.path.exists(str(path) + ".json")

    def test_corrupted_header(self, tiny_table, tmp_path):
        path = tmp_path / "t.dcqt"
        save(tiny_table, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError):
            load(path)

    def test_truncated(self, tiny_table, tmp_path):
        path = tmp_path / "t.dcqt"
        save(tiny_table, path)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(ValueError):
            load(path)

    def test_size_arithmetic(self, tmp_path):
        g = GridSpec([0.0, 1000.0], [0.0, math.pi], [0.0, math.pi], [25.0, 35.0], [25.0, 35.0])
        q = _random_table(g)
        path = tmp_path / "small.dcqt"
        save(q, path)
        # magic + version + ndim + 5 counts + 10 f64 cuts + gamma + 32 states * 6 f32
        assert path.stat().st_size == 4 + 4 + 4 + 5 * 4 + 10 * 8 + 8 + 32 * 6 * 4

    def test_unsolved_rejected(self, tiny_grid, tmp_path):
        with pytest.raises(ValueError):
            save(QTable(tiny_grid, np.zeros(tiny_grid.shape + (6,)), 0.9), tmp_path / "x.dcqt")
