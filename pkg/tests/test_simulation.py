import math

import numpy as np
import pytest

from densecas.core import Advisory, AircraftState
from densecas.estimators import NoCAS, VICAS
from densecas.simulation import (
    CAS, AirspaceWorld, EpisodeLog, ScenarioConfig, StressWorld, TrainingScenario, TrainingWorld,
    concatenate_logs, detect_nmac_events, nominal_guidance, run_airspace, run_stress, stress_initial_states,
)


def airspace(rate, duration=300.0, side=2000.0, seed=0, cas="nocas"):
    return ScenarioConfig(AirspaceWorld(side, rate, duration), cas, seed)


def head_on(gap=3000.0, v=30.0):
    a = AircraftState(-gap / 2, 0.0, v, 0.0)
    b = AircraftState(gap / 2, 0.0, v, math.pi)
    return [(a, (gap, 0.0)), (b, (-gap, 0.0))]


class TestGuidance:
    def test_aligned(self):
        assert nominal_guidance(AircraftState(0, 0, 30, 0), (1000, 0)) == 0.0

    def test_saturates(self):
        assert nominal_guidance(AircraftState(0, 0, 30, 0), (0, 1000)) == pytest.approx(math.radians(10))
        assert nominal_guidance(AircraftState(0, 0, 30, 0), (0, -1000)) == pytest.approx(-math.radians(10))

    def test_proportional(self):
        d = (1000 * math.cos(math.radians(3)), 1000 * math.sin(math.radians(3)))
        assert nominal_guidance(AircraftState(0, 0, 30, 0), d) == pytest.approx(math.radians(3))

    def test_deadband(self):
        d = (1000 * math.cos(math.radians(0.5)), 1000 * math.sin(math.radians(0.5)))
        assert nominal_guidance(AircraftState(0, 0, 30, 0), d) == 0.0


class TestNmacEvents:
    def test_single_dip(self):
        ev = detect_nmac_events({(0, 1): [400, 200, 140, 145, 300]})
        assert len(ev) == 1 and ev[0].min_separation == 140 and ev[0].onset == 2.0 and ev[0].end == 4.0

    def test_oscillation_two_events(self):
        assert len(detect_nmac_events({(0, 1): [140, 160, 140]})) == 2

    def test_never_close(self):
        assert detect_nmac_events({(0, 1): [151, 400, 1000]}) == []

    def test_boundary_counts(self):
        assert len(detect_nmac_events({(0, 1): [150.0]})) == 1


class TestAirspace:
    def test_zero_rate_empty(self):
        log = run_airspace(airspace(0.0), NoCAS().fit(), np.random.default_rng(0))
        assert log.aircraft == [] and log.flight_hours == 0

    def test_poisson_spawn_moments(self):
        cfg = ScenarioConfig(AirspaceWorld(10_000.0, 5.0, 200.0), "nocas")
        counts = [run_airspace(cfg, NoCAS().fit(), np.random.default_rng(s)).meta["spawned"] for s in range(30)]
        lam = 5.0 * 100.0 * 200.0 / 3600.0
        assert abs(np.mean(counts) - lam) <= 3 * math.sqrt(lam / 30)

    def test_invariants(self, tiny_table):
        pol = VICAS(q_table=tiny_table).fit()
        log = run_airspace(airspace(60.0, duration=400.0, cas="vicasmulti"), pol, np.random.default_rng(3))
        assert len(log.aircraft) > 5
        assert log.flight_seconds == sum(a.airborne_seconds for a in log.aircraft) * log.dt
        for a in log.aircraft:
            xs, ys = a.path()
            chord = math.hypot(xs[-1] - xs[0], ys[-1] - ys[0])
            assert a.path_length >= chord - 1e-9
            assert np.all((a.x >= 0) & (a.x <= 2000) & (a.y >= 0) & (a.y <= 2000))
            assert np.all(a.advisory[a.n_intruders == 0] == Advisory.COC)
            if len(a.t) > 1:
                steps = np.hypot(np.diff(a.x), np.diff(a.y))
                clamped = (a.x[1:] <= 0) | (a.x[1:] >= 2000) | (a.y[1:] <= 0) | (a.y[1:] >= 2000)
                np.testing.assert_allclose(steps[~clamped], a.speed, rtol=1e-9)
        for e in log.nmac_events:
            assert e.min_separation <= 150.0

    def test_deterministic(self, tiny_table):
        pol = VICAS(q_table=tiny_table, temperature=1.0).fit()
        a = run_airspace(airspace(40.0, cas="vicasmulti"), pol, np.random.default_rng(11))
        b = run_airspace(airspace(40.0, cas="vicasmulti"), pol, np.random.default_rng(11))
        assert a.to_records() == b.to_records()

    def test_nocas_straight_routes(self):
        log = run_airspace(airspace(40.0, duration=600.0), NoCAS().fit(), np.random.default_rng(2))
        arrived = [a for a in log.aircraft if a.arrived]
        assert arrived
        for a in arrived:
            assert a.path_length / a.nominal_distance == pytest.approx(1.0, abs=0.02)


class TestStress:
    def test_initial_geometry(self, rng):
        world = StressWorld(7)
        for s, d in stress_initial_states(world, rng):
            r = math.hypot(s.x, s.y)
            assert 2000.0 <= r <= 4000.0
            assert d == pytest.approx((-s.x, -s.y))
            assert math.cos(s.phi - math.atan2(-s.y, -s.x)) == pytest.approx(1.0)

    def test_head_on_nocas_collides(self):
        cfg = ScenarioConfig(StressWorld(2), "nocas")
        log = run_stress(cfg, NoCAS().fit(), np.random.default_rng(0), initial=head_on())
        assert len(log.nmac_events) == 1
        assert log.min_separation < 30.0

    def test_diametric_pair_always_nmac(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            r = rng.uniform(2000, 4000)
            a = rng.uniform(-math.pi, math.pi)
            x, y = r * math.cos(a), r * math.sin(a)
            init = [(AircraftState(x, y, 30.0, a + math.pi), (-x, -y)),
                    (AircraftState(-x, -y, 30.0, a), (x, y))]
            log = run_stress(ScenarioConfig(StressWorld(2), "nocas"), NoCAS().fit(), rng, initial=init)
            assert len(log.nmac_events) >= 1

    def test_far_pair_never_alerts(self, tiny_table):
        init = [(AircraftState(0.0, 0.0, 30.0, 0.0), (3000.0, 0.0)),
                (AircraftState(0.0, 2500.0, 30.0, 0.0), (3000.0, 2500.0))]
        log = run_stress(ScenarioConfig(StressWorld(2), "vicasmulti"), VICAS(q_table=tiny_table).fit(),
                         np.random.default_rng(0), initial=init)
        for a in log.aircraft:
            assert np.all(a.advisory == Advisory.COC)
            assert np.all(a.n_intruders == 0)

    def test_cas_alerts_only_in_range(self, tiny_table):
        log = run_stress(ScenarioConfig(StressWorld(7), "vicasmulti"), VICAS(q_table=tiny_table).fit(),
                         np.random.default_rng(4))
        alerted = np.concatenate([a.advisory != Advisory.COC for a in log.aircraft])
        counts = np.concatenate([a.n_intruders for a in log.aircraft])
        assert alerted.any()
        assert np.all(counts[alerted] > 0)

    def test_rejects_small_fleet(self):
        with pytest.raises(ValueError):
            StressWorld(1)


class TestLogs:
    def test_roundtrip(self, tmp_path, tiny_table):
        log = run_airspace(airspace(60.0, cas="vicasmulti"), VICAS(q_table=tiny_table).fit(),
                           np.random.default_rng(1))
        path = tmp_path / "log.ndjson.gz"
        log.write(path)
        back = EpisodeLog.read(path)
        assert back.to_records() == log.to_records()
        log.write(tmp_path / "again.ndjson.gz")
        assert path.read_bytes() == (tmp_path / "again.ndjson.gz").read_bytes()

    def test_trajectory_csv(self, tmp_path):
        log = run_stress(ScenarioConfig(StressWorld(2), "nocas"), NoCAS().fit(), np.random.default_rng(0),
                         initial=head_on(600.0))
        log.write_trajectory_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,id,x,y,phi,advisory"
        assert len(lines) == 1 + sum(len(a.t) for a in log.aircraft)

    def test_concatenate_keeps_ids_unique(self):
        logs = [run_stress(ScenarioConfig(StressWorld(2), "nocas"), NoCAS().fit(), np.random.default_rng(0),
                           initial=head_on()) for _ in range(3)]
        merged = concatenate_logs(logs)
        ids = [a.id for a in merged.aircraft]
        assert len(ids) == len(set(ids)) == 6
        assert len(merged.nmac_events) == 3


class TestTrainingScenario:
    def test_entry_on_sensing_circle(self, tiny_table, rng):
        sc = TrainingScenario(TrainingWorld(entry_rate=1.0), VICAS(q_table=tiny_table, temperature=1.0).fit())
        sc.reset(rng)
        sc.step(Advisory.COC, rng)
        f = sc.fleet
        assert len(f) == 2
        assert math.hypot(f.x[1] - f.x[0], f.y[1] - f.y[0]) == pytest.approx(1000.0, abs=35.0 * 2)

    def test_entry_angle_histogram(self, rng):
        sc = TrainingScenario(TrainingWorld(entry_angle_weights=[0, 1, 0, 0]))
        angles = np.array([sc.sample_entry_angle(rng) for _ in range(500)])
        assert np.all((angles >= -math.pi / 2) & (angles <= 0))

    def test_bad_histogram(self):
        with pytest.raises(ValueError):
            TrainingScenario(TrainingWorld(entry_angle_weights=[0, 0]))

    def test_cas_enum(self):
        assert {c.value for c in CAS} == {"nocas", "vicasmulti", "vicasclosest", "correctedsector",
                                          "correctedclosest"}
