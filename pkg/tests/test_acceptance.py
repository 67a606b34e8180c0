"""Exit criteria, each reported as one PASS/FAIL line at the end of the run.

The default-grid Q-table and the desk-scale correction network are built once
and cached (see ``artifacts.py``); a cold cache adds roughly ten minutes.
"""

import csv
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import artifacts
from densecas import metrics
from densecas.cli import episode_seed, main
from densecas.correction import CorrectionNetwork, TrainingConfig, td_gradients, td_loss
from densecas.correction.replay import Transitions
from densecas.correction.state import state_dim
from densecas.estimators import make_policy
from densecas.simulation import AircraftRecord, EpisodeLog, NmacEvent
from densecas.solver import TabularMDP, value_iterate

pytestmark = pytest.mark.acceptance

TESTS = Path(__file__).parent


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    return {"qtable": str(artifacts.table_path()), "closest": str(artifacts.network_path("closest")),
            "dir": tmp_path_factory.mktemp("acceptance")}


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def run_cli(*args):
    code = main([str(a) for a in args])
    assert code == 0, f"densecas {' '.join(map(str, args))} exited {code}"


def artifacts_args(desk, out):
    return ["--output-dir", out, "--qtable", desk["qtable"], "--checkpoint-closest", desk["closest"]]


# ---------------------------------------------------------------------------


def test_a1_solver_fixed_point(acceptance):
    t0 = time.perf_counter()
    res = value_iterate(TabularMDP([[1.0, 0.0]], np.ones((1, 2, 1))), gamma=0.5, tol=1e-12, max_iters=200)
    err = float(np.max(np.abs(res.q[0] - [2.0, 1.0])))
    r = np.array(res.residuals)
    bound = bool(np.all(r <= 0.5 ** np.arange(len(r)) * r[0] * (1 + 1e-12)))
    wall = time.perf_counter() - t0
    ok = err <= 1e-9 and bound and wall < 1.0
    acceptance("A1", ok, f"|Q - (2, 1)| = {err:.2e}, contraction bound {bound}, {wall:.3f}s")
    assert ok


def test_a2_td_gradient(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    dim, n = state_dim(4), 100
    batch = Transitions(rng.normal(size=(n, dim)) * 300, rng.integers(0, 6, size=n), rng.normal(size=n),
                        rng.normal(size=(n, dim)) * 300, rng.random(n) < 0.2, rng.normal(size=(n, 6)),
                        rng.normal(size=(n, 6)), rng.random(n) < 0.7)
    cfg = TrainingConfig(gamma=0.9)
    net = CorrectionNetwork(hidden=(2,), zero_output=False, seed=3)
    target = CorrectionNetwork(hidden=(2,), zero_output=False, seed=4)
    _, grads = td_gradients(net, target, batch, cfg)
    worst, h = 0.0, 1e-6
    for p, g in zip(net.params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = td_loss(net, target, batch, cfg)
            p[idx] = old - h
            down = td_loss(net, target, batch, cfg)
            p[idx] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(1e-8, abs(fd) + abs(g[idx])))
    wall = time.perf_counter() - t0
    ok = worst <= 1e-4 and wall < 30
    acceptance("A2", ok, f"max relative gradient error {worst:.2e} over 100 transitions, {wall:.1f}s")
    assert ok


# brute-force metric oracles -------------------------------------------------


def synthetic_log(rng):
    aircraft, events = [], []
    for i in range(int(rng.integers(1, 6))):
        n = int(rng.integers(2, 40))
        steps = rng.normal(size=(n - 1, 2)) * 30
        start = rng.uniform(0, 2000, size=2)
        xy = np.vstack([start, start + np.cumsum(steps, axis=0)])
        arrived = bool(rng.random() < 0.7)
        dest = tuple(xy[-1] + rng.normal(size=2) * 20) if arrived else tuple(rng.uniform(0, 2000, size=2))
        counts = rng.integers(0, 9, size=n)
        aircraft.append(AircraftRecord(i, 0.0, tuple(start), dest, 30.0, np.arange(n, dtype=float), xy[:, 0],
                                       xy[:, 1], np.zeros(n), np.zeros(n, dtype=int), counts, arrived,
                                       float(n) if arrived else None))
    for _ in range(int(rng.integers(0, 5))):
        events.append(NmacEvent(0, 1, float(rng.uniform(0, 100)), float(rng.uniform(0, 150))))
    return EpisodeLog(aircraft, events, 1.0, 100.0)


def brute_route(log):
    ratios = []
    for a in log.aircraft:
        if not a.arrived:
            continue
        pts = list(zip(a.x.tolist(), a.y.tolist())) + [a.dest]
        length = sum(math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2) for (x0, y0), (x1, y1) in zip(pts, pts[1:]))
        chord = math.sqrt((a.dest[0] - a.spawn[0]) ** 2 + (a.dest[1] - a.spawn[1]) ** 2)
        ratios.append(length / chord)
    return sum(ratios) / len(ratios) if ratios else None


def brute_distribution(log):
    bins = [0] * 6
    for a in log.aircraft:
        for c in a.n_intruders.tolist():
            if c >= 1:
                bins[min(c, 6) - 1] += 1
    total = sum(bins)
    return [b / total for b in bins] if total else None


def test_a3_metric_oracles(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        log, ref = synthetic_log(rng), synthetic_log(rng)
        hours = sum(len(a.t) for a in log.aircraft) / 3600.0
        worst = max(worst, abs(metrics.nmac_rate(log) - len(log.nmac_events) / hours))
        route = brute_route(log)
        if route is not None:
            worst = max(worst, abs(metrics.route_length_ratio(log)[0] - route))
        p, q = brute_distribution(log), brute_distribution(ref)
        if p is not None:
            got = metrics.encounter_distribution(log).probs
            worst = max(worst, max(abs(a - b) for a, b in zip(got, p)))
            if q is not None:
                tv = 0.5 * sum(abs(a - b) for a, b in zip(p, q))
                got_tv = metrics.tv_divergence(metrics.encounter_distribution(log), metrics.encounter_distribution(ref))
                worst = max(worst, abs(got_tv - tv))
        for e in log.nmac_events:
            worst = max(worst, abs(metrics.severity(e.min_separation) - max(0.0, (150.0 - e.min_separation) / 150.0)))
    ok = worst <= 1e-12
    acceptance("A3", ok, f"max deviation from brute force {worst:.1e} over 50 random logs")
    assert ok


# closed-loop orderings -------------------------------------------------------


def per_cas(rows, key):
    out = {}
    for r in rows:
        out.setdefault(r["cas"], []).append(float(r[key]))
    return {k: np.array(v) for k, v in out.items()}


def test_a4_pairwise_safety_ordering(desk, acceptance):
    # 2 km world at 25 take-offs/hr puts as many aircraft per km^2 in the air as the 10 km world at 5/hr
    out = desk["dir"] / "a4"
    t0 = time.perf_counter()
    run_cli("simulate", *artifacts_args(desk, out), "--cas", "nocas,vicasclosest", "--side", 2000, "--rate", 25,
            "--duration", 5000, "--seeds", 30)
    wall = time.perf_counter() - t0
    nm = per_cas(read_csv(out / "metrics_simulate.csv"), "nmac_per_flight_hour")
    base, pair = nm["nocas"].mean(), nm["vicasclosest"].mean()
    factor = base / pair if pair > 0 else math.inf
    ok = factor >= 2.0 and wall < 600
    acceptance("A4", ok, f"NMAC/hr NoCAS {base:.2f} vs VICASClosest {pair:.2f} ({factor:.1f}x, need >= 2x), "
                         f"30 seeds, {wall:.0f}s")
    assert ok


def test_a5_dense_orderings(desk, acceptance):
    out = desk["dir"] / "a5"
    run_cli("simulate", *artifacts_args(desk, out), "--cas", "vicasclosest,vicasmulti,correctedclosest",
            "--side", 2000, "--rate", 100, "--duration", 2000, "--seeds", 10)
    rows = read_csv(out / "metrics_simulate.csv")
    nm, rl = per_cas(rows, "nmac_per_flight_hour"), per_cas(rows, "normalized_route_length")
    excess = rl["vicasmulti"].mean() / rl["vicasclosest"].mean() - 1
    both = (nm["correctedclosest"] <= nm["vicasclosest"]) & (rl["correctedclosest"] <= rl["vicasmulti"])
    ok = excess >= 0.5 and both.sum() >= 8
    acceptance("A5", ok, f"route VICASMulti {rl['vicasmulti'].mean():.2f} vs VICASClosest "
                         f"{rl['vicasclosest'].mean():.2f} (+{100 * excess:.0f}%, need +50%); CorrectedClosest "
                         f"NMAC/hr {nm['correctedclosest'].mean():.2f} vs {nm['vicasclosest'].mean():.2f}, route "
                         f"{rl['correctedclosest'].mean():.2f} vs {rl['vicasmulti'].mean():.2f}, both hold on "
                         f"{both.sum()}/10 seeds (need 8)")
    assert ok


def test_a6_alert_frequency(desk, acceptance):
    q = artifacts.default_table()
    policies = {"vicasmulti": make_policy("vicasmulti", q),
                "correctedclosest": make_policy("correctedclosest", q, CorrectionNetwork.load(desk["closest"]))}
    curves = {}
    for name, pol in policies.items():
        curves[name] = [metrics.alert_frequency(pol, k, 10_000, np.random.default_rng(episode_seed(0, "alert", k)))
                        for k in range(1, 9)]
    multi = curves["vicasmulti"]
    monotone = all(b[0] >= a[0] - 2 * math.hypot(a[1], b[1]) for a, b in zip(multi, multi[1:]))
    below = curves["correctedclosest"][-1][0] < multi[-1][0]
    ok = monotone and below
    acceptance("A6", ok, "VICASMulti " + " ".join(f"{p:.3f}" for p, _ in multi) + f" (monotone within 2se "
               f"{monotone}); k=8 CorrectedClosest {curves['correctedclosest'][-1][0]:.3f} vs {multi[-1][0]:.3f}")
    assert ok


def test_a7_stress_ordering(desk, acceptance):
    out = desk["dir"] / "a7"
    run_cli("stress", *artifacts_args(desk, out), "--cas", "vicasclosest,vicasmulti,correctedclosest",
            "--n", 7, "--episodes", 400)
    p = {r["cas"]: float(r["p_nmac"]) for r in read_csv(out / "stress_simulate.csv")}
    ok = p["vicasclosest"] > p["vicasmulti"] >= p["correctedclosest"]
    acceptance("A7", ok, f"P(NMAC) at n=7 over 400 episodes: VICASClosest {p['vicasclosest']:.4f} > "
                         f"VICASMulti {p['vicasmulti']:.4f} >= CorrectedClosest {p['correctedclosest']:.4f}")
    assert ok


def test_a8_determinism(desk, acceptance, monkeypatch):
    trees = []
    for run, threads in enumerate(("1", "1", "2")):
        monkeypatch.setenv("DENSECAS_THREADS", threads)
        out = desk["dir"] / f"a8_{run}"
        cas = "nocas,vicasmulti,vicasclosest,correctedclosest"
        run_cli("simulate", *artifacts_args(desk, out), "--cas", cas, "--side", 2000, "--rate", 100,
                "--duration", 300, "--seeds", 2)
        run_cli("stress", *artifacts_args(desk, out), "--cas", cas, "--n", "3,5", "--episodes", 3)
        run_cli("report", *artifacts_args(desk, out), "--cas", cas)
        trees.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
                      if p.suffix in (".gz", ".csv", ".svg")})
    same = trees[0] == trees[1] == trees[2]
    # 8 airspace + 24 stress logs, 5 CSVs (simulate, stress, metrics, summary, stress), 3 SVGs
    ok = same and len(trees[0]) == 40
    acceptance("A8", ok, f"{len(trees[0])} logs, CSVs and SVGs byte-identical across repeats and "
                         f"DENSECAS_THREADS=1/2: {same}")
    assert ok


PROPERTY_SUITES = [
    "test_dynamics.py::test_observe_rotation_translation_invariant",
    "test_solver.py::TestLookup",
    "test_decomposition.py::TestFuse",
    "test_decomposition.py::TestSoftmax::test_shift_invariance",
    "test_correction.py::TestReplay::test_uniform_sampling",
    "test_metrics.py::TestEncounters::test_normalized",
]


def test_a9_property_suites(acceptance):
    r = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider"]
                       + [str(TESTS / s) for s in PROPERTY_SUITES], capture_output=True, text=True, cwd=TESTS.parent)
    summary = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr.strip()[-200:]
    ok = r.returncode == 0
    acceptance("A9", ok, f"{len(PROPERTY_SUITES)} property suites: {summary}")
    assert ok, r.stdout[-3000:]
