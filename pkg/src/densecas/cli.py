"""Command-line entry point: ``densecas <solve|train|simulate|stress|slice|report>``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import metrics, plotting
from .config import ConfigError
from .correction.network import CorrectionNetwork
from .correction.training import TrainingConfig
from .estimators import CorrectedVICAS, make_policy
from .simulation import (
    CAS,
    AirspaceWorld,
    EpisodeLog,
    ScenarioConfig,
    StressWorld,
    _atomic_write_bytes,
    run_airspace,
    run_stress,
)
from .solver import load, save, value_iterate

logger = logging.getLogger("densecas")

# stream tags keep the seed trees of different commands apart
_STREAM = {"airspace": 1, "stress": 2, "alert": 3, "slice": 4}


class UsageError(Exception):
    pass


def episode_seed(master, stream, *key):
    """Child seed for one episode; depends only on (master, stream, key), never on scheduling."""
    ss = np.random.SeedSequence(int(master), spawn_key=(_STREAM[stream],) + tuple(int(k) for k in key))
    return ss


def n_threads():
    raw = os.environ.get("DENSECAS_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as e:
        raise UsageError(f"DENSECAS_THREADS must be a positive integer, got {raw!r}") from e
    if n < 1:
        raise UsageError(f"DENSECAS_THREADS must be a positive integer, got {raw!r}")
    return n


def _set_numba_threads(n):
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(path, text.encode())


def write_bytes(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(path, payload)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return v


# artifact loading --------------------------------------------------------


def _require(path, what):
    if path is None:
        raise ConfigError(f"{what} path is required")
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _checkpoint_for(cfg, cas):
    sc = cfg["scenario"]
    kind = "sector" if cas is CAS.CORRECTED_SECTOR else "closest"
    path = _require(sc[f"checkpoint_{kind}"], f"{cas.value} checkpoint (scenario.checkpoint_{kind})")
    net = CorrectionNetwork.load(path)
    if net.builder_kind.value != kind:
        raise ConfigError(f"{cas.value} needs a {kind}-builder checkpoint, {path} was trained "
                          f"with builder {net.builder_kind.value}")
    return net


def build_policies(cfg, cas_names):
    sc = cfg["scenario"]
    cas_list = []
    for name in cas_names:
        try:
            cas_list.append(CAS(name))
        except ValueError as e:
            raise ConfigError(f"unknown CAS {name!r}; choose from {[c.value for c in CAS]}") from e
    q = None
    if any(c is not CAS.NOCAS for c in cas_list):
        q = load(_require(sc["qtable"], "Q-table (scenario.qtable)"))
    out = {}
    for cas in cas_list:
        net = _checkpoint_for(cfg, cas) if cas in (CAS.CORRECTED_SECTOR, CAS.CORRECTED_CLOSEST) else None
        out[cas.value] = make_policy(cas, q, net, float(sc["w_c"]))
    return out


# episode workers ---------------------------------------------------------

_WORKER = {}


def _init_worker(cfg, cas_names):
    _set_numba_threads(1)
    _WORKER["cfg"] = cfg
    _WORKER["policies"] = build_policies(cfg, cas_names)


def _run_job(job):
    cfg = _WORKER["cfg"]
    policy = _WORKER["policies"][job["cas"]]
    c = config_mod.constants(cfg)
    sc = cfg["scenario"]
    rng = np.random.default_rng(job["seed_seq"])
    if job["kind"] == "airspace":
        world = AirspaceWorld(float(sc["side"]), float(job["rate"]), float(sc["duration"]))
        scfg = ScenarioConfig(world, job["cas"], job["index"], tuple(sc["speed_range"]), c)
        log = run_airspace(scfg, policy, rng)
    else:
        world = StressWorld(int(job["n"]), float(sc["r_inner"]), float(sc["r_outer"]), float(sc["time_cap"]))
        scfg = ScenarioConfig(world, job["cas"], job["index"], tuple(sc["speed_range"]), c)
        log = run_stress(scfg, policy, rng)
    log.meta.update({k: job[k] for k in ("rate", "n") if k in job})
    log.write(job["path"])
    return job["path"]


def run_jobs(cfg, jobs, cas_names):
    workers = min(n_threads(), len(jobs)) if jobs else 1
    if workers <= 1:
        _init_worker(cfg, cas_names)
        return [_run_job(j) for j in jobs]
    # validate artifacts in the parent so config errors surface with exit 2
    build_policies(cfg, cas_names)
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg, cas_names)) as ex:
        return list(ex.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# commands ----------------------------------------------------------------


def echo_config(cfg, name):
    out = Path(cfg["output_dir"])
    write_text(out / f"{name}.config.json", config_mod.dumps(cfg))


def cmd_solve(cfg, args):
    out = args.out or str(Path(cfg["output_dir"]) / "qtable.dcqt")
    r = cfg["reward"]
    t0 = time.perf_counter()
    q = value_iterate(config_mod.grid(cfg), config_mod.reward(cfg), float(r["gamma"]), float(r["tol"]),
                      int(r["max_iters"]), config_mod.noise(cfg), config_mod.constants(cfg),
                      callback=lambda it, res: logger.info("iteration %d residual %.6g", it, res))
    wall = time.perf_counter() - t0
    try:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        save(q, out)
    except OSError as e:
        raise UsageError(f"cannot write {out}: {e}") from e
    echo_config(cfg, "solve")
    print(f"wrote {out}")
    print(f"iterations {q.iterations} residual {q.residual:.6g} converged {str(q.converged).lower()} "
          f"wall {wall:.1f}s")
    if not q.converged:
        print("error: value iteration did not reach the tolerance", file=sys.stderr)
        return 1
    return 0


def cmd_train(cfg, args):
    sc = cfg["scenario"]
    q = load(_require(sc["qtable"], "Q-table (scenario.qtable)"))
    tcfg = config_mod.training(cfg)
    builder = cfg["training"]["builder"]
    out = Path(args.out or Path(cfg["output_dir"]) / f"correction_{builder}.json")
    est = CorrectedVICAS(q, builder, tcfg.n_slots, tcfg.w_c, training=tcfg,
                         reward=config_mod.correction_reward(cfg),
                         scenario=config_mod.training_world(cfg), constants=config_mod.constants(cfg))
    every = max(1, tcfg.total_steps // 20)
    mark = {"next": every}

    def progress(episode, step, log):
        if step >= mark["next"]:
            mark["next"] += every
            recent = log.returns()[-50:]
            logger.info("step %d episode %d mean return %.3f", step, episode, float(np.mean(recent)))

    est.fit(callback=progress)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        est.network_.save(out)
        write_text(out.with_suffix(".csv"), csv_text(["episode", "steps", "return", "nmacs", "arrived"],
                                                     est.training_log_.to_rows()))
    except OSError as e:
        raise UsageError(f"cannot write {out}: {e}") from e
    echo_config(cfg, "train")
    print(f"wrote {out} ({est.training_log_.steps} steps, {len(est.training_log_.episodes)} episodes)")
    return 0


def _log_path(cfg, stem):
    return str(Path(cfg["output_dir"]) / "logs" / f"{stem}.ndjson.gz")


def cmd_simulate(cfg, args):
    sc = cfg["scenario"]
    jobs = []
    for r_i, rate in enumerate(sc["takeoff_rates"]):
        for cas in sc["cas"]:
            for i in range(int(sc["seeds"])):
                jobs.append({"kind": "airspace", "cas": cas, "rate": float(rate), "index": i,
                             "seed_seq": episode_seed(cfg["seed"], "airspace", r_i, i),
                             "path": _log_path(cfg, f"airspace_{cas}_r{float(rate):g}_s{i:04d}")})
    paths = run_jobs(cfg, jobs, sc["cas"])
    echo_config(cfg, "simulate")
    rows = _metric_rows([EpisodeLog.read(p) for p in paths], cfg)
    header, body = rows
    write_text(Path(cfg["output_dir"]) / "metrics_simulate.csv", csv_text(header, body))
    for cas in sc["cas"]:
        for rate in sc["takeoff_rates"]:
            sel = [r for r in body if r[1] == cas and r[2] == float(rate)]
            nm = [r[header.index("nmac_per_flight_hour")] for r in sel]
            rl = [r[header.index("normalized_route_length")] for r in sel]
            print(f"{cas:>17} rate {float(rate):g}: NMAC/hr {_nanmean(nm):.3f}  route {_nanmean(rl):.3f}  "
                  f"({len(sel)} logs)")
    return 0


def _nanmean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def cmd_stress(cfg, args):
    sc = cfg["scenario"]
    jobs = []
    for n in sc["n_aircraft"]:
        for cas in sc["cas"]:
            for e in range(int(sc["episodes"])):
                jobs.append({"kind": "stress", "cas": cas, "n": int(n), "index": e,
                             "seed_seq": episode_seed(cfg["seed"], "stress", int(n), e),
                             "path": _log_path(cfg, f"stress_{cas}_n{int(n)}_e{e:04d}")})
    paths = run_jobs(cfg, jobs, sc["cas"])
    echo_config(cfg, "stress")
    header, rows = _stress_rows([EpisodeLog.read(p) for p in paths])
    write_text(Path(cfg["output_dir"]) / "stress_simulate.csv", csv_text(header, rows))
    for r in rows:
        print(f"{r[0]:>17} n={r[1]}: P(NMAC) {r[3]:.3f} +/- {r[4]:.3f} over {r[2]} episodes")
    return 0


def _slice_grid(m):
    ext, res = float(m["slice_extent"]), float(m["slice_resolution"])
    xs = np.arange(-ext, ext + res / 2, res)
    return xs, xs.copy()


def slice_fixed(m):
    return [(f[0], f[1], math.radians(f[2]), f[3]) for f in m["slice_fixed"]]


def cmd_slice(cfg, args):
    m = cfg["metrics"]
    policies = build_policies(cfg, cfg["scenario"]["cas"])
    xs, ys = _slice_grid(m)
    fixed = slice_fixed(m)
    c = config_mod.constants(cfg)
    out = Path(cfg["output_dir"]) / "slices"
    for name, pol in policies.items():
        rng = np.random.default_rng(episode_seed(cfg["seed"], "slice", 0))
        raster = metrics.policy_slice(pol, fixed, xs, ys, math.radians(float(m["slice_free_heading_deg"])),
                                      float(m["slice_free_speed"]), constants=c, rng=rng)
        write_text(out / f"slice_{name}.csv", metrics.slice_csv(raster, xs, ys))
        write_bytes(out / f"slice_{name}.svg", plotting.slice_svg(raster, xs, ys, fixed, name))
        counts = np.bincount(raster.ravel(), minlength=6)
        print(f"{name}: " + " ".join(f"{a}={n}" for a, n in zip(("COC", "MAINTAIN", "WR", "WL", "SR", "SL"),
                                                                     counts)))
    echo_config(cfg, "slice")
    return 0


METRIC_HEADER = ["scenario", "cas", "rate", "seed"]


def _metric_rows(logs, cfg):
    dense = float(cfg["metrics"]["dense_threshold"]) if cfg else 0.5
    nmac_range = float(cfg["constants"]["nmac_range"]) if cfg else 150.0
    airspace = sorted((lg for lg in logs if lg.meta.get("scenario") == "airspace"),
                      key=lambda lg: (lg.meta["cas"], lg.meta["rate"], lg.meta["seed"]))
    refs = {}
    for lg in airspace:
        if lg.meta["cas"] == CAS.NOCAS.value:
            refs.setdefault((lg.meta["rate"], lg.meta["seed"]), lg)
    rows = []
    header = None
    for lg in airspace:
        ref = refs.get((lg.meta["rate"], lg.meta["seed"]))
        ref_dist = None
        if ref is not None:
            try:
                ref_dist = metrics.encounter_distribution(ref)
            except ValueError:
                ref_dist = None
        m = metrics.summarize(lg, ref_dist, dense, nmac_range).row()
        if header is None:
            header = METRIC_HEADER + list(m)
        rows.append(["airspace", lg.meta["cas"], float(lg.meta["rate"]), int(lg.meta["seed"])] + list(m.values()))
    return header or METRIC_HEADER, rows


def _stress_rows(logs):
    groups = {}
    for lg in logs:
        if lg.meta.get("scenario") != "stress":
            continue
        groups.setdefault((lg.meta["cas"], int(lg.meta["n_aircraft"])), []).append(lg)
    rows = []
    for (cas, n), lgs in sorted(groups.items()):
        hit = np.array([len(lg.nmac_events) > 0 for lg in lgs], dtype=float)
        p = float(hit.mean())
        dmin = [lg.min_separation for lg in lgs if math.isfinite(lg.min_separation)]
        sev = [metrics.severity(e.min_separation) for lg in lgs for e in lg.nmac_events]
        try:
            eff = metrics.speed_efficiency(_concat(lgs))[0]
        except ValueError:
            eff = float("nan")
        rows.append([cas, n, len(lgs), p, math.sqrt(p * (1 - p) / len(lgs)),
                     float(np.mean(dmin)) if dmin else float("nan"),
                     float(np.mean(sev)) if sev else float("nan"), eff])
    return ["cas", "n_aircraft", "episodes", "p_nmac", "p_nmac_se", "mean_d_min", "nmac_severity",
            "speed_efficiency"], rows


def _concat(logs):
    from .simulation import concatenate_logs

    return concatenate_logs(logs)


def _summary_table(header, rows):
    """Mean +/- standard error across seeds per (cas, rate)."""
    groups = {}
    for r in rows:
        groups.setdefault((r[1], r[2]), []).append(r)
    out = []
    i_n = header.index("nmac_per_flight_hour")
    i_rl = header.index("normalized_route_length")
    i_tv = header.index("d_tv")
    for (cas, rate), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        line = [cas, rate, len(rs)]
        for i in (i_n, i_rl, i_tv):
            vals = [r[i] for r in rs if not math.isnan(r[i])]
            if vals:
                line += list(metrics.mean_se(vals))
            else:
                line += [float("nan"), float("nan")]
        out.append(line)
    return ["cas", "rate", "seeds", "nmac_per_flight_hour", "nmac_se", "route_length", "route_length_se",
            "d_tv", "d_tv_se"], out


def cmd_report(cfg, args):
    log_dir = Path(args.logs or Path(cfg["output_dir"]) / "logs")
    paths = sorted(log_dir.glob("*.ndjson.gz")) if log_dir.is_dir() else []
    if not paths:
        raise UsageError(f"no logs found in {log_dir}")
    logs = [EpisodeLog.read(p) for p in paths]
    out = Path(cfg["output_dir"])
    header, rows = _metric_rows(logs, cfg)
    written = []
    if rows:
        write_text(out / "metrics.csv", csv_text(header, rows))
        th, trows = _summary_table(header, rows)
        write_text(out / "summary.csv", csv_text(th, trows))
        write_bytes(out / "pareto.svg", plotting.pareto_svg([(r[0], r[1], r[5], r[3]) for r in trows]))
        dists = {}
        for key in sorted({(r[1], r[2]) for r in rows}, key=lambda k: (k[1], k[0])):
            sel = [lg for lg in logs if lg.meta.get("scenario") == "airspace"
                   and (lg.meta["cas"], float(lg.meta["rate"])) == key]
            try:
                dists[f"{key[0]} @ {key[1]:g}"] = metrics.encounter_distribution(_concat(sel)).probs
            except ValueError:
                continue
        if dists:
            write_bytes(out / "encounters.svg", plotting.encounter_bars_svg(dists))
        written += ["metrics.csv", "summary.csv", "pareto.svg", "encounters.svg"]
    sh, srows = _stress_rows(logs)
    if srows:
        write_text(out / "stress.csv", csv_text(sh, srows))
        curves = {}
        for cas in sorted({r[0] for r in srows}):
            sel = [r for r in srows if r[0] == cas]
            curves[cas] = ([r[1] for r in sel], [r[3] for r in sel], [r[4] for r in sel])
        write_bytes(out / "stress.svg", plotting.stress_svg(curves))
        written += ["stress.csv", "stress.svg"]
    if args.alert:
        written += _alert_report(cfg, out)
    stamp = time.strftime("%Y-%m-%d %H:%M:%S", time.gmtime())
    lines = [f"# densecas report (generated {stamp} UTC)", "", f"logs: {len(logs)} from {log_dir}", ""]
    if rows:
        lines += ["| CAS | rate | NMAC/hr | route length | D_TV |", "|---|---|---|---|---|"]
        for r in trows:
            lines.append(f"| {r[0]} | {r[1]:g} | {r[3]:.3f} ± {r[4]:.3f} | {r[5]:.3f} ± {r[6]:.3f} | "
                         f"{r[7]:.3f} ± {r[8]:.3f} |")
        lines.append("")
    if srows:
        lines += ["| CAS | n | P(NMAC) |", "|---|---|---|"]
        lines += [f"| {r[0]} | {r[1]} | {r[3]:.3f} ± {r[4]:.3f} |" for r in srows]
        lines.append("")
    write_text(out / "report.md", "\n".join(lines))
    print("\n".join(lines))
    print("wrote " + ", ".join(written + ["report.md"]))
    return 0


def _alert_report(cfg, out):
    m = cfg["metrics"]
    policies = build_policies(cfg, [c for c in cfg["scenario"]["cas"] if c != CAS.NOCAS.value])
    c = config_mod.constants(cfg)
    rows, curves = [], {}
    for name, pol in policies.items():
        ks, ps, ses = [], [], []
        for k in m["alert_k"]:
            rng = np.random.default_rng(episode_seed(cfg["seed"], "alert", int(k)))
            p, se = metrics.alert_frequency(pol, int(k), int(m["alert_samples"]), rng, c,
                                            tuple(cfg["scenario"]["speed_range"]))
            rows.append([name, int(k), p, se])
            ks.append(int(k))
            ps.append(p)
            ses.append(se)
        curves[name] = (ks, ps, ses)
    write_text(out / "alert_frequency.csv", csv_text(["cas", "k", "p_alert", "se"], rows))
    write_bytes(out / "alert_frequency.svg", plotting.alert_frequency_svg(curves))
    return ["alert_frequency.csv", "alert_frequency.svg"]


# argument parsing --------------------------------------------------------


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(t) for t in text.split(",") if t.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from e

    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="densecas", description="Collision avoidance for dense airspace.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. training.alpha=3e-4 (repeatable)")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int)
        return sp

    s = common(sub.add_parser("solve", help="run value iteration and write a Q-table"))
    s.add_argument("--out")
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iters", type=int)

    s = common(sub.add_parser("train", help="train a correction network"))
    s.add_argument("--qtable")
    s.add_argument("--out")
    s.add_argument("--steps", type=int)
    s.add_argument("--builder", choices=["closest", "sector"])

    for name, helptext in (("simulate", "run the take-off-rate airspace"), ("stress", "run annulus stress tests"),
                           ("slice", "render policy slices")):
        s = common(sub.add_parser(name, help=helptext))
        s.add_argument("--cas", type=_csv_list(str))
        s.add_argument("--qtable")
        s.add_argument("--checkpoint-closest")
        s.add_argument("--checkpoint-sector")
        s.add_argument("--w-c", type=float)
        if name == "simulate":
            s.add_argument("--rate", type=_csv_list(float), dest="rates")
            s.add_argument("--seeds", type=int)
            s.add_argument("--duration", type=float)
            s.add_argument("--side", type=float)
        if name == "stress":
            s.add_argument("--n", type=_csv_list(int), dest="n_aircraft")
            s.add_argument("--episodes", type=int)

    s = common(sub.add_parser("report", help="aggregate logs into metric CSVs and SVGs"))
    s.add_argument("--logs", help="log directory (default: OUTPUT_DIR/logs)")
    s.add_argument("--alert", action="store_true", help="also sample alert frequency per intruder count")
    s.add_argument("--qtable")
    s.add_argument("--checkpoint-closest")
    s.add_argument("--checkpoint-sector")
    s.add_argument("--cas", type=_csv_list(str))
    return p


_FLAG_KEYS = {
    "output_dir": "output_dir",
    "seed": "seed",
    "tol": "reward.tol",
    "max_iters": "reward.max_iters",
    "steps": "training.total_steps",
    "builder": "training.builder",
    "qtable": "scenario.qtable",
    "checkpoint_closest": "scenario.checkpoint_closest",
    "checkpoint_sector": "scenario.checkpoint_sector",
    "w_c": "scenario.w_c",
    "cas": "scenario.cas",
    "rates": "scenario.takeoff_rates",
    "seeds": "scenario.seeds",
    "duration": "scenario.duration",
    "side": "scenario.side",
    "n_aircraft": "scenario.n_aircraft",
    "episodes": "scenario.episodes",
}


def resolve_config(args):
    overrides = [config_mod.parse_assignment(s) for s in args.set]
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            overrides.append((key, v))
    cfg = config_mod.load_config(args.config, overrides)
    if args.command == "train" and args.seed is not None:
        cfg["training"]["seed"] = int(args.seed)
    return cfg


COMMANDS = {"solve": cmd_solve, "train": cmd_train, "simulate": cmd_simulate, "stress": cmd_stress,
            "slice": cmd_slice, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        _set_numba_threads(n_threads())
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as e:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
