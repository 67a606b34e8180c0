"""Run configuration: JSON sections with documented defaults and strict keys."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, fields

import numpy as np

from .core import Constants
from .correction.reward import CorrectionRewardParams
from .correction.training import TrainingConfig
from .dynamics import NoiseModel
from .simulation import TrainingWorld
from .solver import GridSpec, RewardParams, default_rho_points, uniform_angles


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (maps to exit code 2)."""


def _dc_defaults(cls, skip=()):
    out = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        v = getattr(cls(), f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def defaults():
    training = _dc_defaults(TrainingConfig)
    training["builder"] = "closest"
    return {
        "constants": _dc_defaults(Constants),
        "grid": {"rho": default_rho_points().tolist(), "n_angles": 21, "speeds": [20.0, 25.0, 30.0, 35.0, 40.0]},
        "reward": {**_dc_defaults(RewardParams), "gamma": 0.95, "tol": 1e-3, "max_iters": 1000,
                   "sigma_v": NoiseModel().sigma_v, "sigma_phidot_deg": math.degrees(NoiseModel().sigma_phidot)},
        "correction_reward": _dc_defaults(CorrectionRewardParams),
        "training": training,
        "scenario": {
            "cas": ["nocas", "vicasmulti", "vicasclosest"],
            "side": 10_000.0,
            "takeoff_rates": [5.0],
            "duration": 5000.0,
            "seeds": 1,
            "n_aircraft": [7],
            "r_inner": 2000.0,
            "r_outer": 4000.0,
            "time_cap": 600.0,
            "episodes": 400,
            "speed_range": [25.0, 35.0],
            "qtable": None,
            "checkpoint_closest": None,
            "checkpoint_sector": None,
            "w_c": 0.5,
            "training_world": _dc_defaults(TrainingWorld),
        },
        "metrics": {
            "dense_threshold": 0.5,
            "alert_samples": 10_000,
            "alert_k": [1, 2, 3, 4, 5, 6, 7, 8],
            "slice_fixed": [[600.0, 600.0, -135.0, 30.0], [600.0, -450.0, 143.13, 30.0]],
            "slice_free_heading_deg": 180.0,
            "slice_free_speed": 30.0,
            "slice_extent": 1000.0,
            "slice_resolution": 10.0,
        },
        "seed": 0,
        "output_dir": "densecas_out",
    }


def merge(base, override, path=""):
    """Deep-merge ``override`` into a copy of ``base``; unknown keys raise ConfigError."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and not (key == "training_world" and value is None):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None):
    cfg = defaults()
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = merge(cfg, doc)
    for dotted, value in (overrides or []):
        cfg = merge(cfg, _nest(dotted, value))
    validate(cfg)
    return cfg


def _nest(dotted, value):
    keys = dotted.split(".")
    d = value
    for k in reversed(keys):
        d = {k: d}
    return d


def parse_assignment(text):
    """``section.key=value`` with a JSON value (bare words are taken as strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def validate(cfg):
    try:
        constants(cfg)
        grid(cfg)
        reward(cfg)
        correction_reward(cfg)
        training(cfg)
        training_world(cfg)
        noise(cfg)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    sc = cfg["scenario"]
    if int(sc["seeds"]) < 1 or int(sc["episodes"]) < 1:
        raise ConfigError("scenario.seeds and scenario.episodes must be >= 1")
    if not 0.0 <= float(sc["w_c"]) <= 1.0:
        raise ConfigError("scenario.w_c must lie in [0, 1]")
    if cfg["training"]["builder"] not in ("closest", "sector"):
        raise ConfigError("training.builder must be 'closest' or 'sector'")


def dumps(cfg):
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


# typed views -------------------------------------------------------------


def constants(cfg):
    return Constants(**cfg["constants"])


def grid(cfg):
    g = cfg["grid"]
    return GridSpec(np.asarray(g["rho"], dtype=float), uniform_angles(int(g["n_angles"])),
                    uniform_angles(int(g["n_angles"])), np.asarray(g["speeds"], dtype=float),
                    np.asarray(g["speeds"], dtype=float))


def reward(cfg):
    r = {k: v for k, v in cfg["reward"].items() if k in {f.name for f in fields(RewardParams)}}
    return RewardParams(**r)


def noise(cfg):
    r = cfg["reward"]
    return NoiseModel(float(r["sigma_v"]), math.radians(float(r["sigma_phidot_deg"])))


def correction_reward(cfg):
    return CorrectionRewardParams(**cfg["correction_reward"])


def training(cfg):
    t = {k: v for k, v in cfg["training"].items() if k != "builder"}
    t["hidden"] = tuple(t["hidden"])
    return TrainingConfig(**t)


def training_world(cfg):
    w = dict(cfg["scenario"]["training_world"])
    w["dest_range"] = tuple(w["dest_range"])
    return TrainingWorld(**w)


def as_dict(obj):
    return asdict(obj)
