"""JSON pipeline configuration.

Every section is optional; missing keys fall back to :data:`DEFAULTS`, which
describe a five-microphone head array on a 6 cm rigid sphere, designed with
the joint polynomial method (P = 4, five prototype directions) under a
-20 dB white-noise-gain bound, with 1024-tap filters at 16 kHz.
"""

from __future__ import annotations

import copy
import json
from typing import Any

from .core import (ArrayGeometry, DesignGrid, Direction, DomainError, PolynomialOrderSpec,
                   head_geometry)
from .solver import SolverOptions

DEFAULTS: dict[str, Any] = {
    "speed_of_sound": 343.0,
    "geometry": {"preset": "head5", "radius": 0.06},
    "steering": {"model": "sphere"},
    "grid": {
        "f_lo_hz": 300.0,
        "f_hi_hz": 5000.0,
        "num_freqs": 129,
        "sample_rate_hz": 16000.0,
        "theta_deg": 56.4,
        "phi_step_deg": 5.0,
    },
    "design": {
        "method": "rlsfip",
        "P": 4,
        "plds_deg": [0.0, 45.0, 90.0, 135.0, 180.0],
        "look_deg": 90.0,
        "gamma_db": -20.0,
        "mainlobe_width_deg": 30.0,
        "workers": 1,
        "solver": {},
    },
    "fir": {"length": 1024, "transition_hz": 50.0},
    "eval": {"look_deg": 90.0, "phi_step_deg": 5.0, "stage": "post-fir"},
}

_SECTIONS = set(DEFAULTS)


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path}{k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict) and k not in ("geometry", "steering", "solver"):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        build_geometry(cfg)
        build_grid(cfg)
        d = cfg["design"]
        if d["method"] not in ("rlsfi", "rlsfip"):
            raise ConfigError(f"design.method must be 'rlsfi' or 'rlsfip', got {d['method']!r}")
        if d["method"] == "rlsfip":
            build_order_spec(cfg)
        if int(cfg["fir"]["length"]) < 2:
            raise ConfigError("fir.length must be at least 2")
        SolverOptions(**d["solver"])
        if cfg["steering"].get("model") not in ("free_field", "sphere", "measured"):
            raise ConfigError(f"unknown steering model {cfg['steering'].get('model')!r}")
        if cfg["steering"]["model"] == "measured" and "path" not in cfg["steering"]:
            raise ConfigError("measured steering needs a 'path'")
    except ConfigError:
        raise
    except (DomainError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def build_geometry(cfg: dict) -> ArrayGeometry:
    g = cfg["geometry"]
    if g.get("preset") == "head5":
        return head_geometry(float(g.get("radius", 0.06)))
    if "preset" in g:
        raise ConfigError(f"unknown geometry preset {g['preset']!r}")
    return ArrayGeometry.from_dict(g)


def build_grid(cfg: dict) -> DesignGrid:
    g = cfg["grid"]
    return DesignGrid.uniform(float(g["f_lo_hz"]), float(g["f_hi_hz"]), int(g["num_freqs"]),
                              float(g["sample_rate_hz"]), float(g["theta_deg"]), float(g["phi_step_deg"]))


def build_order_spec(cfg: dict) -> PolynomialOrderSpec:
    d = cfg["design"]
    theta = float(cfg["grid"]["theta_deg"])
    return PolynomialOrderSpec(int(d["P"]), tuple(Direction(float(p), theta) for p in d["plds_deg"]))


def solver_options(cfg: dict) -> SolverOptions:
    return SolverOptions(**cfg["design"]["solver"])


def steering_model(cfg: dict):
    s = cfg["steering"]
    return {"kind": "measured", "path": s["path"]} if s["model"] == "measured" else s["model"]
