"""Flat key-value run configuration.

A config file is a YAML mapping using only the keys in :data:`KEYS`; command
line flags override file values, and ``CANYONPERC_OUT_DIR`` overrides the
output directory.  A JSON sidecar written by a sweep is also accepted, in
which case its ``resolved_config`` block is used.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import ParameterError
from .geometry import Window
from .montecarlo import AXES
from .pointprocess import MODES, ParamPoint

ENV_OUT_DIR = "CANYONPERC_OUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    gamma: float = 20.0
    window_km: float = 30.0
    margin_km: float | None = None
    p: float = 1.0
    U: float = 0.0
    H: float = 1.0
    mode: str = "canyon"
    site_perc: bool = False
    axis: str | None = None
    grid_min: float | None = None
    grid_max: float | None = None
    grid_steps: int | None = None
    grid_list: tuple[float, ...] | None = None
    n_reps: int = 100
    master_seed: int = 0
    out_dir: str = "results"
    threads: int | None = None
    coupled: bool = False

    def point(self) -> ParamPoint:
        return ParamPoint(p=self.p, U=self.U, H=self.H, gamma=self.gamma,
                          window=Window(self.window_km), mode=self.mode)

    def grid(self) -> list[float]:
        if self.grid_list is not None:
            return [float(v) for v in self.grid_list]
        if None in (self.grid_min, self.grid_max, self.grid_steps):
            return []
        return [float(v) for v in
                np.round(np.linspace(self.grid_min, self.grid_max, self.grid_steps), 10)]

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["grid_list"] is not None:
            d["grid_list"] = list(d["grid_list"])
        return d


KEYS = tuple(f.name for f in fields(RunConfig))
_FLOAT = {"gamma", "window_km", "margin_km", "p", "U", "H", "grid_min", "grid_max"}
_INT = {"grid_steps", "n_reps", "master_seed", "threads"}
_BOOL = {"site_perc", "coupled"}


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _FLOAT:
        return float(value)
    if key in _INT:
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{key} must be an integer")
        return int(value)
    if key in _BOOL:
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{key} must be a boolean")
        return bool(value)
    if key == "grid_list":
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(float(v) for v in value)
    return str(value)


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        data = json.loads(text)
        if isinstance(data, dict) and "resolved_config" in data:
            data = data["resolved_config"]
    else:
        data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: config must be a flat key-value mapping")
    return data


def parse_config(path: str | Path | None = None, overrides: dict | None = None,
                 env: dict | None = None) -> tuple[RunConfig, dict]:
    """Resolve defaults < file < flags < environment (output dir only).

    Returns the config and a ``{key: source}`` provenance map.
    """
    env = os.environ if env is None else env
    values: dict = {}
    source = {k: "default" for k in KEYS}
    layers = [("file", load_file(path) if path else {}), ("flag", overrides or {})]
    for origin, layer in layers:
        unknown = sorted(set(layer) - set(KEYS))
        if unknown:
            raise ParameterError(f"unknown config key(s): {', '.join(unknown)}")
        for key, raw in layer.items():
            if raw is None and origin == "flag":
                continue
            try:
                values[key] = _coerce(key, raw)
            except (TypeError, ValueError) as exc:
                raise ParameterError(f"bad value for {key}: {raw!r} ({exc})") from None
            source[key] = origin
    if env.get(ENV_OUT_DIR):
        values["out_dir"] = env[ENV_OUT_DIR]
        source["out_dir"] = "env"
    cfg = RunConfig(**values)
    problems = validate(cfg)
    if problems:
        raise ParameterError("invalid configuration: " + "; ".join(problems))
    return cfg, source


def validate(cfg: RunConfig, need_axis: bool = False) -> list[str]:
    out = []

    def finite(name, v, lo=None, strict=False):
        if v is None:
            return
        if not math.isfinite(v) or (lo is not None and (v <= lo if strict else v < lo)):
            bound = f"> {lo}" if strict else f">= {lo}"
            out.append(f"{name}={v!r} must be finite{'' if lo is None else ' and ' + bound}")

    if not (math.isfinite(cfg.p) and 0 <= cfg.p <= 1):
        out.append(f"p={cfg.p!r} must lie in [0, 1]")
    finite("U", cfg.U, 0)
    finite("H", cfg.H, 0, strict=True)
    finite("gamma", cfg.gamma, 0, strict=True)
    finite("window_km", cfg.window_km, 0, strict=True)
    finite("margin_km", cfg.margin_km, 0)
    if cfg.mode not in MODES:
        out.append(f"mode={cfg.mode!r} must be one of {MODES}")
    if cfg.n_reps < 1:
        out.append(f"n_reps={cfg.n_reps} must be >= 1")
    if cfg.threads is not None and cfg.threads < 1:
        out.append(f"threads={cfg.threads} must be >= 1")
    if cfg.site_perc and cfg.U != 0 and cfg.axis != "U":
        out.append("site_perc requires U = 0")
    if cfg.axis is None:
        if need_axis:
            out.append("axis is required")
        return out
    if cfg.axis not in AXES:
        out.append(f"axis={cfg.axis!r} must be one of {AXES}")
        return out
    if cfg.grid_steps is not None and cfg.grid_steps < 1:
        out.append(f"grid_steps={cfg.grid_steps} must be >= 1")
        return out
    grid = cfg.grid()
    if not grid:
        out.append("grid is empty (give grid_list or grid_min/grid_max/grid_steps)")
    elif any(b <= a for a, b in zip(grid, grid[1:])):
        out.append("grid must be strictly increasing")
    for v in grid:
        if cfg.axis == "p" and not (math.isfinite(v) and 0 <= v <= 1):
            out.append(f"grid value p={v!r} outside [0, 1]")
        elif cfg.axis == "U" and not (math.isfinite(v) and v >= 0):
            out.append(f"grid value U={v!r} must be >= 0")
        elif cfg.axis == "H" and not (math.isfinite(v) and v > 0):
            out.append(f"grid value H={v!r} must be > 0")
    if cfg.site_perc and cfg.axis == "U":
        out.append("site_perc cannot sweep U")
    return out
