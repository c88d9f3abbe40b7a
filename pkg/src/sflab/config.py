"""Experiment configuration files.

One experiment per file, flat ``key = value`` lines, ``#`` comments, lists
as comma-separated values.  Angles accept ``pi`` forms such as ``pi``,
``-pi/2`` or ``0.5*pi``.  Unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

MODES = ("sf", "mod2", "eta", "scan-a", "scan-m", "interp", "staple", "gauge-gen")
GAUGE_KINDS = ("trivial", "uniform", "localized", "holonomy", "random", "file")
WALL_KINDS = ("torus", "band", "disk")


class ConfigError(ValueError):
    pass


_ANGLE = re.compile(r"^\s*([+-]?)\s*(?:(\d*\.?\d+(?:[eE][+-]?\d+)?)\s*\*?\s*)?pi\s*(?:/\s*(\d*\.?\d+))?\s*$")


def parse_angle(text: str) -> float:
    text = text.strip()
    m = _ANGLE.match(text)
    if m:
        sign, coef, den = m.groups()
        val = (float(coef) if coef else 1.0) * math.pi / (float(den) if den else 1.0)
        return -val if sign == "-" else val
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot read {text!r} as an angle") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot read {text!r} as a boolean")


def _list(conv):
    def parse(text: str):
        items = [x for x in (s.strip() for s in text.split(",")) if x]
        return tuple(conv(x) for x in items)
    return parse


def _optional(conv):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else conv(text)
    return parse


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "sf"
    label: str = ""
    d: int = 2
    N: int = 16
    N_list: tuple[int, ...] = ()
    bc_phase: tuple[float, ...] | None = None
    gauge: str = "uniform"
    Q: int = 0
    alpha: tuple[float, ...] | None = None
    seed: int = 0
    noise: float = 0.0
    gauge_file: str | None = None
    wall: str = "torus"
    wall_lo: float = 0.25
    wall_hi: float = 0.75
    wall_center: tuple[float, ...] | None = None
    wall_radius: float = 0.25
    wall_complement: bool = False
    edge_kappa: float | None = None
    m: float = 1.0
    m_list: tuple[float, ...] = ()
    t_grid: int = 16
    zero_tol: float = 1e-10
    max_depth: int = 20
    window: float | None = None
    convention: str = "downward"
    iterative: bool = False
    fine_N: int = 0
    fine_ratio: int = 4
    coarse_N_list: tuple[int, ...] = (4, 8, 16, 32)
    samples: int = 20
    trials: int = 8
    m0: float = 1.0
    output: str | None = None

    @property
    def bc(self) -> tuple[float, ...]:
        return self.bc_phase if self.bc_phase is not None else (0.0,) * self.d

    @property
    def spinor_dim(self) -> int:
        return 2 ** (self.d // 2) if self.d % 2 == 0 else (1 if self.d == 1 else 4)

    def tracker_window(self, m: float | None = None) -> float:
        return self.window if self.window is not None else 10.0 * (m if m is not None else self.m)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Short content hash of the configuration (stable across runs)."""
        doc = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(doc.encode()).hexdigest()[:12]

    def replace(self, **changes) -> "ExperimentConfig":
        doc = self.to_dict()
        doc.update(changes)
        return validate(ExperimentConfig(**doc))


_PARSERS = {
    "mode": str.strip,
    "label": str.strip,
    "d": int,
    "N": int,
    "N_list": _list(int),
    "bc_phase": _optional(_list(parse_angle)),
    "gauge": str.strip,
    "Q": int,
    "alpha": _optional(_list(parse_angle)),
    "seed": int,
    "noise": float,
    "gauge_file": _optional(str.strip),
    "wall": str.strip,
    "wall_lo": float,
    "wall_hi": float,
    "wall_center": _optional(_list(float)),
    "wall_radius": float,
    "wall_complement": _bool,
    "edge_kappa": _optional(float),
    "m": float,
    "m_list": _list(float),
    "t_grid": int,
    "zero_tol": float,
    "max_depth": int,
    "window": _optional(float),
    "convention": str.strip,
    "iterative": _bool,
    "fine_N": int,
    "fine_ratio": int,
    "coarse_N_list": _list(int),
    "samples": int,
    "trials": int,
    "m0": float,
    "output": _optional(str.strip),
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.mode in MODES, f"unknown mode {cfg.mode!r}; expected one of {', '.join(MODES)}")
    need(cfg.d >= 1, "d must be >= 1")
    need(cfg.N >= 2, "N must be >= 2")
    need(all(n >= 2 for n in cfg.N_list), "every N in N_list must be >= 2")
    need(cfg.bc_phase is None or len(cfg.bc_phase) == cfg.d, f"bc_phase needs {cfg.d} entries")
    need(cfg.alpha is None or len(cfg.alpha) == cfg.d, f"alpha needs {cfg.d} entries")
    need(cfg.gauge in GAUGE_KINDS, f"unknown gauge kind {cfg.gauge!r}")
    need(cfg.gauge != "file" or cfg.gauge_file, "gauge = file needs gauge_file")
    need(0.0 <= cfg.noise <= 0.05, "noise must lie in [0, 0.05]")
    need(cfg.wall in WALL_KINDS, f"unknown wall kind {cfg.wall!r}")
    need(cfg.wall_center is None or len(cfg.wall_center) == cfg.d, f"wall_center needs {cfg.d} entries")
    need(cfg.edge_kappa is None or -1.0 <= cfg.edge_kappa <= 1.0, "edge_kappa must lie in [-1, 1]")
    need(cfg.m > 0, f"mass must be positive, got {cfg.m}")
    need(all(m > 0 for m in cfg.m_list), "every mass in m_list must be positive")
    need(cfg.t_grid >= 1, "t_grid must be positive")
    need(cfg.zero_tol > 0, "zero_tol must be positive")
    need(cfg.max_depth >= 0, "max_depth must be non-negative")
    need(cfg.window is None or cfg.window > 0, "window must be positive")
    need(cfg.convention in ("downward", "upward"), "convention is downward or upward")
    need(cfg.fine_N == 0 or cfg.fine_N >= 2 * cfg.N, "fine_N must be 0 or at least 2 N")
    need(cfg.fine_ratio >= 2, "fine_ratio must be >= 2")
    need(all(n >= 2 for n in cfg.coarse_N_list), "every coarse N must be >= 2")
    need(cfg.samples >= 2, "samples must be >= 2")
    need(cfg.trials >= 1, "trials must be >= 1")
    need(cfg.m0 != 0, "m0 must be non-zero")
    need(cfg.mode != "scan-a" or cfg.N_list, "scan-a needs N_list")
    need(cfg.mode != "scan-m" or cfg.m_list, "scan-m needs m_list")
    need(cfg.mode != "mod2" or cfg.d % 2 == 1, "mod2 runs in odd dimension")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in cp["experiment"].items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _PARSERS[key](raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return validate(ExperimentConfig(**values))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (lists as comma lists, floats by repr)."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, tuple):
            s = ", ".join(repr(x) for x in v)
        else:
            s = repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
