"""Flat key=value run configuration.

The whole benchmark suite is expressible with a dozen scalar keys, so
the config format is one `key = value` pair per line with `#` comments;
no nesting.  Unknown keys are rejected, constraints are validated, and
parse(render(cfg)) round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .problems import PROBLEM_NAMES
from .solver import MODELS


@dataclass
class SolverConfig:
    model: str
    order: int
    problem: str
    n_cells: int
    output: str | None = None
    cfl: float = 0.95
    path_exponent: int = 1
    simpson_intervals: int = 1
    t_end: float | None = None
    steady_state: bool = False
    snapshots: tuple = ()
    radiation_constant: float = 1.0
    light_speed: float = 1.0
    z_left: float | None = None
    z_right: float | None = None

    def __post_init__(self):
        validate_config(self)


def validate_config(cfg: SolverConfig):
    if cfg.model not in MODELS:
        raise ValidationError(f"model must be one of {MODELS}, got {cfg.model!r}", key="model")
    if cfg.order < 1:
        raise ValidationError("order must be >= 1", key="order")
    if cfg.problem not in PROBLEM_NAMES:
        raise ValidationError(
            f"problem must be one of {PROBLEM_NAMES}, got {cfg.problem!r}", key="problem"
        )
    if cfg.n_cells < 4:
        raise ValidationError("n_cells must be >= 4", key="n_cells")
    if not 0.0 < cfg.cfl < 1.0:
        raise ValidationError("cfl must lie in (0, 1)", key="cfl")
    if cfg.path_exponent < 1:
        raise ValidationError("path_exponent must be >= 1", key="path_exponent")
    if cfg.simpson_intervals < 1:
        raise ValidationError("simpson_intervals must be >= 1", key="simpson_intervals")
    if cfg.steady_state:
        if cfg.t_end is not None:
            raise ValidationError("t_end and steady_state are mutually exclusive", key="t_end")
    elif cfg.t_end is None or not cfg.t_end > 0.0:
        raise ValidationError("t_end must be positive (or set steady_state)", key="t_end")
    if cfg.radiation_constant <= 0.0 or cfg.light_speed <= 0.0:
        raise ValidationError("a and c must be positive", key="a")
    if any(t < 0 for t in cfg.snapshots):
        raise ValidationError("snapshot times must be nonnegative", key="snapshots")


_PARSERS = {
    "model": str,
    "problem": str,
    "output": str,
    "order": int,
    "n_cells": int,
    "path_exponent": int,
    "simpson_intervals": int,
    "cfl": float,
    "t_end": float,
    "a": float,
    "c": float,
    "z_left": float,
    "z_right": float,
    "steady_state": None,   # bool, handled below
    "snapshots": None,      # comma list, handled below
}

_KEY_TO_FIELD = {
    "a": "radiation_constant",
    "c": "light_speed",
}


def parse_config(text) -> SolverConfig:
    """Parse a key=value document into a validated SolverConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key = value", line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _PARSERS:
            raise ParseError(f"line {lineno}: unknown key {key!r}", line=lineno, key=key)
        if key in values:
            raise ParseError(f"line {lineno}: duplicate key {key!r}", line=lineno, key=key)
        if key == "steady_state":
            if val.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise ParseError(f"line {lineno}: bad boolean {val!r}", line=lineno, key=key)
            values[key] = val.lower() in ("true", "yes", "1")
        elif key == "snapshots":
            try:
                values[key] = tuple(float(p) for p in val.split(",") if p.strip())
            except ValueError:
                raise ParseError(f"line {lineno}: bad snapshot list {val!r}",
                                 line=lineno, key=key) from None
        else:
            try:
                values[key] = _PARSERS[key](val)
            except ValueError:
                raise ParseError(f"line {lineno}: bad value {val!r} for {key}",
                                 line=lineno, key=key) from None
    for short, long in _KEY_TO_FIELD.items():
        if short in values:
            values[long] = values.pop(short)
    required = ("model", "order", "problem", "n_cells")
    missing = [k for k in required if k not in values]
    if missing:
        raise ValidationError(f"missing required keys: {', '.join(missing)}", key=missing[0])
    return SolverConfig(**values)


def render_config(cfg: SolverConfig) -> str:
    """Inverse of parse_config for valid configs."""
    lines = [
        f"model = {cfg.model}",
        f"order = {cfg.order}",
        f"problem = {cfg.problem}",
        f"n_cells = {cfg.n_cells}",
        f"cfl = {cfg.cfl!r}",
        f"path_exponent = {cfg.path_exponent}",
        f"simpson_intervals = {cfg.simpson_intervals}",
        f"a = {cfg.radiation_constant!r}",
        f"c = {cfg.light_speed!r}",
    ]
    if cfg.steady_state:
        lines.append("steady_state = true")
    else:
        lines.append(f"t_end = {cfg.t_end!r}")
    if cfg.snapshots:
        lines.append("snapshots = " + ",".join(repr(t) for t in cfg.snapshots))
    if cfg.output is not None:
        lines.append(f"output = {cfg.output}")
    if cfg.z_left is not None:
        lines.append(f"z_left = {cfg.z_left!r}")
    if cfg.z_right is not None:
        lines.append(f"z_right = {cfg.z_right!r}")
    return "\n".join(lines) + "\n"
