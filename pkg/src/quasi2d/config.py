"""Experiment configuration: ``key = value`` lines grouped in ``[section]`` blocks.

Schema (version 1)::

    [run]        schema = 1, seed, workers, out
    [grid]       n_h, n_v, len_h, len_v, tall_factor, tall_cap
    [profiles]   vh_amplitude, w_amplitude, sigma_h, vertical, u0_amplitude, u0_sigma_h, u0_sigma_v
    [sweep]      eps_list, lam, monitor_C, residual_form, direct_check, refine_on_failure, box_check
    [solver]     dt, horizon, cfl, sample_every, max_halvings
    [largeness]  eps_list, n_h, n_v, len_h, len_v
    [corpus]     suite, n_samples, fault

Every key is optional; missing keys take the defaults below. Lengths accept
arithmetic on numbers and ``pi`` (``2*pi*8``); eps values accept fractions
(``1/16``).
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .analysis import SweepConfig
from .profiles import ProfileSpec, dyadic_exponent, parse_eps
from .solvers import SolverConfig
from .spectral import Grid

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A configuration value is missing, malformed or out of range; the message names the field."""


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_length(text: str) -> float:
    """Evaluate ``+ - * /`` over numbers and ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _eps_list(text: str) -> tuple[float, ...]:
    vals = tuple(parse_eps(x) for x in text.split(",") if x.strip())
    for e in vals:
        dyadic_exponent(e)
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    return vals


_PARSERS = {int: lambda t: int(t.strip()), float: parse_length, bool: _bool, str: lambda t: t.strip()}


@dataclass(frozen=True)
class LargenessConfig:
    eps_list: tuple[float, ...] = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    n_h: int = 64
    n_v: int = 64
    len_h: float = 2 * math.pi * 8
    len_v: float = 2 * math.pi

    def grid(self) -> Grid:
        return Grid(self.n_h, self.n_v, self.len_h, self.len_v)


@dataclass(frozen=True)
class CorpusConfig:
    suite: str = "spectral"
    n_samples: int = 100
    fault: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    sweep: SweepConfig = SweepConfig()
    largeness: LargenessConfig = LargenessConfig()
    corpus: CorpusConfig = CorpusConfig()
    out: str = "out"
    source_text: str = field(default="", compare=False)

    @property
    def seed(self) -> int:
        return self.sweep.seed


_SECTIONS = {
    "run": {"schema": int, "seed": int, "workers": int, "out": str},
    "grid": {"n_h": int, "n_v": int, "len_h": float, "len_v": float, "tall_factor": int, "tall_cap": int},
    "profiles": {f.name: f.type for f in fields(ProfileSpec)},
    "sweep": {"eps_list": "eps", "lam": float, "monitor_C": float, "residual_form": bool, "direct_check": bool,
              "refine_on_failure": bool, "box_check": bool},
    "solver": {"dt": float, "horizon": float, "cfl": float, "sample_every": float, "max_halvings": int},
    "largeness": {"eps_list": "eps", "n_h": int, "n_v": int, "len_h": float, "len_v": float},
    "corpus": {"suite": str, "n_samples": int, "fault": str},
}
_TYPE_NAMES = {"float": float, "int": int, "str": str, "bool": bool}


def _convert(section: str, key: str, raw: str):
    kind = _SECTIONS[section][key]
    if isinstance(kind, str) and kind in _TYPE_NAMES:
        kind = _TYPE_NAMES[kind]
    try:
        if kind == "eps":
            return _eps_list(raw)
        return _PARSERS[kind](raw)
    except (ValueError, SyntaxError, ZeroDivisionError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"[{section}]: unknown section; expected one of {sorted(_SECTIONS)}")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")
            values[section][key] = _convert(section, key, raw)
    run = values.get("run", {})
    if run.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"[run] schema: unsupported version {run['schema']}; expected {SCHEMA_VERSION}")

    def build(section: str, factory, extra: dict | None = None):
        kwargs = dict(values.get(section, {}))
        kwargs.update(extra or {})
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None

    profile = build("profiles", ProfileSpec)
    solver = build("solver", SolverConfig)
    sweep_vals = dict(values.get("sweep", {}))
    grid_vals = values.get("grid", {})
    sweep_kwargs = dict(grid_vals, **sweep_vals, solver=solver, profile=profile,
                        seed=run.get("seed", 0), workers=run.get("workers", 1))
    try:
        sweep = SweepConfig(**sweep_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[sweep] {exc}") from None
    largeness = build("largeness", LargenessConfig)
    try:
        largeness.grid()
    except ValueError as exc:
        raise ConfigError(f"[largeness] {exc}") from None
    corpus = build("corpus", CorpusConfig)
    return ExperimentConfig(sweep, largeness, corpus, run.get("out", "out"), text)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, workers: int | None = None,
                   out: str | None = None) -> ExperimentConfig:
    sweep = cfg.sweep
    if seed is not None:
        sweep = replace(sweep, seed=seed)
    if workers is not None:
        try:
            sweep = replace(sweep, workers=workers)
        except ValueError as exc:
            raise ConfigError(f"--workers: {exc}") from None
    return replace(cfg, sweep=sweep, out=cfg.out if out is None else out)
