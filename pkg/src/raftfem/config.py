"""Run configuration: a sectioned ``key = value`` text format.

Example::

    [model]
    Lambda = 5
    eps = 0.02

    [time]
    t_end = 50

Every key is unique across sections, so overrides may be given either as
``section.key=value`` or bare ``key=value``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dynamics import AdaptSettings, RunSettings, SolverSettings, TimeControl
from .errors import ConfigError
from .physics import Params


@dataclass
class OutputSettings:
    directory: str = "out"
    every: int = 10  # VTK snapshot cadence in steps (0: final state only)
    vtk: bool = True
    csv: bool = True


@dataclass
class Config:
    run: RunSettings = field(default_factory=RunSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    @property
    def params(self) -> Params:
        return self.run.params


# (section, key) -> (target path, type)
_SCHEMA = {
    "model": {f.name: ("params." + f.name, float) for f in fields(Params)},
    "mesh": {
        "level": ("level", int),
        "adapt": ("adapt.enabled", bool),
        "extra_levels": ("adapt.extra_levels", int),
        "mu": ("adapt.mu", float),
        "k_adapt": ("adapt.every", int),
        "coarsen": ("adapt.coarsen", bool),
        "theta": ("adapt.theta", float),
    },
    "time": {
        "tau": ("time.tau", float),
        "t_sep": ("time.t_sep", float),
        "tau_min": ("time.tau_min", float),
        "tau_max": ("time.tau_max", float),
        "c_tau": ("time.c_tau", float),
        "adaptive": ("time.adaptive", bool),
        "t_end": ("t_end", float),
        "max_steps": ("max_steps", int),
        "still_threshold": ("still_threshold", float),
        "still_steps": ("still_steps", int),
    },
    "initial": {
        "kind": ("initial", str),
        "seed": ("seed", int),
        "amplitude": ("amplitude", float),
        "n_caps": ("n_caps", int),
    },
    "solver": {
        "rtol": ("solver.rtol", float),
        "atol": ("solver.atol", float),
        "restart": ("solver.restart", int),
        "maxit": ("solver.maxit", int),
        "secant_tol": ("solver.secant_tol", float),
        "secant_maxit": ("solver.secant_maxit", int),
        "max_retries": ("solver.max_retries", int),
    },
    "output": {
        "directory": ("output.directory", str),
        "every": ("output.every", int),
        "vtk": ("output.vtk", bool),
        "csv": ("output.csv", bool),
        "diagnostics_every": ("diagnostics_every", int),
    },
}
_LOOKUP = {(s, k.lower()): (k, *v) for s, keys in _SCHEMA.items() for k, v in keys.items()}
_BARE = {}
for (_s, _k), _v in _LOOKUP.items():
    _BARE[_k] = (_s, _k)


def default_config() -> Config:
    """Defaults: eps 0.02, mu 0.05, secant tol 1e-8, GMRES tolerances 1e-10,
    uniform step 1e-2 and a level-4 base mesh with adaptive refinement."""
    rs = RunSettings(
        params=Params(),
        level=4,
        t_end=100.0,
        time=TimeControl(),
        adapt=AdaptSettings(enabled=True, extra_levels=3),
        solver=SolverSettings(),
    )
    return Config(rs, OutputSettings())


def _convert(text: str, typ, name: str, where):
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {typ.__name__}", name, *where) from None


def _set(cfg: Config, path: str, value):
    parts = path.split(".")
    if parts[0] == "params":
        # Params is frozen and validates on construction
        cfg.run.params = cfg.run.params.with_(**{parts[1]: value})
        return
    obj, parts = (cfg.output, parts[1:]) if parts[0] == "output" else (cfg.run, parts)
    for part in parts[:-1]:
        obj = getattr(obj, part)
    setattr(obj, parts[-1], value)


def _locate(lines, section, key):
    """(line, column) of ``key`` inside ``[section]``, 1-based."""
    current = None
    pat = re.compile(r"^(\s*)([^=:#;\s]+)\s*[=:]")
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
            continue
        m = pat.match(line)
        if m and current == section and m.group(2).lower() == key:
            return i, len(m.group(1)) + 1
    return None, None


def validate(cfg: Config, where=None) -> Config:
    """Check cross-field invariants; errors name the offending field."""
    where = where or (lambda name: (None, None))
    rs = cfg.run

    def need(ok, name, msg):
        if not ok:
            raise ConfigError(f"{name}: {msg}", name, *where(name))

    s = rs.solver
    for name in ("rtol", "atol", "secant_tol"):
        need(getattr(s, name) > 0, name, "tolerance must be positive")
    need(s.restart >= 1 and s.maxit >= 1, "restart", "restart and maxit must be >= 1")
    need(s.max_retries >= 0, "max_retries", "must be non-negative")
    need(0 <= rs.level <= 10, "level", "base level must lie in 0..10")
    need(rs.adapt.extra_levels >= 0, "extra_levels", "must be non-negative")
    need(rs.adapt.mu > 0, "mu", "must be positive")
    need(rs.adapt.every >= 1, "k_adapt", "must be >= 1")
    need(rs.t_end > 0, "t_end", "must be positive")
    need(rs.initial in ("random", "caps", "constant"), "kind", "must be random, caps or constant")
    need(rs.amplitude >= 0, "amplitude", "must be non-negative")
    need(rs.still_steps >= 1, "still_steps", "must be >= 1")
    need(cfg.output.every >= 0, "every", "must be non-negative")
    tc = rs.time
    need(tc.tau > 0, "tau", "must be positive")
    need(tc.c_tau > 0, "c_tau", "must be positive")
    need(tc.tau_min > 0, "tau_min", "must be positive")
    need(tc.tau_min <= tc.tau_max, "tau_max", "must not be below tau_min")
    return cfg


def _apply(cfg: Config, section: str, key: str, text: str, where):
    entry = _LOOKUP.get((section, key.lower()))
    if entry is None:
        raise ConfigError(f"unknown key {key!r} in section [{section}]", key, *where)
    name, path, typ = entry
    value = _convert(text, typ, name, where)
    try:
        _set(cfg, path, value)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}", name, *where) from None


def parse_config(text: str, base: Config | None = None) -> Config:
    cfg = base or default_config()
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", None, exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"cannot parse {line.strip()!r}", None, lineno, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.option, exc.lineno, 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", None, exc.lineno, 1) from None
    seen = {}
    for section in cp.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            line = next((i for i, l in enumerate(lines, 1) if l.strip().lower() == f"[{sec}]"), None)
            raise ConfigError(f"unknown section [{section}]", section, line, 1)
        for key, value in cp.items(section):
            where = _locate(lines, sec, key.lower())
            seen[key.lower()] = where
            _apply(cfg, sec, key, value, where)
    return validate(cfg, lambda name: seen.get(name.lower(), (None, None)))


def load_config(path) -> Config:
    """Read and validate a configuration file; missing keys keep their defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        exc.args = (f"{path}: {exc.args[0]}",)
        raise


def apply_overrides(cfg: Config, items) -> Config:
    """Apply ``key=value`` or ``section.key=value`` strings."""
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", item)
        key, text = item.split("=", 1)
        key = key.strip()
        section, _, bare = key.rpartition(".")
        if not section:
            if bare.lower() not in _BARE:
                raise ConfigError(f"unknown key {bare!r}", bare)
            section = _BARE[bare.lower()][0]
        _apply(cfg, section.lower(), bare, text, (None, None))
    return validate(cfg)


def dump_config(cfg: Config) -> str:
    """Render a config in the file format (round-trips through ``parse_config``)."""
    out = []
    for section, keys in _SCHEMA.items():
        out.append(f"[{section}]")
        for key, (path, _) in keys.items():
            parts = path.split(".")
            obj, parts = (cfg.output, parts[1:]) if parts[0] == "output" else (cfg.run, parts)
            for part in parts:
                obj = getattr(obj, part)
            out.append(f"{key} = {obj!r}" if not isinstance(obj, str) else f"{key} = {obj}")
        out.append("")
    return "\n".join(out)
