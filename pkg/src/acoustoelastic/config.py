"""Scenario configuration: flat ``key = value`` text with dotted section prefixes.

Example::

    # geometry of the reduced problem
    geometry.a = 1.0
    geometry.b = 2.0
    time.dt = auto
    scenario.kind = incident
    observers.probes = 0.625 0; 1.0 0

Blank lines and ``#`` comments are ignored; unknown or repeated keys are errors.
"""
from __future__ import annotations

import importlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .oracle import CATALOG
from .timestepper import ConfigurationError


class ConfigError(ConfigurationError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")
        self.key = key


KINDS = ("incident", "manufactured", "data", "zero")


@dataclass
class Geometry:
    r_D: float = 0.5
    a: float = 1.0
    b: float = 2.0
    R: float = 6.0
    n_radial: int = 24
    n_angular: int = 96


@dataclass
class Materials:
    c: float = 1.0
    rho1: float = 1.0
    rho2: float = 7.8
    mu: float = 37.7
    lam: float = 49.6


@dataclass
class Time:
    T: float = 4.0
    dt: float | None = None  # None means automatic: dt_factor * h_min / c
    dt_factor: float = 0.2


@dataclass
class Scenario:
    kind: str = "incident"
    direction: tuple = (1.0, 0.0)
    width: float = 1.0
    delay: float | None = None
    amplitude: float = 1.0
    case: str = "coupled"
    omega: float = 2.0
    f: str | None = None
    g: str | None = None
    h: str | None = None


@dataclass
class Observers:
    energy_stride: int = 1
    probe_stride: int = 1
    probes: tuple = ((0.625, 0.0), (0.8125, 0.0), (1.0, 0.0))
    snapshot_stride: int = 0  # 0 disables snapshots


@dataclass
class Output:
    directory: str = "out"


@dataclass
class ScenarioConfig:
    geometry: Geometry = field(default_factory=Geometry)
    materials: Materials = field(default_factory=Materials)
    time: Time = field(default_factory=Time)
    scenario: Scenario = field(default_factory=Scenario)
    observers: Observers = field(default_factory=Observers)
    output: Output = field(default_factory=Output)

    def validate(self) -> "ScenarioConfig":
        """Re-check all positivity/ordering constraints; normalizes the direction."""
        g, m, t, s, o = self.geometry, self.materials, self.time, self.scenario, self.observers
        if not 0.0 < g.r_D:
            raise ConfigError("geometry.r_D", f"must be > 0, got {g.r_D}")
        if not g.r_D < g.a:
            raise ConfigError("geometry.a", f"requires r_D < a, got r_D = {g.r_D}, a = {g.a}")
        if not g.a < g.b:
            raise ConfigError("geometry.b", f"requires a < b, got a = {g.a}, b = {g.b}")
        if not g.b < g.R:
            raise ConfigError("geometry.R", f"requires b < R, got b = {g.b}, R = {g.R}")
        if g.n_radial < 2:
            raise ConfigError("geometry.n_radial", f"must be >= 2, got {g.n_radial}")
        if g.n_angular < 8:
            raise ConfigError("geometry.n_angular", f"must be >= 8, got {g.n_angular}")
        for name in ("c", "rho1", "rho2", "mu"):
            if not getattr(m, name) > 0.0:
                raise ConfigError(f"materials.{name}", f"must be > 0, got {getattr(m, name)}")
        if not m.lam + m.mu > 0.0:
            raise ConfigError("materials.lam", f"requires lam + mu > 0, got {m.lam + m.mu}")
        if not t.T > 0.0:
            raise ConfigError("time.T", f"must be > 0, got {t.T}")
        if t.dt is not None and not t.dt > 0.0:
            raise ConfigError("time.dt", f"must be > 0 or 'auto', got {t.dt}")
        if not t.dt_factor > 0.0:
            raise ConfigError("time.dt_factor", f"must be > 0, got {t.dt_factor}")
        if s.kind not in KINDS:
            raise ConfigError("scenario.kind", f"must be one of {', '.join(KINDS)}, got {s.kind!r}")
        if s.kind == "incident":
            if len(s.direction) != 2:
                raise ConfigError("scenario.direction", "needs two components")
            norm = math.hypot(*s.direction)
            if norm == 0.0:
                raise ConfigError("scenario.direction", "must be nonzero")
            s.direction = (s.direction[0] / norm, s.direction[1] / norm)
            if not s.width > 0.0:
                raise ConfigError("scenario.width", f"must be > 0, got {s.width}")
            if s.delay is not None and s.delay * m.c < g.r_D:
                raise ConfigError("scenario.delay", f"c * delay must be >= r_D = {g.r_D}, got {s.delay}")
        if s.kind == "manufactured" and s.case not in CATALOG:
            raise ConfigError("scenario.case", f"must be one of {', '.join(CATALOG)}, got {s.case!r}")
        if s.kind == "data":
            for name in ("f", "g", "h"):
                ref = getattr(s, name)
                if ref is not None:
                    resolve_reference(ref, f"scenario.{name}")
        for name in ("energy_stride", "probe_stride"):
            if getattr(o, name) < 1:
                raise ConfigError(f"observers.{name}", f"must be >= 1, got {getattr(o, name)}")
        if o.snapshot_stride < 0:
            raise ConfigError("observers.snapshot_stride", f"must be >= 0, got {o.snapshot_stride}")
        for k, p in enumerate(o.probes):
            if len(p) != 2:
                raise ConfigError("observers.probes", f"probe {k} needs two coordinates")
            if math.hypot(*p) > g.b:
                raise ConfigError("observers.probes", f"probe {k} at {p} lies outside r <= b = {g.b}")
        return self


def resolve_reference(ref: str, key: str):
    """Import ``package.module:attribute``."""
    module, sep, attr = ref.partition(":")
    if not sep or not module or not attr:
        raise ConfigError(key, f"expected 'module:attribute', got {ref!r}")
    try:
        obj = getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(key, f"cannot resolve {ref!r}: {exc}") from exc
    if not callable(obj):
        raise ConfigError(key, f"{ref!r} is not callable")
    return obj


def _parse_float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {text!r}")
    return value


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _parse_optional_float(key, text):
    return None if text.lower() in ("auto", "none") else _parse_float(key, text)


def _parse_vector(key, text):
    parts = text.replace(",", " ").split()
    return tuple(_parse_float(key, p) for p in parts)


def _parse_points(key, text):
    return tuple(_parse_vector(key, chunk) for chunk in text.split(";") if chunk.strip())


def _parse_str(key, text):
    return text


def _parse_optional_str(key, text):
    return None if text.lower() == "none" else text


_PARSERS = {
    "geometry.r_D": _parse_float, "geometry.a": _parse_float, "geometry.b": _parse_float,
    "geometry.R": _parse_float, "geometry.n_radial": _parse_int, "geometry.n_angular": _parse_int,
    "materials.c": _parse_float, "materials.rho1": _parse_float, "materials.rho2": _parse_float,
    "materials.mu": _parse_float, "materials.lam": _parse_float,
    "time.T": _parse_float, "time.dt": _parse_optional_float, "time.dt_factor": _parse_float,
    "scenario.kind": _parse_str, "scenario.direction": _parse_vector, "scenario.width": _parse_float,
    "scenario.delay": _parse_optional_float, "scenario.amplitude": _parse_float,
    "scenario.case": _parse_str, "scenario.omega": _parse_float,
    "scenario.f": _parse_optional_str, "scenario.g": _parse_optional_str,
    "scenario.h": _parse_optional_str,
    "observers.energy_stride": _parse_int, "observers.probe_stride": _parse_int,
    "observers.probes": _parse_points, "observers.snapshot_stride": _parse_int,
    "output.directory": _parse_str,
}


def parse_config(text: str) -> ScenarioConfig:
    cfg = ScenarioConfig()
    seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("<syntax>", f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key", lineno)
        if key in seen:
            raise ConfigError(key, f"repeated (first set on line {seen[key]})", lineno)
        if not value:
            raise ConfigError(key, "missing value", lineno)
        seen[key] = lineno
        section, name = key.split(".", 1)
        try:
            setattr(getattr(cfg, section), name, _PARSERS[key](key, value))
        except ConfigError as exc:
            raise ConfigError(key, str(exc).split(": ", 1)[1], lineno) from None
    return cfg.validate()


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_config(text)


def format_config(cfg: ScenarioConfig) -> str:
    """Inverse of :func:`parse_config` for every key."""
    lines = []
    for section in fields(cfg):
        block = getattr(cfg, section.name)
        for f in fields(block):
            value = getattr(block, f.name)
            if value is None:
                text = "auto" if f.name in ("dt", "delay") else "none"
            elif f.name == "probes":
                text = "; ".join(" ".join(repr(float(c)) for c in p) for p in value)
            elif f.name == "direction":
                text = " ".join(repr(float(c)) for c in value)
            else:
                text = str(value) if not isinstance(value, float) else repr(value)
            lines.append(f"{section.name}.{f.name} = {text}")
    return "\n".join(lines) + "\n"
