"""INI run configuration with validation and exact round-trip.

Sections and keys (all optional, defaults in brackets)::

    [mesh]       n_surface [256], n_rings [64], r_far [40], stretch [auto],
                 first_layer [auto], radius [1]
    [flow]       mu [0.798e-3], u_inf [1e-5, 0], rho [998.2], phi [0],
                 ref_length [1], tol [1e-8]
    [symbols]    omegas [20, 60], n_stations [16], xi_stars [uniform],
                 fd_step [auto]
    [optimizer]  method [local], gamma [1], max_iters [20], eta [0.2],
                 sobolev_eps [0.1], window_width [0.0625], beta1_mode [analytic],
                 fallback_factor [10], fallback_smoothing [1e-4],
                 volume_tol [1e-8], grad_tol [1e-10], snapshot_every [1]
    [run]        out_dir [out], seed [0], surface [circle]

``method = compare`` runs the local and global methods with matched first
steps. ``surface`` may name a CSV polyline used instead of the circle.
"""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, fields, replace

import numpy as np

from .flow import FlowConfig
from .optimizer import METHODS, OptimizationConfig


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class MeshSection:
    n_surface: int = 256
    n_rings: int = 64
    r_far: float = 40.0
    stretch: float | None = None
    first_layer: float | None = None
    radius: float = 1.0


@dataclass(frozen=True)
class FlowSection:
    mu: float = 0.798e-3
    u_inf: tuple = (1e-5, 0.0)
    rho: float = 998.2
    phi: float = 0.0
    ref_length: float = 1.0
    tol: float = 1e-8


@dataclass(frozen=True)
class SymbolSection:
    omegas: tuple = (20, 60)
    n_stations: int = 16
    xi_stars: tuple | None = None
    fd_step: float | None = None


@dataclass(frozen=True)
class OptimizerSection:
    method: str = "local"
    gamma: float = 1.0
    max_iters: int = 20
    eta: float = 0.2
    sobolev_eps: float = 0.1
    window_width: float = 0.0625
    beta1_mode: str = "analytic"
    fallback_factor: float = 10.0
    fallback_smoothing: float = 1e-4
    volume_tol: float = 1e-8
    grad_tol: float = 1e-10
    snapshot_every: int = 1


@dataclass(frozen=True)
class RunSection:
    out_dir: str = "out"
    seed: int = 0
    surface: str = "circle"


@dataclass(frozen=True)
class RunConfig:
    mesh: MeshSection = MeshSection()
    flow: FlowSection = FlowSection()
    symbols: SymbolSection = SymbolSection()
    optimizer: OptimizerSection = OptimizerSection()
    run: RunSection = RunSection()

    def flow_config(self):
        f = self.flow
        return FlowConfig(mu=f.mu, u_inf=f.u_inf, rho=f.rho, phi=f.phi, ref_length=f.ref_length, tol=f.tol)

    def optimization_config(self, method=None):
        o = self.optimizer
        kw = {fl.name: getattr(o, fl.name) for fl in fields(o)}
        kw["method"] = method or o.method
        return OptimizationConfig(**kw)

    def mesh_options(self):
        m = self.mesh
        opts = {"n_rings": m.n_rings, "r_far": m.r_far}
        if m.stretch is not None:
            opts["stretch"] = m.stretch
        if m.first_layer is not None:
            opts["first_layer"] = m.first_layer
        return opts

    def station_list(self, perimeter):
        if self.symbols.xi_stars is not None:
            return list(self.symbols.xi_stars)
        m = self.symbols.n_stations
        return list(perimeter * (np.arange(m) + 0.5) / m)

    def digest(self):
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]

    def header_lines(self):
        return [f"config_hash={self.digest()}"]


SECTIONS = {
    "mesh": MeshSection,
    "flow": FlowSection,
    "symbols": SymbolSection,
    "optimizer": OptimizerSection,
    "run": RunSection,
}

# key -> parser kind
KINDS = {
    ("mesh", "n_surface"): "int",
    ("mesh", "n_rings"): "int",
    ("mesh", "r_far"): "float",
    ("mesh", "stretch"): "float?",
    ("mesh", "first_layer"): "float?",
    ("mesh", "radius"): "float",
    ("flow", "mu"): "float",
    ("flow", "u_inf"): "floats",
    ("flow", "rho"): "float",
    ("flow", "phi"): "float",
    ("flow", "ref_length"): "float",
    ("flow", "tol"): "float",
    ("symbols", "omegas"): "ints",
    ("symbols", "n_stations"): "int",
    ("symbols", "xi_stars"): "floats?",
    ("symbols", "fd_step"): "float?",
    ("optimizer", "method"): "str",
    ("optimizer", "gamma"): "float",
    ("optimizer", "max_iters"): "int",
    ("optimizer", "eta"): "float",
    ("optimizer", "sobolev_eps"): "float",
    ("optimizer", "window_width"): "float",
    ("optimizer", "beta1_mode"): "str",
    ("optimizer", "fallback_factor"): "float",
    ("optimizer", "fallback_smoothing"): "float",
    ("optimizer", "volume_tol"): "float",
    ("optimizer", "grad_tol"): "float",
    ("optimizer", "snapshot_every"): "int",
    ("run", "out_dir"): "str",
    ("run", "seed"): "int",
    ("run", "surface"): "str",
}


def _line_of(text, section, key=None):
    """1-based line number of a section header or of a key inside it."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", stripped, 1)[0].strip().lower()
            if k == key:
                return no
    return 0


def _convert(kind, raw):
    raw = raw.strip()
    if kind.endswith("?"):
        if raw.lower() in ("", "auto", "none"):
            return None
        kind = kind[:-1]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw
    parts = [p for p in re.split(r"[,\s]+", raw) if p]
    if kind == "ints":
        return tuple(int(p) for p in parts)
    if kind == "floats":
        return tuple(float(p) for p in parts)
    raise AssertionError(kind)


def loads(text, source="<config>"):
    """Parse INI text into a validated :class:`RunConfig`."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}:{_line_of(text, section)}: unknown section [{section}]")
        kw = {}
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            kind = KINDS.get((section, key))
            if kind is None:
                raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}]")
            try:
                kw[key] = _convert(kind, raw)
            except ValueError:
                raise ConfigError(f"{source}:{line}: cannot parse {key} = {raw!r} as {kind}") from None
        values[section] = SECTIONS[section](**kw)
    cfg = RunConfig(**values)
    errors = validate(cfg)
    if errors:
        section, key, msg = errors[0]
        raise ConfigError(f"{source}:{_line_of(text, section, key)}: {section}.{key}: {msg}")
    return cfg


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, source=str(path))


def validate(cfg):
    """List of ``(section, key, message)`` problems; empty when valid."""
    errs = []

    def need(ok, section, key, msg):
        if not ok:
            errs.append((section, key, msg))

    m, f, s, o = cfg.mesh, cfg.flow, cfg.symbols, cfg.optimizer
    need(m.n_surface >= 8, "mesh", "n_surface", "must be at least 8")
    need(m.n_rings >= 8, "mesh", "n_rings", "must be at least 8")
    need(m.radius > 0, "mesh", "radius", "must be positive")
    need(m.r_far > 2 * m.radius, "mesh", "r_far", "must exceed twice the obstacle radius")
    need(m.stretch is None or m.stretch >= 1, "mesh", "stretch", "must be at least 1")
    need(m.first_layer is None or m.first_layer > 0, "mesh", "first_layer", "must be positive")
    need(f.mu > 0, "flow", "mu", "viscosity must be positive")
    need(len(f.u_inf) == 2, "flow", "u_inf", "needs two components")
    need(f.rho > 0, "flow", "rho", "must be positive")
    need(f.ref_length > 0, "flow", "ref_length", "must be positive")
    need(f.tol > 0, "flow", "tol", "must be positive")
    need(len(f.u_inf) == 2 and np.hypot(*f.u_inf) > 0, "flow", "u_inf", "must be nonzero")
    need(len(set(s.omegas)) >= 2, "symbols", "omegas", "needs at least two distinct frequencies")
    need(all(w > 0 for w in s.omegas), "symbols", "omegas", "must be positive")
    need(s.n_stations >= 0, "symbols", "n_stations", "must be nonnegative")
    need(s.fd_step is None or s.fd_step > 0, "symbols", "fd_step", "must be positive")
    need(o.method in METHODS + ("compare",), "optimizer", "method", f"must be one of {METHODS + ('compare',)}")
    need(o.gamma > 0, "optimizer", "gamma", "must be positive")
    need(o.max_iters >= 0, "optimizer", "max_iters", "must be nonnegative")
    need(o.eta > 0, "optimizer", "eta", "must be positive")
    need(o.sobolev_eps > 0, "optimizer", "sobolev_eps", "must be positive")
    need(o.window_width >= 0, "optimizer", "window_width", "must be nonnegative")
    need(o.beta1_mode in ("analytic", "fallback"), "optimizer", "beta1_mode", "must be analytic or fallback")
    need(o.fallback_factor > 0, "optimizer", "fallback_factor", "must be positive")
    need(o.fallback_smoothing >= 0, "optimizer", "fallback_smoothing", "must be nonnegative")
    need(o.volume_tol > 0, "optimizer", "volume_tol", "must be positive")
    need(o.grad_tol >= 0, "optimizer", "grad_tol", "must be nonnegative")
    need(o.snapshot_every >= 1, "optimizer", "snapshot_every", "must be at least 1")
    return errs


def _format(value):
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps(cfg):
    """Serialize every field; ``loads(dumps(cfg)) == cfg``."""
    out = []
    for name, cls in SECTIONS.items():
        section = getattr(cfg, name)
        out.append(f"[{name}]")
        for fl in fields(cls):
            out.append(f"{fl.name} = {_format(getattr(section, fl.name))}")
        out.append("")
    return "\n".join(out)


def with_overrides(cfg, out_dir=None, seed=None):
    run = cfg.run
    if out_dir is not None:
        run = replace(run, out_dir=str(out_dir))
    if seed is not None:
        run = replace(run, seed=int(seed))
    return replace(cfg, run=run)
