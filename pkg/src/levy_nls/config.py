"""Run configuration: a sectioned TOML file with a closed schema.

Unknown sections or keys are hard errors (a silent typo in a tolerance key
would invalidate the conservation claims). The resolved effective config is
echoed into every run directory and can be re-run bit-identically."""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .grid import ComplexField, GridSpec, gaussian_field, load_field
from .noise import (
    AmplitudeMeasure,
    AtomicMeasure,
    MarkFunction,
    TruncationSpec,
    gaussian_bump,
    make_coefficients,
    stable_like_density,
    uniform_density,
)
from .dynamics import SolverConfig
import functools


class ConfigError(ValueError):
    """Malformed configuration; the message carries the offending location."""


_SCHEMA = {
    "grid": {
        "dimension": (int, 1),
        "points": (int, 256),
        "half_width": (float, 16.0),
    },
    "initial": {
        "profile": (str, "gaussian"),
        "amplitude": (float, 1.0),
        "width": (float, 1.0),
        "center": (object, 0.0),
        "path": (str, ""),
    },
    "solver": {
        "lambda": (float, 1.0),
        "alpha": (float, 3.0),
        "horizon": (float, 1.0),
        "dt": (float, 1e-3),
        "record_stride": (int, 1),
        "truncation_eps": (float, 0.0),
        "boundary_threshold": (float, 1e-8),
    },
    "noise": {
        "type": (str, "none"),
        "atoms": (list, []),
        "amplitude": (float, 1.0),
        "center": (object, 0.0),
        "width": (float, 1.0),
        "density": (str, "uniform"),
        "density_value": (float, 1.0),
        "exponent": (float, 1.5),
        "a_min": (float, 0.0),
        "a_max": (float, 1.0),
    },
    "coefficients": {
        "family": (str, "zero"),
        "theta": (float, 1.0),
        "c1": (float, 1.0),
        "c2": (float, 1.0),
        "require": (list, ["growth", "pathwise_mass", "mean_mass"]),
    },
    "ensemble": {
        "paths": (int, 1),
        "seed": (int, 0),
        "eps_levels": (list, []),
        "dt_levels": (list, []),
        "threads": (int, 1),
    },
    "dispersive": {
        "p_values": (list, ["inf", 4.0, 2.0]),
        "t_min": (float, 0.5),
        "t_max": (float, 4.0),
        "t_count": (int, 12),
        "tolerance": (float, 0.05),
    },
    "output": {
        "directory": (str, "runs"),
        "dump_fields_at": (list, []),
        "write_series": (bool, True),
    },
}

_ATOM_KEYS = {"rate", "amp", "center", "width", "file"}


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    def digest(self) -> str:
        return hashlib.sha256(emit_toml(self.sections).encode()).hexdigest()[:12]


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    return resolve_config(raw, origin=str(path))


def resolve_config(raw: dict, origin: str = "<config>") -> RunConfig:
    sections = {}
    for sec in raw:
        if sec not in _SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{sec}]")
    for sec, keys in _SCHEMA.items():
        given = raw.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{origin}: [{sec}] must be a table")
        out = {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{origin}: unknown key {sec}.{key}")
        for key, (typ, default) in keys.items():
            val = given.get(key, default)
            try:
                if typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
                    val = float(val)
                elif typ is int:
                    if isinstance(val, bool) or not isinstance(val, int):
                        raise TypeError
                elif typ in (str, bool, list) and not isinstance(val, typ):
                    raise TypeError
            except TypeError:
                raise ConfigError(
                    f"{origin}: {sec}.{key} must be {typ.__name__}, got {val!r}"
                )
            out[key] = val
        sections[sec] = out
    for i, atom in enumerate(sections["noise"]["atoms"]):
        if not isinstance(atom, dict):
            raise ConfigError(f"{origin}: noise.atoms[{i}] must be a table")
        for key in atom:
            if key not in _ATOM_KEYS:
                raise ConfigError(f"{origin}: unknown key noise.atoms[{i}].{key}")
        if "rate" not in atom:
            raise ConfigError(f"{origin}: noise.atoms[{i}] needs a rate")
    return RunConfig(sections)


# ---------------------------------------------------------------------------
# Builders


def build_grid(cfg: RunConfig) -> GridSpec:
    g = cfg["grid"]
    try:
        return GridSpec(g["dimension"], g["points"], g["half_width"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}")


def build_initial(cfg: RunConfig, grid: GridSpec) -> ComplexField:
    ini = cfg["initial"]
    if ini["profile"] == "gaussian":
        return gaussian_field(
            grid, amplitude=ini["amplitude"], width=ini["width"], center=ini["center"]
        )
    if ini["profile"] == "file":
        u = load_field(ini["path"])
        if u.grid != grid:
            raise ConfigError("initial.path field grid does not match [grid]")
        return u
    raise ConfigError(f"unknown initial.profile {ini['profile']!r}")


def build_noise_model(cfg: RunConfig, grid: GridSpec):
    nz = cfg["noise"]
    kind = nz["type"]
    if kind == "none":
        return AtomicMeasure(())
    if kind == "atomic":
        atoms = []
        for atom in nz["atoms"]:
            if "file" in atom:
                f = load_field(atom["file"])
                if f.grid != grid:
                    raise ConfigError("atom field grid does not match [grid]")
                mark = MarkFunction.from_values(grid, f.values.real)
            else:
                mark = gaussian_bump(
                    grid,
                    amplitude=atom.get("amp", 1.0),
                    center=atom.get("center", 0.0),
                    width=atom.get("width", 1.0),
                )
            atoms.append((float(atom["rate"]), mark))
        return AtomicMeasure(tuple(atoms))
    if kind == "amplitude":
        base = gaussian_bump(
            grid, amplitude=nz["amplitude"], center=nz["center"], width=nz["width"]
        )
        if nz["density"] == "uniform":
            density = functools.partial(uniform_density, value=nz["density_value"])
        elif nz["density"] == "stable-like":
            density = functools.partial(stable_like_density, exponent=nz["exponent"])
        else:
            raise ConfigError(f"unknown noise.density {nz['density']!r}")
        return AmplitudeMeasure(base, density, nz["a_min"], nz["a_max"])
    raise ConfigError(f"unknown noise.type {kind!r}")


def build_coefficients(cfg: RunConfig):
    co = cfg["coefficients"]
    family = co["family"]
    try:
        if family == "phase-rotation":
            return make_coefficients(family, theta=co["theta"])
        if family == "linear":
            return make_coefficients(family, c1=co["c1"], c2=co["c2"])
        return make_coefficients(family)
    except KeyError as exc:
        raise ConfigError(str(exc))


def build_solver(cfg: RunConfig) -> SolverConfig:
    so = cfg["solver"]
    try:
        return SolverConfig(
            lam=so["lambda"],
            alpha=so["alpha"],
            horizon=so["horizon"],
            dt=so["dt"],
            record_stride=so["record_stride"],
            truncation=TruncationSpec(so["truncation_eps"]),
            boundary_threshold=so["boundary_threshold"],
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}")


# ---------------------------------------------------------------------------
# TOML emission (for the effective-config echo)


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isinf(v):
            raise ValueError("cannot emit inf in TOML")
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, dict):
        inner = ", ".join(f"{k} = {_fmt_value(x)}" for k, x in v.items())
        return "{" + inner + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v)!r} as TOML")


def emit_toml(sections: dict) -> str:
    lines = []
    for sec in sorted(sections):
        lines.append(f"[{sec}]")
        for key in sorted(sections[sec]):
            lines.append(f"{key} = {_fmt_value(sections[sec][key])}")
        lines.append("")
    return "\n".join(lines)
