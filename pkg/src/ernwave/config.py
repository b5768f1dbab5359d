"""
Run configuration files.

A configuration is an INI file (``configparser`` syntax, ``#`` comments)
with the sections and keys below; every key is optional and falls back to
the default shown. Lengths and times are in units of the mass.

.. code-block:: ini

    [spacetime]
    mass = 1.0

    [foliation]
    split_radius = 6.0        # R0, must exceed 2M
    r_max = 410.0             # outer boundary of the grid

    [grid]
    n_r = 801
    n_theta = 1               # 1 = spherical symmetry, else >= 8
    stretching = horizon_refined   # uniform | tortoise_outside | horizon_refined
    horizon_spacing = 0.0002
    growth = 0.05
    slicing = horizon_adapted      # tstar | horizon_adapted
    slice_bend = 4.0
    slice_offset = auto       # number, or auto

    [data]
    center = 2.0              # f: bump centre and half-width
    width = 1.5
    modes = 0:1.0             # comma-separated l:weight pairs
    g_center = none           # optional T psi profile; none = time symmetric
    g_width = 1.0
    g_modes = 0:1.0

    [evolution]
    epsilon = 0.01
    t_star_end = 200.0
    cfl = 0.25
    dissipation = 0.3
    output_every = 1.0
    threshold_factor = 1000.0

    [coupling]
    kind = constant           # constant | tanh | table
    a0 = 1.0
    table =                   # psi:A pairs for kind = table

    [output]
    snapshot_every = 0        # write a snapshot CSV every k output slices; 0 = none
    energies = true

    [fault]
    kind = none               # none | nan | spike (testing only)
    t_star = 1.0

Unknown sections or keys are errors, and :func:`parse_config` reports all
problems at once.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dynamics import Bump, Coupling, EvolutionConfig, InitialData, Problem
from .fields import GridSpec
from .geometry import FoliationSpec, SpacetimeParams

__all__ = [
    "ConfigError",
    "OutputConfig",
    "FaultConfig",
    "RunConfig",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "config_hash",
]


class ConfigError(ValueError):
    """Raised with the complete list of problems found in a configuration."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class OutputConfig:
    snapshot_every: int = 0
    energies: bool = True


@dataclass(frozen=True)
class FaultConfig:
    kind: str = "none"
    t_star: float = 1.0

    def as_tuple(self):
        return None if self.kind == "none" else (self.kind, self.t_star)


@dataclass(frozen=True)
class RunConfig:
    params: SpacetimeParams = SpacetimeParams()
    foliation: FoliationSpec = FoliationSpec(6.0, 410.0)
    grid: GridSpec = GridSpec(n_r=801, r_max=410.0, stretching="horizon_refined", slicing="horizon_adapted")
    data: InitialData = InitialData(f=Bump(2.0, 1.5))
    evolution: EvolutionConfig = EvolutionConfig(t_star_end=200.0, keep_snapshots=False)
    output: OutputConfig = OutputConfig()
    fault: FaultConfig = FaultConfig()

    @property
    def problem(self) -> Problem:
        return Problem(self.params, self.grid, self.data, self.evolution)

    def validate(self) -> list[str]:
        errors = self.foliation.validate(self.params)
        try:
            errors += self.problem.validate()
        except Exception as exc:  # pragma: no cover - defensive
            errors.append(str(exc))
        if self.output.snapshot_every < 0:
            errors.append("output snapshot_every must be >= 0")
        if self.fault.kind not in ("none", "nan", "spike"):
            errors.append(f"fault kind must be none, nan or spike, got {self.fault.kind!r}")
        elif self.fault.kind != "none" and not 0 < self.fault.t_star <= self.evolution.t_star_end:
            errors.append("fault t_star must lie inside the run")
        return errors

    def with_grid(self, **changes) -> "RunConfig":
        return replace(self, grid=replace(self.grid, **changes))

    def with_evolution(self, **changes) -> "RunConfig":
        return replace(self, evolution=replace(self.evolution, **changes))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SCHEMA = {
    "spacetime": {"mass": float},
    "foliation": {"split_radius": float, "r_max": float},
    "grid": {
        "n_r": int, "n_theta": int, "stretching": str, "horizon_spacing": float, "growth": float,
        "slicing": str, "slice_bend": float, "slice_offset": "optional_float",
    },
    "data": {
        "center": float, "width": float, "modes": "modes",
        "g_center": "optional_float", "g_width": float, "g_modes": "modes",
    },
    "evolution": {
        "epsilon": float, "t_star_end": float, "cfl": float, "dissipation": float,
        "output_every": float, "threshold_factor": float,
    },
    "coupling": {"kind": str, "a0": float, "table": "pairs"},
    "output": {"snapshot_every": int, "energies": bool},
    "fault": {"kind": str, "t_star": float},
}


def _pairs(text: str, key_type=float):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        a, sep, b = item.partition(":")
        if not sep:
            raise ValueError(f"expected 'x:y' pairs, got {item!r}")
        out.append((key_type(a), float(b)))
    return tuple(out)


def _convert(kind, text: str):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "optional_float":
        return None if text.lower() in ("none", "auto", "") else float(text)
    if kind == "modes":
        return _pairs(text, int)
    if kind == "pairs":
        return _pairs(text)
    if kind is int:
        val = float(text)
        if val != int(val):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(val)
    return kind(text)


def parse_config_text(text: str) -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    errors: list[str] = []
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key '{key}' in [{section}]")
                continue
            try:
                values[section][key] = _convert(_SCHEMA[section][key], raw)
            except ValueError as exc:
                errors.append(f"[{section}] {key}: {exc}")
    # keys that failed to convert fall back to defaults so that validation
    # still reports everything else in the same pass
    try:
        cfg = _build(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(errors + [str(exc)]) from exc
    errors += cfg.validate()
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"configuration file not found: {path}"])
    return parse_config_text(path.read_text())


def _build(v: dict[str, dict]) -> RunConfig:
    base = RunConfig()
    get = lambda sec, key, default: v.get(sec, {}).get(key, default)  # noqa: E731
    errors = []
    try:
        params = SpacetimeParams(get("spacetime", "mass", base.params.mass))
    except ValueError as exc:
        errors.append(str(exc))
        params = base.params
    fol = FoliationSpec(get("foliation", "split_radius", base.foliation.split_radius),
                        get("foliation", "r_max", base.foliation.r_max))
    g = base.grid
    grid = GridSpec(
        n_r=get("grid", "n_r", g.n_r), r_max=fol.r_max, n_theta=get("grid", "n_theta", g.n_theta),
        stretching=get("grid", "stretching", g.stretching),
        horizon_spacing=get("grid", "horizon_spacing", g.horizon_spacing),
        growth=get("grid", "growth", g.growth), split_radius=fol.split_radius,
        slicing=get("grid", "slicing", g.slicing), slice_bend=get("grid", "slice_bend", g.slice_bend),
        slice_offset=get("grid", "slice_offset", g.slice_offset),
    )
    f0 = base.data.f
    f = Bump(get("data", "center", f0.center), get("data", "width", f0.width),
             modes=get("data", "modes", f0.modes))
    g_center = get("data", "g_center", None)
    gb = None if g_center is None else Bump(g_center, get("data", "g_width", 1.0),
                                            modes=get("data", "g_modes", ((0, 1.0),)))
    e = base.evolution
    coupling = Coupling(get("coupling", "kind", e.coupling.kind), get("coupling", "a0", e.coupling.a0),
                        get("coupling", "table", e.coupling.table))
    evo = EvolutionConfig(
        t_star_end=get("evolution", "t_star_end", e.t_star_end), cfl=get("evolution", "cfl", e.cfl),
        dissipation=get("evolution", "dissipation", e.dissipation),
        amplitude=get("evolution", "epsilon", e.amplitude), coupling=coupling,
        output_every=get("evolution", "output_every", e.output_every),
        threshold_factor=get("evolution", "threshold_factor", e.threshold_factor), keep_snapshots=False,
    )
    out = OutputConfig(get("output", "snapshot_every", 0), get("output", "energies", True))
    fault = FaultConfig(get("fault", "kind", "none"), get("fault", "t_star", 1.0))
    if errors:
        raise ValueError("; ".join(errors))
    return RunConfig(params, fol, grid, InitialData(f, gb), evo, out, fault)


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "none"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, tuple):
        return ", ".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in x)
    return str(x)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config_text(serialize_config(c)) == c``."""
    g, d, e = cfg.grid, cfg.data, cfg.evolution
    sections = {
        "spacetime": {"mass": cfg.params.mass},
        "foliation": {"split_radius": cfg.foliation.split_radius, "r_max": cfg.foliation.r_max},
        "grid": {
            "n_r": g.n_r, "n_theta": g.n_theta, "stretching": g.stretching,
            "horizon_spacing": g.horizon_spacing, "growth": g.growth, "slicing": g.slicing,
            "slice_bend": g.slice_bend, "slice_offset": g.slice_offset,
        },
        "data": {"center": d.f.center, "width": d.f.width, "modes": d.f.modes,
                 "g_center": None if d.g is None else d.g.center},
        "evolution": {
            "epsilon": e.amplitude, "t_star_end": e.t_star_end, "cfl": e.cfl, "dissipation": e.dissipation,
            "output_every": e.output_every, "threshold_factor": e.threshold_factor,
        },
        "coupling": {"kind": e.coupling.kind, "a0": e.coupling.a0, "table": e.coupling.table},
        "output": {"snapshot_every": cfg.output.snapshot_every, "energies": cfg.output.energies},
        "fault": {"kind": cfg.fault.kind, "t_star": cfg.fault.t_star},
    }
    if d.g is not None:
        sections["data"].update(g_width=d.g.width, g_modes=d.g.modes)
    buf = io.StringIO()
    for name, kv in sections.items():
        buf.write(f"[{name}]\n")
        for k, val in kv.items():
            buf.write(f"{k} = {_fmt(val)}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]
