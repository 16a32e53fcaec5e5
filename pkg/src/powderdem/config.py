"""Run configuration: a sectioned key-value file read with :mod:`configparser`.

Example::

    [material]
    surface_energy = 0.1        # mJ/m^2
    friction = 0.4

    [psd]
    d10 = 20 um
    d50 = 34 um
    d90 = 44 um

    [scenario]
    preset = desk
    feed_rate = 2e4

    [integrator]
    dt = auto
    seed = 1

    [output]
    directory = out

Lengths need an explicit unit suffix (m, mm, um, μm or nm). The surface
energy is given in mJ/m^2. All other values are SI.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .core import MaterialParams, SizeDistribution, fit_lognormal
from .scenario import FunnelConfig

LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "μm": 1e-6, "µm": 1e-6, "nm": 1e-9}
_LENGTH_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-zμµ]+)\s*$")

MATERIAL_KEYS = {f.name for f in dataclasses.fields(MaterialParams)} - {"tension_cutoff"}
SCENARIO_LENGTHS = {"opening_diameter", "funnel_height", "cube_side", "drop_gap", "vibration_amplitude"}
SCENARIO_KEYS = {f.name for f in dataclasses.fields(FunnelConfig)}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based line in ``path`` (None when unknown)."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        self.reason = message
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


def parse_length(text: str) -> float:
    """``"34 um"`` -> 3.4e-5. Raises ValueError without a known unit suffix."""
    m = _LENGTH_RE.match(text)
    if not m or m.group(2) not in LENGTH_UNITS:
        raise ValueError(f"length {text!r} needs a unit suffix ({', '.join(sorted(set(LENGTH_UNITS) - {'µm'}))})")
    return float(m.group(1)) * LENGTH_UNITS[m.group(2)]


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    material: MaterialParams = field(default_factory=MaterialParams)
    psd: SizeDistribution = field(default_factory=lambda: fit_lognormal(20e-6, 34e-6, 44e-6))
    scenario: FunnelConfig = field(default_factory=lambda: FunnelConfig.preset("desk"))
    dt: float | None = None
    t_end: float | None = None
    snapshot_interval: float | None = None
    seed: int = 0
    output_dir: Path = Path("out")
    formats: tuple = ("csv",)

    @property
    def gamma_mj(self) -> float:
        return self.material.surface_energy * 1e3


class _Locator:
    """Maps (section, key) to line numbers in the raw text."""

    def __init__(self, text):
        self.sections = {}
        self.keys = {}
        current = None
        for n, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                current = m.group(1).strip().lower()
                self.sections.setdefault(current, n)
                continue
            m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
            if m and current is not None and not line[:1].isspace():
                self.keys.setdefault((current, m.group(1).strip().lower()), n)

    def line(self, section, key=None):
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section)


def parse_config(text: str, path="<config>") -> RunConfig:
    """Parse configuration text; errors carry the offending line."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", path, lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", path, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", path, exc.lineno) from None
    loc = _Locator(text)

    def fail(msg, section, key=None):
        raise ConfigError(msg, path, loc.line(section, key))

    known = {"material", "psd", "scenario", "integrator", "output"}
    for sec in cp.sections():
        if sec not in known:
            fail(f"unknown section [{sec}]", sec)
    for sec in ("material", "psd"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]", path, None)

    def value(section, key, convert):
        try:
            return convert(cp.get(section, key))
        except ValueError as exc:
            fail(f"[{section}] {key}: {exc}", section, key)

    # material -------------------------------------------------------------
    mat = {}
    for key in cp.options("material"):
        if key not in MATERIAL_KEYS:
            fail(f"unknown key {key!r} in [material]", "material", key)
        mat[key] = value("material", key, float)
    if "surface_energy" not in mat:
        fail("missing key 'surface_energy' (mJ/m^2) in [material]", "material")
    mat["surface_energy"] *= 1e-3
    try:
        material = MaterialParams(**mat)
    except ValueError as exc:
        bad = str(exc).split(": ", 1)[-1].split(", ")[0]
        fail(str(exc), "material", bad)

    # psd ------------------------------------------------------------------
    keys = set(cp.options("psd"))
    allowed = {"d10", "d50", "d90", "log_median", "log_sigma", "d_min", "d_max"}
    for key in keys - allowed:
        fail(f"unknown key {key!r} in [psd]", "psd", key)
    try:
        if {"d10", "d50", "d90"} & keys:
            for key in ("d10", "d50", "d90"):
                if key not in keys:
                    fail(f"missing key {key!r} in [psd]", "psd")
            if keys & {"log_median", "log_sigma"}:
                fail("give either percentiles or log_median/log_sigma, not both", "psd")
            psd = fit_lognormal(*(value("psd", k, parse_length) for k in ("d10", "d50", "d90")))
            if "d_min" in keys or "d_max" in keys:
                psd = dataclasses.replace(
                    psd,
                    d_min=value("psd", "d_min", parse_length) if "d_min" in keys else psd.d_min,
                    d_max=value("psd", "d_max", parse_length) if "d_max" in keys else psd.d_max,
                )
        else:
            for key in ("log_median", "log_sigma", "d_min", "d_max"):
                if key not in keys:
                    fail(f"missing key {key!r} in [psd] (or give d10/d50/d90)", "psd")
            median = value("psd", "log_median", parse_length)
            psd = SizeDistribution(math.log(median), value("psd", "log_sigma", float),
                                   value("psd", "d_min", parse_length), value("psd", "d_max", parse_length))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        fail(f"[psd] {exc}", "psd")

    # scenario -------------------------------------------------------------
    scenario = FunnelConfig.preset("desk")
    if cp.has_section("scenario"):
        preset = cp.get("scenario", "preset", fallback="desk").strip()
        try:
            scenario = FunnelConfig.preset(preset)
        except ValueError as exc:
            fail(str(exc), "scenario", "preset")
        types = {f.name: f.type for f in dataclasses.fields(FunnelConfig)}
        changes = {}
        for key in cp.options("scenario"):
            if key == "preset":
                continue
            if key not in SCENARIO_KEYS:
                fail(f"unknown key {key!r} in [scenario]", "scenario", key)
            if key in SCENARIO_LENGTHS:
                changes[key] = value("scenario", key, parse_length)
            elif types[key] in ("int", int):
                changes[key] = value("scenario", key, lambda s: int(float(s)))
            elif types[key] in ("bool", bool):
                changes[key] = value("scenario", key, _parse_bool)
            else:
                changes[key] = value("scenario", key, float)
        try:
            scenario = scenario.replace(**changes)
        except ValueError as exc:
            fail(str(exc), "scenario")
        if scenario.opening_diameter <= psd.d_max:
            fail("opening_diameter must exceed the largest particle diameter", "scenario", "opening_diameter")

    # integrator -----------------------------------------------------------
    dt = t_end = interval = None
    seed = 0
    if cp.has_section("integrator"):
        for key in cp.options("integrator"):
            if key not in ("dt", "t_end", "snapshot_interval", "seed"):
                fail(f"unknown key {key!r} in [integrator]", "integrator", key)
        raw = cp.get("integrator", "dt", fallback="auto").strip().lower()
        if raw != "auto":
            dt = value("integrator", "dt", float)
            if dt <= 0:
                fail("dt must be positive or 'auto'", "integrator", "dt")
        if cp.has_option("integrator", "t_end"):
            t_end = value("integrator", "t_end", float)
            scenario = scenario.replace(t_max=t_end)
        if cp.has_option("integrator", "snapshot_interval"):
            interval = value("integrator", "snapshot_interval", float)
        seed = value("integrator", "seed", int) if cp.has_option("integrator", "seed") else 0

    # output ---------------------------------------------------------------
    out_dir, formats = Path("out"), ("csv",)
    if cp.has_section("output"):
        for key in cp.options("output"):
            if key not in ("directory", "formats"):
                fail(f"unknown key {key!r} in [output]", "output", key)
        out_dir = Path(cp.get("output", "directory", fallback="out"))
        formats = tuple(s.strip() for s in cp.get("output", "formats", fallback="csv").split(",") if s.strip())
        for f in formats:
            if f != "csv":
                fail(f"unsupported output format {f!r} (only csv)", "output", "formats")

    return RunConfig(material, psd, scenario, dt, t_end, interval, seed, out_dir, formats)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, path)
