"""Run configuration: flat INI sections with typed, unit-suffixed keys.

Keys that appear before the first section header belong to ``[run]``.
Every physical quantity names its unit in the key suffix (``_nm``, ``_kv``,
``_us`` ...).  Unknown keys, empty values, wrong unit suffixes and values
violating a key's constraint raise :class:`ConfigError` with the key and
line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    kind: str  # float, int, str, bool, floats
    default: Any
    help: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _angle(v):
    return 0 < v < 90


POS, NONNEG = (_pos, "must be positive"), (_nonneg, "must be non-negative")


def _k(kind, default, help, check=None):
    fn, rule = check if check else (None, "")
    return Key(kind, default, help, fn, rule)


SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "seed": _k("int", 0, "seed for every stochastic step (noise, Monte Carlo)", NONNEG),
    },
    "doe": {
        "L_um": _k("float", 26.0, "triangle side length", POS),
        "depth_nm": _k("float", 218.0, "etch depth", NONNEG),
        "grid_n": _k("int", 512, "samples per triangle side (mask is grid_n x grid_n per cell)", (lambda v: v >= 16, ">= 16")),
        "cells": _k("int", 1, "unit cells per mask axis", POS),
        "lambda1_nm": _k("float", 681.0, "first lattice wavelength", POS),
        "lambda2_nm": _k("float", 1064.0, "second lattice wavelength", POS),
        "max_order": _k("int", 3, "largest |m|, |n| written to efficiency tables", POS),
    },
    "lens": {
        "prescription_path": _k("str", "", "optional prescription file to analyse instead of the built-in design"),
        "lambda1_nm": _k("float", 681.0, "first wavelength", POS),
        "lambda2_nm": _k("float", 1064.0, "second wavelength", POS),
        "height1_mm": _k("float", 0.0, "ray height at lambda1 (0: collimator f times tan of the grating angle)", NONNEG),
        "height2_mm": _k("float", 0.0, "ray height at lambda2 (0: from the grating angle)", NONNEG),
        "collimator_f_mm": _k("float", 500.0, "collimating lens focal length", POS),
        "asphere_f_mm": _k("float", 40.0, "asphere focal length", POS),
        "asphere_ct_mm": _k("float", 20.0, "asphere center thickness", POS),
        "design_lambda_nm": _k("float", 872.5, "wavelength at which the asphere is stigmatic", POS),
        "weak_f_mm": _k("float", 175.0, "weak lens focal length (start value when optimised)", POS),
        "d1_mm": _k("float", 50.0, "weak lens to asphere spacing (start value)", POS),
        "d2_mm": _k("float", 6.0, "asphere to window spacing", NONNEG),
        "window_mm": _k("float", 3.0, "fused-silica window thickness (0: no window)", NONNEG),
        "optimize": _k("str", "d1", "free parameters: d1 or d1,weak_f"),
        "d1_min_mm": _k("float", 10.0, "lower bound on d1", POS),
        "d1_max_mm": _k("float", 100.0, "upper bound on d1", POS),
        "weak_f_min_mm": _k("float", 100.0, "lower bound on the weak lens focal length", POS),
        "weak_f_max_mm": _k("float", 400.0, "upper bound on the weak lens focal length", POS),
    },
    "lattice": {
        "lambda1_nm": _k("float", 1064.0, "first lattice wavelength", POS),
        "angle1_deg": _k("float", 28.0, "beam-to-axis angle of the first lattice", (_angle, "must lie in (0, 90)")),
        "lambda2_nm": _k("float", 681.0, "second lattice wavelength", POS),
        "angle2_deg": _k("float", 18.0, "beam-to-axis angle of the second lattice", (_angle, "must lie in (0, 90)")),
        "phases_rad": _k("floats", (0.0, 0.0, 0.0), "beam phases"),
        "grid_n": _k("int", 256, "image samples per axis", (lambda v: v >= 16, ">= 16")),
        "pitch_nm": _k("float", 50.0, "image sample pitch", POS),
        "noise_fraction": _k("float", 0.0, "additive white noise RMS relative to the image maximum", NONNEG),
        "image1_path": _k("str", "", "optional measured image (PGM with sidecar) replacing the first synthetic one"),
        "image2_path": _k("str", "", "optional measured image replacing the second synthetic one"),
    },
    "eom": {
        "lambda_nm": _k("float", 681.0, "wavelength of the modulated lattice", POS),
        "angle_deg": _k("float", 18.0, "beam-to-axis angle of that lattice", (_angle, "must lie in (0, 90)")),
        "r13_pm_per_v": _k("float", 8.6, "electro-optic coefficient", POS),
        "passes": _k("int", 2, "passes through the crystal (1 or 2)", (lambda v: v in (1, 2), "must be 1 or 2")),
        "incidence_deg": _k("float", 0.0, "incidence angle on the crystal", (lambda v: 0 <= v < 90, "must lie in [0, 90)")),
        "capacitance_pf": _k("float", 16.0, "pad capacitance", POS),
        "resistance_ohm": _k("float", 5.0, "series resistance", POS),
        "supply_kv": _k("float", 4.5, "amplifier supply voltage", POS),
        "current_limit_ma": _k("float", 10.0, "amplifier output current limit", POS),
        "bandwidth_mhz": _k("float", 1.0, "amplifier small-signal bandwidth", POS),
        "reservoir_nf": _k("float", 10.0, "spark-gap reservoir capacitance", POS),
        "reservoir_bias_kv": _k("float", 0.0, "reservoir bias voltage", None),
        "ignition_ns": _k("float", 10.0, "spark ignition timescale", NONNEG),
        "spark_start_kv": _k("float", 9.0, "pad voltage when the spark fires", None),
        "drive_kv": _k("floats", (5.2, -5.2, -5.2), "slow-drive target voltages of the three pads"),
        "drive_path": _k("str", "", "optional CSV t_s,V1,V2,V3 replacing drive_kv"),
    },
    "dynamics": {
        "mass_amu": _k("float", 132.905451961, "atomic mass (default cesium)", POS),
        "site_frequency_khz": _k("float", 50.0, "harmonic vibration frequency on a site", POS),
        "lattice_constant_um": _k("float", 1.5, "lattice constant", POS),
        "mode": _k("str", "smooth_ramp", "smooth_ramp, sudden_jump or composite (ramp then jump)"),
        "distance_sites": _k("float", 1.0, "transport distance"),
        "duration_us": _k("float", 11.0, "ramp duration", NONNEG),
        "ramp_shape": _k("str", "minimum_jerk", "minimum_jerk or linear"),
        "sweep_periods": _k("floats", (4.0, 8.0, 16.0, 32.0), "ramp durations, in site periods, for the sweep table"),
        "sites": _k("int", 16, "lattice sites on the periodic grid", (lambda v: v >= 3, ">= 3")),
        "samples_per_site": _k("int", 128, "grid samples per site", (lambda v: v >= 64, ">= 64")),
        "steps_per_period": _k("int", 1000, "time steps per site period", POS),
        "record_every": _k("int", 100, "time steps between history rows", POS),
        "jitter_nm": _k("floats", (0.0, 6.0, 12.0, 24.0, 48.0), "relative position jitter values for the overlap table"),
        "width_nm": _k("float", 100.0, "wavepacket width for the overlap model", POS),
        "mc_draws": _k("int", 100000, "Monte-Carlo draws per jitter value", POS),
    },
    "stability": {
        "duration_s": _k("float", 1500.0, "synthetic series length", POS),
        "step_s": _k("float", 1.0, "synthetic sampling interval", POS),
        "vibration_nm": _k("float", 60.0, "common white vibration RMS", NONNEG),
        "drift_nm": _k("float", 100.0, "range of the common random-walk drift", NONNEG),
        "noise_nm": _k("float", 8.5, "independent noise RMS per series", NONNEG),
        "window_s": _k("float", 60.0, "moving-mean window for short-term RMS", POS),
        "series1_path": _k("str", "", "optional measured series CSV t_s,x_nm,y_nm"),
        "series2_path": _k("str", "", "optional second measured series"),
    },
    "output": {
        "directory": _k("str", "out", "artifact directory (overridden by --out)"),
        "pgm_binary": _k("bool", True, "write binary (P5) rather than ASCII (P2) PGM files"),
    },
}

_SUFFIX = re.compile(r"_(um|nm|mm|m|kv|v|pf|nf|ohm|ma|mhz|khz|us|ns|s|deg|rad|amu|pm_per_v)$")


def _base(key: str) -> str:
    return _SUFFIX.sub("", key)


RunConfig = dict  # section -> key -> value


def _convert(kind: str, raw: str):
    if kind == "float":
        return float(raw)
    if kind == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError("expected an integer")
        return int(value)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true or false")
    if kind == "floats":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    return raw


def _line_numbers(lines: list[str]) -> dict[tuple[str, str], int]:
    where = {}
    section = "run"
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
        where.setdefault((section, key), no)
    return where


def defaults() -> RunConfig:
    return {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    lines = text.splitlines()
    where = _line_numbers(lines)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       empty_lines_in_values=False)
    parser.optionxform = str
    content = [s.strip() for s in lines if s.strip() and s.strip()[0] not in "#;"]
    offset = 0 if content and content[0].startswith("[") else 1
    try:
        parser.read_string("[run]\n" * offset + text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", key=exc.option, line=exc.lineno - offset) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", line=(exc.lineno or offset) - offset) from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc.message.splitlines()[0]}") from None
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        schema = SCHEMA[section]
        for key, raw in parser.items(section):
            line = where.get((section, key))
            if key not in schema:
                matches = [k for k in schema if _base(k) == _base(key)]
                if matches:
                    raise ConfigError(f"unit mismatch in [{section}]: expected {matches[0]}", key=key, line=line)
                raise ConfigError(f"unknown key in [{section}]", key=key, line=line)
            spec = schema[key]
            if raw.strip() == "" and spec.kind != "str":
                raise ConfigError(f"missing value in [{section}]", key=key, line=line)
            try:
                value = _convert(spec.kind, raw.strip())
            except ValueError as exc:
                raise ConfigError(f"invalid {spec.kind} value {raw.strip()!r}: {exc}", key=key, line=line) from None
            if spec.check is not None:
                items = value if spec.kind == "floats" else (value,)
                if not all(spec.check(v) for v in items):
                    raise ConfigError(f"value {raw.strip()!r} {spec.rule}", key=key, line=line)
            cfg[section][key] = value
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: RunConfig) -> None:
    lens = cfg["lens"]
    if lens["d1_min_mm"] >= lens["d1_max_mm"]:
        raise ConfigError("d1_min_mm must be below d1_max_mm", key="d1_min_mm")
    if lens["weak_f_min_mm"] >= lens["weak_f_max_mm"]:
        raise ConfigError("weak_f_min_mm must be below weak_f_max_mm", key="weak_f_min_mm")
    free = [p.strip() for p in lens["optimize"].split(",") if p.strip()]
    if not free or any(p not in ("d1", "weak_f") for p in free):
        raise ConfigError("optimize must list d1 and/or weak_f", key="optimize")
    for sec, key, n in (("lattice", "phases_rad", 3), ("eom", "drive_kv", 3)):
        if len(cfg[sec][key]) != n:
            raise ConfigError(f"expected {n} values", key=key)
    dyn = cfg["dynamics"]
    if dyn["mode"] not in ("smooth_ramp", "sudden_jump", "composite"):
        raise ConfigError("mode must be smooth_ramp, sudden_jump or composite", key="mode")
    if dyn["ramp_shape"] not in ("minimum_jerk", "linear"):
        raise ConfigError("ramp_shape must be minimum_jerk or linear", key="ramp_shape")
    st = cfg["stability"]
    if bool(st["series1_path"]) != bool(st["series2_path"]):
        raise ConfigError("series1_path and series2_path must be given together",
                          key="series2_path" if st["series1_path"] else "series1_path")


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config_text(text, source=str(path))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Fully resolved config; parsing the result gives back ``cfg``."""
    out = []
    for key in SCHEMA["run"]:
        out.append(f"{key} = {_format(cfg['run'][key])}")
    for section, keys in SCHEMA.items():
        if section == "run":
            continue
        out.append("")
        out.append(f"[{section}]")
        for key in keys:
            out.append(f"{key} = {_format(cfg[section][key])}")
    return "\n".join(out) + "\n"


def reference_text() -> str:
    """Every key with its default and meaning."""
    out = ["# latticescope configuration reference",
           "# keys before the first [section] belong to [run]", ""]
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, spec in keys.items():
            rule = f"; {spec.rule}" if spec.rule else ""
            out.append(f"# {spec.help} ({spec.kind}{rule})")
            out.append(f"{key} = {_format(spec.default)}")
        out.append("")
    return "\n".join(out)
