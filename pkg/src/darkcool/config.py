"""TOML configuration files.

Layout::

    [units]            system = "kappa" | "si", optional kappa_si
    [bath]             n_th = ... or temperature = ... (+ reference_frequency)
    [optical.1]        detuning (or frequency + drive_frequency), linewidth,
                       drive_amplitude, drive_strength
    [mechanical.1]     frequency, linewidth
    [coupling]         kind = "linearized" | "single_photon", rows = [[...], ...]
    [membrane]         optional, replaces optical/mechanical/coupling (see below)
    [run]              subcommand parameters, validated by the command using them

Complex numbers are written as strings such as ``"0.3-1.2i"``; plain numbers
are accepted too. Unknown keys are errors. ``drive_strength`` fixes Gamma_k:
for linearized couplings row k is rescaled, for single-photon couplings the
drive amplitude is solved for.

With a ``[membrane]`` section the modes and the single-photon couplings are
built from the membrane model in SI units, with every drive on the red
sideband of the mean mechanical frequency.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import membrane as mb
from .linearize import amplitude_for_target_strength
from .model import (ConfigError, CouplingMatrix, MechanicalModeSpec, OpticalModeSpec, SystemConfig,
                    ThermalBath, UnitSystem, validate_config)

SECTIONS = {"units", "bath", "optical", "mechanical", "coupling", "membrane", "run"}
UNIT_KEYS = {"system", "kappa_si"}
BATH_KEYS = {"n_th", "temperature", "reference_frequency"}
OPTICAL_KEYS = {"detuning", "frequency", "drive_frequency", "linewidth", "drive_amplitude", "drive_strength"}
MECHANICAL_KEYS = {"frequency", "linewidth"}
COUPLING_KEYS = {"kind", "rows"}
MEMBRANE_KEYS = {"edge", "thickness", "density", "youngs_modulus", "poisson", "stress", "loss",
                 "cavity_length", "finesse", "wavelength", "waist", "modes", "spots", "linewidth",
                 "drive_strength"}


def parse_complex(value, where: str = "value") -> complex:
    """Number or string like ``"1.5-2i"`` / ``"3i"`` / ``"2"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float, complex)):
        return complex(value)
    if isinstance(value, str):
        s = value.replace(" ", "")
        if s.endswith("i"):
            s = s[:-1] + "j"
        try:
            z = complex(s)
        except ValueError:
            raise ConfigError(f"{where}: cannot read {value!r} as a complex number") from None
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise ConfigError(f"{where}: must be finite")
        return z
    raise ConfigError(f"{where}: expected a number or complex string, got {type(value).__name__}")


def format_complex(z: complex) -> str:
    z = complex(z)
    return f"{z.real!r}{'+' if z.imag >= 0 or math.isnan(z.imag) else '-'}{abs(z.imag)!r}i"


def _number(table, key, where, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    return float(v)


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _indexed(doc, name):
    tab = doc.get(name, {})
    _check_keys(tab, set(tab), name)
    try:
        keys = sorted(tab, key=int)
    except ValueError:
        raise ConfigError(f"{name}: subsections must be numbered, e.g. [{name}.1]") from None
    return [(int(k), tab[k]) for k in keys]


def load_document(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def _units(doc):
    tab = doc.get("units", {})
    _check_keys(tab, UNIT_KEYS, "units")
    return UnitSystem(tab.get("system", "kappa"), _number(tab, "kappa_si", "units"))


def _bath(doc):
    tab = doc["bath"]
    _check_keys(tab, BATH_KEYS, "bath")
    return ThermalBath(_number(tab, "n_th", "bath"), _number(tab, "temperature", "bath"),
                       _number(tab, "reference_frequency", "bath"))


def membrane_setup(tab) -> mb.MembraneSetup:
    _check_keys(tab, MEMBRANE_KEYS, "membrane")
    d = mb.MembraneSpec()
    spec = mb.MembraneSpec(
        edge=_number(tab, "edge", "membrane", d.edge),
        thickness=_number(tab, "thickness", "membrane", d.thickness),
        density=_number(tab, "density", "membrane", d.density),
        youngs_modulus=parse_complex(tab.get("youngs_modulus", d.youngs_modulus), "membrane.youngs_modulus"),
        poisson=_number(tab, "poisson", "membrane", d.poisson),
        stress=_number(tab, "stress", "membrane", d.stress),
        loss=_number(tab, "loss", "membrane"),
    )
    o = mb.CavityOptics()
    optics = mb.CavityOptics(_number(tab, "cavity_length", "membrane", o.length),
                             _number(tab, "finesse", "membrane", o.finesse),
                             _number(tab, "wavelength", "membrane", o.wavelength))
    waist = _number(tab, "waist", "membrane", 90e-6)
    modes = tuple(tuple(int(i) for i in m) for m in tab.get("modes", mb.REFERENCE_MODES))
    if "spots" in tab:
        # positions in units of the edge length
        spots = tuple(mb.GaussianSpot(x * spec.edge, y * spec.edge, waist) for x, y in tab["spots"])
    else:
        spots = mb.reference_spots(spec.edge, waist)
    lw = tab.get("linewidth", mb.REFERENCE_LINEWIDTH)
    if lw == "formula":
        lw = None
    elif not isinstance(lw, (int, float)):
        raise ConfigError('membrane.linewidth: a number (rad/s) or "formula"')
    return mb.MembraneSetup(spec, optics, modes, spots, lw)


def membrane_config(setup: mb.MembraneSetup, bath: ThermalBath, threads=None) -> SystemConfig:
    """SI system with single-photon couplings from the membrane model."""
    modes = setup.drum_modes()
    table = setup.table(threads)
    wbar = float(np.mean([m.frequency for m in modes]))
    optical = tuple(OpticalModeSpec.from_detuning(k + 1, wbar, setup.optics.kappa)
                    for k in range(table.shape[0]))
    mechanical = tuple(MechanicalModeSpec(j + 1, m.frequency, m.linewidth) for j, m in enumerate(modes))
    return SystemConfig(optical, mechanical, table, bath, UnitSystem("si", setup.optics.kappa))


def _resolve_strengths(cfg: SystemConfig, strengths: dict) -> SystemConfig:
    if not strengths:
        return cfg
    if cfg.coupling.kind == "linearized":
        G = np.array(cfg.coupling.values)
        for k, s in strengths.items():
            nrm = np.linalg.norm(G[k])
            if nrm == 0 and s > 0:
                raise ConfigError(f"optical[{k + 1}].drive_strength: coupling row is zero")
            if nrm > 0:
                G[k] = G[k] / nrm * math.sqrt(s * cfg.kappas[k])
        return cfg.with_coupling(G)
    for k, s in strengths.items():
        Q = amplitude_for_target_strength(cfg, k, s)
        optical = list(cfg.optical)
        optical[k] = replace(optical[k], drive_amplitude=Q)
        cfg = replace(cfg, optical=tuple(optical))
    return cfg


def build_config(doc: dict, threads=None) -> SystemConfig:
    """SystemConfig from a parsed document; raises ConfigError with every problem found."""
    extra = set(doc) - SECTIONS
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}")
    required = ("bath",) if "membrane" in doc else ("optical", "mechanical", "coupling", "bath")
    missing = [s for s in required if s not in doc]
    if missing:
        raise ConfigError(f"missing sections: {', '.join(missing)}")
    bath = _bath(doc)
    strengths = {}
    if "membrane" in doc:
        clash = {"optical", "mechanical", "coupling"} & set(doc)
        if clash:
            raise ConfigError(f"[membrane] replaces {sorted(clash)}; give one or the other")
        setup = membrane_setup(doc["membrane"])
        cfg = membrane_config(setup, bath, threads)
        if "units" in doc:
            u = _units(doc)
            if u.system != "si":
                raise ConfigError("units.system must be \"si\" with a [membrane] section")
        s = _number(doc["membrane"], "drive_strength", "membrane")
        if s is not None:
            strengths = {k: s for k in range(cfg.M)}
    else:
        units = _units(doc)
        optical = []
        for i, tab in _indexed(doc, "optical"):
            where = f"optical.{i}"
            _check_keys(tab, OPTICAL_KEYS, where)
            lw = _number(tab, "linewidth", where, required=True)
            Q = parse_complex(tab.get("drive_amplitude", 0), f"{where}.drive_amplitude")
            if "detuning" in tab:
                if "frequency" in tab or "drive_frequency" in tab:
                    raise ConfigError(f"{where}: give detuning or frequency/drive_frequency, not both")
                optical.append(OpticalModeSpec.from_detuning(i, _number(tab, "detuning", where), lw, Q))
            else:
                optical.append(OpticalModeSpec(i, _number(tab, "frequency", where, required=True), lw, Q,
                                               _number(tab, "drive_frequency", where, 0.0)))
            s = _number(tab, "drive_strength", where)
            if s is not None:
                strengths[len(optical) - 1] = s
        mechanical = []
        for j, tab in _indexed(doc, "mechanical"):
            where = f"mechanical.{j}"
            _check_keys(tab, MECHANICAL_KEYS, where)
            mechanical.append(MechanicalModeSpec(j, _number(tab, "frequency", where, required=True),
                                                 _number(tab, "linewidth", where, required=True)))
        ctab = doc["coupling"]
        _check_keys(ctab, COUPLING_KEYS, "coupling")
        if "rows" not in ctab:
            raise ConfigError("coupling.rows: missing")
        rows = [[parse_complex(v, f"coupling.rows[{r}][{c}]") for c, v in enumerate(row)]
                for r, row in enumerate(ctab["rows"])]
        if len({len(r) for r in rows}) > 1:
            raise ConfigError("coupling.rows: rows have different lengths")
        values = np.array(rows, dtype=complex).reshape(len(rows), -1)
        cfg = SystemConfig(tuple(optical), tuple(mechanical),
                           CouplingMatrix(values, ctab.get("kind", "linearized")), bath, units)
    diags = validate_config(cfg)
    if diags:
        raise ConfigError("; ".join(diags))
    return _resolve_strengths(cfg, strengths)


def load_config(path, threads=None) -> tuple[SystemConfig, dict]:
    """Parse and validate a config file; returns the system and the raw ``[run]`` table."""
    doc = load_document(path)
    run = doc.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("run: expected a table")
    return build_config(doc, threads), run


def dump_config(cfg: SystemConfig) -> str:
    """Resolved config as TOML text; floats use repr so the echo is exact and stable."""
    lines = ["[units]", f'system = "{cfg.units.system}"']
    if cfg.units.kappa_si is not None:
        lines.append(f"kappa_si = {cfg.units.kappa_si!r}")
    lines += ["", "[bath]"]
    for key in ("n_th", "temperature", "reference_frequency"):
        v = getattr(cfg.bath, key)
        if v is not None:
            lines.append(f"{key} = {float(v)!r}")
    for o in cfg.optical:
        lines += ["", f"[optical.{o.index}]", f"frequency = {o.frequency!r}",
                  f"drive_frequency = {o.drive_frequency!r}", f"linewidth = {o.linewidth!r}",
                  f'drive_amplitude = "{format_complex(o.drive_amplitude)}"']
    for m in cfg.mechanical:
        lines += ["", f"[mechanical.{m.index}]", f"frequency = {m.frequency!r}", f"linewidth = {m.linewidth!r}"]
    rows = ",\n".join("  [" + ", ".join(f'"{format_complex(z)}"' for z in row) + "]"
                      for row in cfg.coupling.values)
    lines += ["", "[coupling]", f'kind = "{cfg.coupling.kind}"', f"rows = [\n{rows},\n]", ""]
    return "\n".join(lines)


def check_run_keys(run: dict, allowed, command: str) -> None:
    extra = set(run) - set(allowed)
    if extra:
        raise ConfigError(f"run: keys {sorted(extra)} are not used by '{command}'")
