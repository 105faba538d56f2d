"""Domain types for multimode optomechanical cooling.

All frequencies are angular frequencies. A configuration lives in one of two
unit systems:

``"kappa"``
    every rate is expressed in units of the first optical linewidth, so
    ``optical[0].linewidth == 1`` for the standard figure setups;
``"si"``
    rates in rad/s.

``UnitSystem.kappa_si`` ties the two together: it is the first optical
linewidth in rad/s. It is only required when a temperature has to be turned
into an occupancy inside a kappa-normalized config, or when converting.

Optical modes are assumed well separated (no cross-mode scattering). This is
the caller's responsibility and is not checked. Near-degeneracy of the
mechanical modes is likewise an assumption of the analytic formulas in
:mod:`darkcool.limits`, not a validation rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

# CODATA 2018 (exact SI definitions)
HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
C_LIGHT = 299792458.0  # m / s

UNIT_SYSTEMS = ("kappa", "si")
COUPLING_KINDS = ("single_photon", "linearized")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configurations."""


class NumericalError(RuntimeError):
    """Base class for numerical failures (non-convergence, instability)."""


def _frozen_array(values, dtype=complex) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OpticalModeSpec:
    """One cavity mode and the laser that drives it.

    ``frequency`` and ``drive_frequency`` only enter through their difference,
    the bare detuning. Use :meth:`from_detuning` to work directly in the
    drive's rotating frame.
    """

    index: int
    frequency: float
    linewidth: float
    drive_amplitude: complex = 0j
    drive_frequency: float = 0.0

    @classmethod
    def from_detuning(cls, index, detuning, linewidth, drive_amplitude=0j):
        return cls(index, float(detuning), float(linewidth), complex(drive_amplitude), 0.0)

    @property
    def bare_detuning(self) -> float:
        return self.frequency - self.drive_frequency


@dataclass(frozen=True)
class MechanicalModeSpec:
    index: int
    frequency: float
    linewidth: float


@dataclass(frozen=True)
class CouplingMatrix:
    """M x N optomechanical couplings; row k is the coupling vector of optical mode k.

    ``kind`` is ``"single_photon"`` for g^S (to be dressed by the intracavity
    amplitude) or ``"linearized"`` for the already-enhanced g = g^S * alpha.
    """

    values: np.ndarray
    kind: str = "linearized"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2:
            raise ConfigError(f"coupling matrix must be 2-D, got shape {vals.shape}")
        object.__setattr__(self, "values", _frozen_array(vals))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def row(self, k: int) -> np.ndarray:
        return self.values[k]


@dataclass(frozen=True)
class ThermalBath:
    """Mechanical bath. Give either ``n_th`` directly or a ``temperature`` in kelvin.

    ``reference_frequency`` defaults to the mean mechanical frequency and is
    only used to turn a temperature into an occupancy.
    """

    n_th: float | None = None
    temperature: float | None = None
    reference_frequency: float | None = None


@dataclass(frozen=True)
class UnitSystem:
    system: str = "kappa"
    kappa_si: float | None = None


@dataclass(frozen=True)
class SystemConfig:
    optical: tuple[OpticalModeSpec, ...]
    mechanical: tuple[MechanicalModeSpec, ...]
    coupling: CouplingMatrix
    bath: ThermalBath = field(default_factory=ThermalBath)
    units: UnitSystem = field(default_factory=UnitSystem)

    def __post_init__(self):
        object.__setattr__(self, "optical", tuple(self.optical))
        object.__setattr__(self, "mechanical", tuple(self.mechanical))

    @property
    def M(self) -> int:
        return len(self.optical)

    @property
    def N(self) -> int:
        return len(self.mechanical)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([o.linewidth for o in self.optical], dtype=float)

    @property
    def bare_detunings(self) -> np.ndarray:
        return np.array([o.bare_detuning for o in self.optical], dtype=float)

    @property
    def drive_amplitudes(self) -> np.ndarray:
        return np.array([o.drive_amplitude for o in self.optical], dtype=complex)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.frequency for m in self.mechanical], dtype=float)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([m.linewidth for m in self.mechanical], dtype=float)

    @property
    def mean_mechanical_frequency(self) -> float:
        return float(np.mean(self.omegas))

    @property
    def mechanical_splitting(self) -> float:
        """|omega_1 - omega_2| for two modes, max - min in general."""
        om = self.omegas
        return float(om.max() - om.min()) if om.size else 0.0

    # derived diagonal views
    @property
    def detuning_matrix(self) -> np.ndarray:
        return np.diag(self.bare_detunings)

    @property
    def frequency_matrix(self) -> np.ndarray:
        return np.diag(self.omegas)

    @property
    def linewidth_matrix(self) -> np.ndarray:
        return np.diag(self.kappas)

    def thermal_occupancy(self) -> float:
        """Bath occupancy n_th, resolving a temperature if needed."""
        bath = self.bath
        if bath.n_th is not None:
            return float(bath.n_th)
        if bath.temperature is None:
            raise ConfigError("bath: give either n_th or temperature")
        ref = bath.reference_frequency
        if ref is None:
            ref = self.mean_mechanical_frequency
        scale = self._si_scale()
        return thermal_occupancy(ref * scale, bath.temperature)

    def _si_scale(self) -> float:
        if self.units.system == "si":
            return 1.0
        if self.units.kappa_si is None:
            raise ConfigError("units.kappa_si is required to use a temperature in kappa units")
        return float(self.units.kappa_si)

    def with_coupling(self, values, kind: str | None = None) -> "SystemConfig":
        return replace(self, coupling=CouplingMatrix(values, kind or self.coupling.kind))

    def with_bath(self, **kwargs) -> "SystemConfig":
        return replace(self, bath=replace(self.bath, **kwargs))

    def scaled(self, factor: float, system: str, kappa_si: float | None) -> "SystemConfig":
        """Multiply every rate by ``factor`` and retag the unit system."""
        f = float(factor)
        optical = tuple(
            OpticalModeSpec(o.index, o.frequency * f, o.linewidth * f, o.drive_amplitude * f,
                            o.drive_frequency * f)
            for o in self.optical
        )
        mechanical = tuple(
            MechanicalModeSpec(m.index, m.frequency * f, m.linewidth * f) for m in self.mechanical
        )
        ref = self.bath.reference_frequency
        bath = replace(self.bath, reference_frequency=None if ref is None else ref * f)
        return SystemConfig(
            optical,
            mechanical,
            CouplingMatrix(self.coupling.values * f, self.coupling.kind),
            bath,
            UnitSystem(system, kappa_si),
        )

    def to_si(self, kappa_si: float | None = None) -> "SystemConfig":
        if self.units.system == "si":
            return self
        scale = kappa_si if kappa_si is not None else self.units.kappa_si
        if scale is None:
            raise ConfigError("converting to SI needs kappa_si (first optical linewidth in rad/s)")
        return self.scaled(scale, "si", scale)

    def to_kappa(self) -> "SystemConfig":
        if self.units.system == "kappa":
            return self
        kappa_si = self.optical[0].linewidth
        return self.scaled(1.0 / kappa_si, "kappa", kappa_si)


def validate_config(cfg: SystemConfig) -> list[str]:
    """Check the type invariants; returns one diagnostic string per violation."""
    diags: list[str] = []
    for i, o in enumerate(cfg.optical):
        if not (o.linewidth > 0):
            diags.append(f"optical[{i}].linewidth: optical linewidth must be positive")
        if not (o.frequency > 0):
            diags.append(f"optical[{i}].frequency: optical frequency must be positive")
        if not np.isfinite(o.drive_amplitude):
            diags.append(f"optical[{i}].drive_amplitude: must be finite")
    for j, m in enumerate(cfg.mechanical):
        if not (m.frequency > 0):
            diags.append(f"mechanical[{j}].frequency: mechanical frequency must be positive")
        if not (m.linewidth > 0):
            diags.append(f"mechanical[{j}].linewidth: mechanical linewidth must be positive")
    shape = cfg.coupling.shape
    if shape != (cfg.M, cfg.N):
        diags.append(
            f"coupling.values: shape {shape} does not match {cfg.M} optical x {cfg.N} mechanical modes"
        )
    if not np.all(np.isfinite(cfg.coupling.values)):
        diags.append("coupling.values: entries must be finite")
    if cfg.coupling.kind not in COUPLING_KINDS:
        diags.append(f"coupling.kind: must be one of {COUPLING_KINDS}")
    bath = cfg.bath
    if bath.n_th is None and bath.temperature is None:
        diags.append("bath: one of n_th or temperature is required")
    if bath.n_th is not None and bath.temperature is not None:
        diags.append("bath: give n_th or temperature, not both")
    if bath.n_th is not None and not (bath.n_th >= 0):
        diags.append("bath.n_th: thermal occupancy must be non-negative")
    if bath.temperature is not None:
        if not (bath.temperature > 0):
            diags.append("bath.temperature: must be positive")
        elif cfg.units.system == "kappa" and cfg.units.kappa_si is None:
            diags.append("units.kappa_si: required to resolve a bath temperature in kappa units")
    if cfg.units.system not in UNIT_SYSTEMS:
        diags.append(f"units.system: must be one of {UNIT_SYSTEMS}")
    return diags


def thermal_occupancy(omega: float, temperature: float, hbar: float = HBAR, k_b: float = K_B) -> float:
    """Bose-Einstein occupancy 1/(exp(hbar*omega/kT) - 1) at angular frequency ``omega``."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")
    x = hbar * omega / (k_b * temperature)
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def drive_strengths(cfg_or_couplings, kappas: Sequence[float] | None = None):
    """Per-drive strengths Gamma_k = sum_j |g_kj|^2 / kappa_k and their total.

    Accepts a :class:`SystemConfig` with linearized couplings, or a coupling
    array together with the linewidths.
    """
    if isinstance(cfg_or_couplings, SystemConfig):
        cfg = cfg_or_couplings
        if cfg.coupling.kind != "linearized":
            raise ConfigError("drive_strengths needs linearized couplings; run linearize first")
        G, kap = cfg.coupling.values, cfg.kappas
    else:
        G = np.atleast_2d(np.asarray(cfg_or_couplings, dtype=complex))
        kap = np.asarray(kappas, dtype=float)
    per_drive = np.sum(np.abs(G) ** 2, axis=1) / kap
    return per_drive, float(per_drive.sum())
