"""Square membrane in a Fabry-Perot cavity: drum modes, Gaussian spots, single-photon couplings.

Geometry is in metres and every rate is an angular frequency in rad/s.
Drum mode (m, n) has shape W = sin(m pi x / l) sin(n pi y / l) with unit peak
amplitude. A transverse optical mode illuminates the membrane with the
normalized Gaussian I = exp(-r^2/d^2) / (pi d^2) around (x0, y0).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .model import C_LIGHT, HBAR, CouplingMatrix, ConfigError

DEFAULT_GRID = 600
MAX_GRID = 9600
OVERLAP_ATOL = 1e-4


class ResolutionError(RuntimeError):
    def __init__(self, grid, change):
        super().__init__(f"overlap integral not converged at {grid}x{grid} points (last change {change:.2e})")
        self.grid = grid
        self.change = change


@dataclass(frozen=True)
class MembraneSpec:
    """Clamped square membrane.

    ``youngs_modulus`` may be complex; only the real part enters the bending
    parameter epsilon. ``loss`` is the dimensionless prefactor of the
    linewidth formula and has no default value.
    """

    edge: float = 1e-3
    thickness: float = 40e-9
    density: float = 2700.0
    youngs_modulus: complex = 200e9 + 0.01e9j
    poisson: float = 0.25
    stress: float = 0.3e9
    loss: float | None = None

    def __post_init__(self):
        for name in ("edge", "thickness", "density", "stress"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"membrane.{name}: must be positive")
        if not 0 < self.poisson < 0.5:
            raise ConfigError("membrane.poisson: must lie in (0, 0.5)")

    @property
    def bending(self) -> float:
        """epsilon = (h/l) sqrt(E / (3 sigma (1 - nu^2)))."""
        E = complex(self.youngs_modulus).real
        return self.thickness / self.edge * math.sqrt(E / (3 * self.stress * (1 - self.poisson**2)))


@dataclass(frozen=True)
class CavityOptics:
    length: float = 6e-3
    finesse: float = 2.58e4
    wavelength: float = 1064e-9

    @property
    def kappa(self) -> float:
        """Linewidth in rad/s; kappa / 2 pi = c / (2 F L)."""
        return 2 * math.pi * C_LIGHT / (2 * self.finesse * self.length)

    @property
    def frequency(self) -> float:
        return 2 * math.pi * C_LIGHT / self.wavelength

    @property
    def frequency_pull(self) -> float:
        """d omega_c / dL = 2 pi c / (lambda L), in rad/s per metre."""
        return self.frequency / self.length


@dataclass(frozen=True)
class GaussianSpot:
    x0: float
    y0: float
    waist: float = 90e-6

    def intensity(self, x, y):
        r2 = (x - self.x0) ** 2 + (y - self.y0) ** 2
        return np.exp(-r2 / self.waist**2) / (math.pi * self.waist**2)


@dataclass(frozen=True)
class DrumMode:
    m: int
    n: int
    edge: float
    frequency: float
    linewidth: float
    zero_point: float

    def shape(self, x, y):
        return np.sin(self.m * math.pi * x / self.edge) * np.sin(self.n * math.pi * y / self.edge)


def drum_frequency(spec: MembraneSpec, m: int, n: int) -> float:
    return math.pi / spec.edge * math.sqrt(spec.stress * (m * m + n * n) / spec.density)


def drum_linewidth(spec: MembraneSpec, m: int, n: int) -> float:
    """gamma = s eps [1 + pi^2 (m^2 + n^2) / 4] omega; needs ``spec.loss``."""
    if spec.loss is None:
        raise ConfigError("membrane.loss is required for the linewidth formula; or give linewidth directly")
    return spec.loss * spec.bending * (1 + math.pi**2 * (m * m + n * n) / 4) * drum_frequency(spec, m, n)


def drum_mode(spec: MembraneSpec, m: int, n: int, linewidth: float | None = None) -> DrumMode:
    """Frequency, linewidth and zero-point amplitude of mode (m, n).

    The effective mass of a peak-normalized drum mode is rho h l^2 / 4, so
    x_zpf = sqrt(2 hbar / (rho h l^2 omega)). ``linewidth`` overrides the
    formula.
    """
    if not (int(m) == m and int(n) == n and m >= 1 and n >= 1):
        raise ConfigError(f"drum mode indices must be positive integers, got ({m}, {n})")
    w = drum_frequency(spec, m, n)
    gam = drum_linewidth(spec, m, n) if linewidth is None else float(linewidth)
    xzpf = math.sqrt(2 * HBAR / (spec.density * spec.thickness * spec.edge**2 * w))
    return DrumMode(int(m), int(n), spec.edge, w, gam, xzpf)


def _overlap_on_grid(mode: DrumMode, spot: GaussianSpot, points: int) -> float:
    x = np.linspace(0.0, mode.edge, points + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = spot.intensity(X, Y) * mode.shape(X, Y)
    return float(simpson(simpson(f, x=x, axis=1), x=x))


def gaussian_overlap(mode: DrumMode, spot: GaussianSpot, points: int = DEFAULT_GRID,
                     atol: float = OVERLAP_ATOL, max_points: int = MAX_GRID) -> float:
    """eta = integral of I W over the membrane, by composite Simpson on a square grid.

    The grid is doubled until two successive values agree to ``atol``.
    """
    prev = _overlap_on_grid(mode, spot, points)
    change = float("nan")
    while points < max_points:
        points *= 2
        cur = _overlap_on_grid(mode, spot, points)
        if abs(cur - prev) < atol:
            return cur
        prev, change = cur, abs(cur - prev)
    raise ResolutionError(points, change)


def gaussian_overlap_unbounded(mode: DrumMode, spot: GaussianSpot) -> float:
    """Closed form of the overlap when the Gaussian tails beyond the edges are negligible."""
    kx, ky = mode.m * math.pi / mode.edge, mode.n * math.pi / mode.edge
    d2 = spot.waist**2
    return (math.sin(kx * spot.x0) * math.exp(-kx * kx * d2 / 4)
            * math.sin(ky * spot.y0) * math.exp(-ky * ky * d2 / 4))


def single_photon_coupling(mode: DrumMode, spot: GaussianSpot, optics: CavityOptics, **quad) -> float:
    """g^S = x_zpf (d omega_c / dL) eta, in rad/s."""
    return mode.zero_point * optics.frequency_pull * gaussian_overlap(mode, spot, **quad)


def coupling_table(modes, spots, optics: CavityOptics, threads: int | None = None, **quad) -> CouplingMatrix:
    """Single-photon coupling matrix; row k belongs to spot k, column j to mode j."""
    pairs = [(m, s) for s in spots for m in modes]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        vals = list(pool.map(lambda p: single_photon_coupling(p[0], p[1], optics, **quad), pairs))
    return CouplingMatrix(np.array(vals).reshape(len(spots), len(modes)), kind="single_photon")


def photon_number(g_row, kappa: float, strength: float) -> float:
    """Intracavity photons giving drive strength ``strength``: Gamma kappa / |g^S|^2."""
    return strength * kappa / float(np.sum(np.abs(np.asarray(g_row)) ** 2))


# -- reference setup ----------------------------------------------------------

REFERENCE_MODES = ((1, 7), (7, 1), (5, 5))
REFERENCE_LINEWIDTH = 2 * math.pi * 39.0e-3


def reference_spots(edge: float = 1e-3, waist: float = 90e-6) -> tuple[GaussianSpot, ...]:
    return (
        GaussianSpot(2 * edge / 7, edge / 2, waist),
        GaussianSpot(edge / 2, edge / 2, waist),
        GaussianSpot(edge / 2, 2 * edge / 7, waist),
    )


@dataclass(frozen=True)
class MembraneSetup:
    spec: MembraneSpec = field(default_factory=MembraneSpec)
    optics: CavityOptics = field(default_factory=CavityOptics)
    modes: tuple = REFERENCE_MODES
    spots: tuple | None = None
    linewidth: float | None = REFERENCE_LINEWIDTH

    def drum_modes(self) -> list[DrumMode]:
        return [drum_mode(self.spec, m, n, self.linewidth) for m, n in self.modes]

    def gaussian_spots(self):
        return self.spots if self.spots is not None else reference_spots(self.spec.edge)

    def table(self, threads: int | None = None, **quad) -> CouplingMatrix:
        return coupling_table(self.drum_modes(), self.gaussian_spots(), self.optics, threads, **quad)

    def constants(self) -> dict:
        first = self.drum_modes()[0]
        return {
            "kappa": self.optics.kappa,
            "frequency_pull": self.optics.frequency_pull,
            "mechanical_frequency": first.frequency,
            "mechanical_linewidth": first.linewidth,
            "zero_point": first.zero_point,
        }
