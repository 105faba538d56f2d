"""Quasi-static drive protocols and steady-state parameter sweeps.

A protocol ramps the per-drive strengths Gamma_k linearly from zero through a
list of segment endpoints. "Quasi-static" means every step is an independent
steady-state solve: the result at a step depends only on the strengths there.
The direction of each coupling row is taken from the base system and only its
length changes.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .linearize import LinearizedSystem
from .model import ConfigError
from .moments import MomentState, StabilityError, hybrid_occupancy, phonon_numbers, steady_state
from .spectral import schmidt_basis


@dataclass(frozen=True)
class Segment:
    targets: tuple  # Gamma_k at the end of the segment
    steps: int = 1

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(float(t) for t in self.targets))
        if any(not t >= 0 for t in self.targets):
            raise ConfigError("segment targets must be non-negative")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError("segment steps must be a positive integer")


@dataclass(frozen=True)
class DriveProtocol:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ConfigError("protocol needs at least one segment")
        sizes = {len(s.targets) for s in self.segments}
        if len(sizes) != 1:
            raise ConfigError("all segments must list the same number of drives")

    @property
    def drives(self) -> int:
        return len(self.segments[0].targets)

    @property
    def final(self) -> np.ndarray:
        return np.array(self.segments[-1].targets)

    def points(self):
        """(segment index, strengths) for every step, starting with all drives off."""
        start = np.zeros(self.drives)
        out = [(-1, start.copy())]
        for i, seg in enumerate(self.segments):
            end = np.array(seg.targets)
            for s in range(1, seg.steps + 1):
                out.append((i, start + (end - start) * s / seg.steps))
            start = end
        return out

    def with_steps(self, steps: int) -> "DriveProtocol":
        return DriveProtocol(tuple(Segment(s.targets, steps) for s in self.segments))

    @classmethod
    def sequential(cls, strength: float, drives: int, steps: int = 1, order=None) -> "DriveProtocol":
        """Turn drives on one at a time (in ``order``) up to ``strength`` each."""
        order = range(drives) if order is None else order
        cur = np.zeros(drives)
        segs = []
        for k in order:
            cur[k] = strength
            segs.append(Segment(tuple(cur), steps))
        return cls(tuple(segs))

    @classmethod
    def simultaneous(cls, strength: float, drives: int, steps: int = 1) -> "DriveProtocol":
        return cls((Segment((strength,) * drives, steps),))


def load_protocol(path) -> DriveProtocol:
    """Read a protocol file: one ``[[segment]]`` table per segment with ``targets`` and ``steps``.

    A top-level ``scale`` multiplies every target.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    unknown = set(doc) - {"segment", "scale"}
    if unknown:
        raise ConfigError(f"protocol: unknown keys {sorted(unknown)}")
    scale = float(doc.get("scale", 1.0))
    segs = []
    for i, raw in enumerate(doc.get("segment", [])):
        extra = set(raw) - {"targets", "steps"}
        if extra:
            raise ConfigError(f"protocol.segment[{i}]: unknown keys {sorted(extra)}")
        if "targets" not in raw:
            raise ConfigError(f"protocol.segment[{i}]: missing targets")
        segs.append(Segment(tuple(scale * float(t) for t in raw["targets"]), int(raw.get("steps", 1))))
    return DriveProtocol(tuple(segs))


# -- coupling helpers ---------------------------------------------------------

def scale_rows(G, kappas, strengths) -> np.ndarray:
    """Rescale each coupling row so that |g_k|^2 / kappa_k equals ``strengths[k]``."""
    G = np.atleast_2d(np.asarray(G, complex))
    strengths = np.asarray(strengths, float)
    norms = np.linalg.norm(G, axis=1)
    out = np.zeros_like(G)
    for k, (g, nrm, s) in enumerate(zip(G, norms, strengths)):
        if s == 0:
            continue
        if nrm == 0:
            raise ConfigError(f"drive {k} has no coupling direction but a positive target strength")
        out[k] = g / nrm * np.sqrt(s * kappas[k])
    return out


def two_mode_couplings(theta: float, strengths, kappas=(1.0, 1.0), phi: float = np.pi / 4) -> np.ndarray:
    """Two real coupling rows at angles phi -/+ theta/2, scaled to the given strengths."""
    u = np.array([[np.cos(phi - theta / 2), np.sin(phi - theta / 2)],
                  [np.cos(phi + theta / 2), np.sin(phi + theta / 2)]])
    return scale_rows(u, np.asarray(kappas, float), strengths)


def two_mode_system(strengths, theta: float = np.arccos(0.8), mean_frequency: float = 20.0,
                    splitting: float = 1e-3, gamma: float = 1e-4, kappas=(1.0, 1.0),
                    gammas=None, detunings=None) -> LinearizedSystem:
    """Two near-degenerate mechanical modes in kappa units, drives on the red sideband.

    One strength means a single drive with g proportional to (1, 1)/sqrt(2);
    two strengths give two drives with cross angle ``theta``.
    """
    strengths = np.atleast_1d(np.asarray(strengths, float))
    if len(strengths) == 1:
        G = scale_rows(np.array([[1.0, 1.0]]), np.asarray(kappas[:1], float), strengths)
    else:
        G = two_mode_couplings(theta, strengths, kappas)
    M = G.shape[0]
    kap = np.asarray(kappas, float)[:M]
    om = np.array([mean_frequency + splitting / 2, mean_frequency - splitting / 2])
    gam = np.full(2, gamma) if gammas is None else np.asarray(gammas, float)
    det = np.full(M, mean_frequency) if detunings is None else np.asarray(detunings, float)
    return LinearizedSystem(det, kap, om, gam, G)


# -- quasi-static runs --------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    segment: int
    strengths: np.ndarray
    state: MomentState
    occupancies: np.ndarray  # in the Schmidt basis
    total: float


@dataclass
class QuasiStaticResult:
    records: list
    basis: np.ndarray  # rows e_1..e_N
    rank: int

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    @property
    def final(self) -> StepRecord:
        return self.records[-1]

    def segment_ends(self) -> list[StepRecord]:
        """Last record of each segment (the plateau values)."""
        ends = {}
        for r in self.records:
            if r.segment >= 0:
                ends[r.segment] = r
        return [ends[i] for i in sorted(ends)]


def _solve_step(base: LinearizedSystem, n_th: float, strengths, basis):
    ls = base.with_couplings(scale_rows(base.couplings, base.kappas, strengths))
    m = steady_state(ls, n_th)
    occ = np.array([hybrid_occupancy(m, e) for e in basis])
    return m, occ, phonon_numbers(m)[1]


def quasi_static_run(base: LinearizedSystem, n_th: float, protocol: DriveProtocol,
                     threads: int | None = None) -> QuasiStaticResult:
    """Steady state at every protocol step.

    Occupancies are reported in the Schmidt basis of the final coupling
    matrix throughout, so mode j reads n_th until drive j is switched on.
    """
    if protocol.drives != base.M:
        raise ConfigError(f"protocol has {protocol.drives} drives, system has {base.M}")
    final_G = scale_rows(base.couplings, base.kappas, protocol.final)
    sb = schmidt_basis(final_G) if np.any(final_G) else None
    basis = np.eye(base.N, dtype=complex) if sb is None else sb.vectors
    rank = 0 if sb is None else sb.rank
    points = protocol.points()
    records = []

    def solve(item):
        i, (seg, s) = item
        try:
            return _solve_step(base, n_th, s, basis)
        except StabilityError as exc:
            raise StabilityError(f"step {i} (segment {seg}, strengths {np.round(s, 12).tolist()}): {exc}") from exc

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for seg in sorted({p[0] for p in points}):
            batch = [(i, p) for i, p in enumerate(points) if p[0] == seg]
            for (i, (sg, s)), (m, occ, tot) in zip(batch, pool.map(solve, batch)):
                records.append(StepRecord(i, sg, s, m, occ, tot))
    return QuasiStaticResult(records, basis, rank)


def write_run_csv(path, result: QuasiStaticResult) -> None:
    """Long format: step, segment, Gamma_1..Gamma_M, n~_1..n~_N, n_tot."""
    rec = result.records
    M, N = len(rec[0].strengths), len(rec[0].occupancies)
    header = (["step", "segment"] + [f"Gamma_{k + 1}" for k in range(M)]
              + [f"n_schmidt_{j + 1}" for j in range(N)] + ["n_tot"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rec:
            vals = [*r.strengths, *r.occupancies, r.total]
            w.writerow([r.step, r.segment] + [f"{x:.17g}" for x in vals])


@dataclass(frozen=True)
class PathComparison:
    total_a: float
    total_b: float
    relative_difference: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.relative_difference <= self.tolerance


def path_independence_check(base: LinearizedSystem, n_th: float, protocol_a: DriveProtocol,
                            protocol_b: DriveProtocol, rtol: float = 1e-8,
                            threads: int | None = None) -> PathComparison:
    """Run two protocols with the same endpoint and compare the final total occupancy."""
    if protocol_a.drives != protocol_b.drives or not np.allclose(
            protocol_a.final, protocol_b.final, rtol=1e-12, atol=0):
        raise ConfigError("protocols must end at identical drive strengths")
    a = quasi_static_run(base, n_th, protocol_a, threads).final.total
    b = quasi_static_run(base, n_th, protocol_b, threads).final.total
    return PathComparison(a, b, abs(a - b) / max(abs(a), abs(b)), rtol)


# -- sweeps -------------------------------------------------------------------

@dataclass
class Curve:
    parameter: np.ndarray
    total: np.ndarray
    argmin: float
    minimum: float


def _total(ls, n_th):
    return phonon_numbers(steady_state(ls, n_th))[1]


def detuning_sweep(base: LinearizedSystem, n_th: float, k: int, detunings,
                   refine: bool = True, threads: int | None = None) -> Curve:
    """n_tot as a function of the detuning of drive k, with the minimum located.

    The grid minimum is refined by a bounded scalar search between its neighbours.
    """
    detunings = np.asarray(detunings, float)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        tot = np.array(list(pool.map(lambda d: _total(base.with_detuning(k, d), n_th), detunings)))
    i = int(np.argmin(tot))
    x, y = detunings[i], tot[i]
    if refine and 0 < i < len(detunings) - 1 and np.ptp(tot) > 0:
        res = minimize_scalar(lambda d: _total(base.with_detuning(k, d), n_th),
                              bounds=(detunings[i - 1], detunings[i + 1]), method="bounded",
                              options={"xatol": 1e-10})
        if res.fun <= y:
            x, y = float(res.x), float(res.fun)
    return Curve(detunings, tot, float(x), float(y))


def contrast_system(contrast: float, kappa_ratio: float = 1.0, gamma_ratio: float = 1.0,
                    coupling_sum: float = 0.5, theta: float = np.pi / 4, mean_frequency: float = 20.0,
                    splitting: float = 1e-3, gamma: float = 1e-4) -> LinearizedSystem:
    """Two drives with |g_1|^2 + |g_2|^2 = coupling_sum and the given contrast (kappa_1 = 1)."""
    if not -1 <= contrast <= 1:
        raise ValueError("contrast must lie in [-1, 1]")
    kap = np.array([1.0, kappa_ratio])
    g2 = coupling_sum * np.array([(1 + contrast) / 2, (1 - contrast) / 2])
    return two_mode_system(g2 / kap, theta, mean_frequency, splitting, gamma, kap,
                           gammas=[gamma, gamma * gamma_ratio])


def contrast_sweep(contrasts, n_th: float, kappa_ratio: float = 1.0, gamma_ratio: float = 1.0,
                   threads: int | None = None, **kwargs) -> Curve:
    """n_tot against drive contrast at fixed total coupling."""
    contrasts = np.asarray(contrasts, float)

    def run(c):
        return _total(contrast_system(c, kappa_ratio, gamma_ratio, **kwargs), n_th)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        tot = np.array(list(pool.map(run, contrasts)))
    i = int(np.argmin(tot))
    return Curve(contrasts, tot, float(contrasts[i]), float(tot[i]))


def write_curve_csv(path, curve: Curve, name: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name, "n_tot"])
        for x, y in zip(curve.parameter, curve.total):
            w.writerow([f"{x:.17g}", f"{y:.17g}"])


def strength_sweep(base: LinearizedSystem, n_th: float, strengths, threads: int | None = None):
    """Occupations n_j along a sweep of the total strength, split evenly across drives."""
    strengths = np.asarray(strengths, float)

    def run(s):
        ls = base.with_couplings(scale_rows(base.couplings, base.kappas, np.full(base.M, s / base.M)))
        return steady_state(ls, n_th)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, strengths))

