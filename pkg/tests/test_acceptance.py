"""Acceptance criteria, one test each.

Every test evaluates all parts of its criterion before asserting, so a
failure message lists each measured value next to its target.
"""
import math

import numpy as np
import pytest

from conftest import preset_system
from darkcool.limits import (classical_limit_two_mode, limit_by_angles, quantum_limit, strengths_and_angles,
                             weak_coupling_general, weak_coupling_two_mode_degenerate)
from darkcool.membrane import MembraneSetup
from darkcool.moments import (MomentState, build_generator, default_time_step, evolve_moments,
                              fit_double_exponential, hybrid_occupancy, phonon_numbers, steady_state)
from darkcool.schedule import DriveProtocol, detuning_sweep, path_independence_check, quasi_static_run, \
    two_mode_system
from darkcool.spectral import (dissipation_matrix, eigenmodes, find_exceptional_points, rwa_dynamical_matrix,
                               schmidt_basis)

GAMMA = 1e-4
SPLIT = 1e-3
THETA = math.acos(0.8)
DARK = np.array([1.0, -1.0]) / math.sqrt(2)


def _report(parts):
    """Print one line per part and return the names of the failing ones."""
    for name, value, target, ok in parts:
        print(f"  {'ok  ' if ok else 'MISS'} {name}: {value} (target {target})")
    return [p[0] for p in parts if not p[3]]


def _within(x, ref, rel):
    return abs(x - ref) <= rel * abs(ref)


@pytest.mark.criterion(1, "membrane coupling table within 0.5%, zeros < 0.05")
def test_criterion_01_table(membrane_table):
    ref = np.array([[43.61, 0.0, 54.38], [55.78, 55.78, 55.78], [0.0, 43.61, 54.38]])
    mag = np.abs(membrane_table)
    parts = []
    for (i, j), r in np.ndenumerate(ref):
        ok = mag[i, j] < 0.05 if r == 0 else _within(mag[i, j], r, 5e-3)
        parts.append((f"|g[{i + 1},{j + 1}]|", round(mag[i, j], 4), r, ok))
    assert not _report(parts)


@pytest.mark.criterion(2, "membrane constants (omega, x_zpf, kappa, d omega_c/dL)")
def test_criterion_02_constants():
    c = MembraneSetup().constants()
    parts = [
        ("omega/2pi [Hz]", c["mechanical_frequency"] / (2 * math.pi), 1.178e6,
         _within(c["mechanical_frequency"] / (2 * math.pi), 1.178e6, 1e-3)),
        ("x_zpf [m]", c["zero_point"], 5.13e-16, _within(c["zero_point"], 5.13e-16, 1e-2)),
        ("kappa/2pi [Hz]", c["kappa"] / (2 * math.pi), 0.967e6, _within(c["kappa"] / (2 * math.pi), 0.967e6, 1e-3)),
        ("d omega_c/dL [1/(m s)]", c["frequency_pull"], 2.95e17, _within(c["frequency_pull"], 2.95e17, 1e-2)),
    ]
    failed = _report(parts)
    assert not failed, failed


@pytest.mark.criterion(3, "dark mode saturates with one drive, cools with two")
def test_criterion_03_dark_mode():
    n_th = 1e4
    strength = 10 * SPLIT
    single = hybrid_occupancy(steady_state(two_mode_system([strength]), n_th), DARK) / n_th
    dual = hybrid_occupancy(steady_state(two_mode_system([strength / 2, strength / 2]), n_th), DARK) / n_th
    failed = _report([
        ("single drive n_-/n_th", single, "[0.9, 1.01]", 0.9 <= single <= 1.01),
        ("dual drive n_-/n_th", dual, "< 0.1", dual < 0.1),
    ])
    assert not failed, failed


@pytest.mark.criterion(4, "moments vs closed forms (weak 5%, classical 10%)")
def test_criterion_04_analytic_agreement():
    n_th = 1e4
    parts = []
    for s in np.geomspace(0.005, 0.1, 10):
        n = phonon_numbers(steady_state(two_mode_system([s / 2, s / 2]), n_th))[1] / n_th
        ref = weak_coupling_two_mode_degenerate(GAMMA, s, THETA, 1.0)
        parts.append((f"weak Gamma={s:.4g}", f"{n / ref - 1:+.4f}", "|err| <= 0.05", _within(n, ref, 0.05)))
    for s in np.geomspace(1.0, 10.0, 5):
        n = phonon_numbers(steady_state(two_mode_system([s / 2, s / 2]), n_th))[1] / n_th
        ref = classical_limit_two_mode(GAMMA, 1.0, s, THETA, 1.0)
        parts.append((f"classical Gamma={s:.4g}", f"{n / ref - 1:+.4f}", "|err| <= 0.10", _within(n, ref, 0.1)))
    failed = _report(parts)
    assert not failed, failed


@pytest.mark.criterion(5, "identities: angle form, Tr P, Schmidt orthogonality")
def test_criterion_05_identities():
    rng = np.random.default_rng(20240501)
    worst = {"angles": 0.0, "trace": 0.0, "schmidt": 0.0}
    for i in range(100):
        N = 2 + i % 5
        G = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        kap = rng.uniform(0.5, 2.0, N)
        s, th = strengths_and_angles(G, kap)
        a = limit_by_angles(s, th, GAMMA, 1.0)
        b = weak_coupling_general(G, kap, GAMMA, 1.0)
        worst["angles"] = max(worst["angles"], abs(a - b) / abs(b))
        P, _ = dissipation_matrix(G, kap)
        worst["trace"] = max(worst["trace"], abs(np.trace(P).real - 2 * s.sum()) / (2 * s.sum()))
        e = schmidt_basis(G).vectors
        res = max(np.max(np.abs(e @ e.conj().T - np.eye(N))),
                  max((abs(G[k].conj() @ e[j]) / np.linalg.norm(G[k]) for j in range(N) for k in range(j)),
                      default=0.0))
        worst["schmidt"] = max(worst["schmidt"], res)
    failed = _report([
        ("angle form vs inverse form", worst["angles"], "< 1e-9", worst["angles"] < 1e-9),
        ("Tr P vs 2 Gamma", worst["trace"], "< 1e-12", worst["trace"] < 1e-12),
        ("Schmidt residual", worst["schmidt"], "< 1e-10", worst["schmidt"] < 1e-10),
    ])
    assert not failed, failed


@pytest.mark.criterion(6, "double-exponential decay rates and long-time state")
def test_criterion_06_double_exponential():
    strength, n_th = 0.05, 50.0
    ls = two_mode_system([strength / 2, strength / 2])
    gen = build_generator(ls, n_th)
    ss = steady_state(ls, n_th)
    n_ss = phonon_numbers(ss)[1]
    traj = evolve_moments(gen, MomentState.thermal(2, 2, n_th), 1500.0, default_time_step(ls), 100)
    tot = traj.total_phonons()
    window = traj.times <= 400.0
    fast, slow, _, _ = fit_double_exponential(traj.times[window], tot[window], n_ss)
    early = 4 * strength * math.cos(THETA / 2) ** 2
    late = 4 * strength * math.sin(THETA / 2) ** 2
    dev = abs(tot[-1] - n_ss) / n_ss
    failed = _report([
        ("early rate", fast, f"{early:.4g} +/- 10%", _within(fast, early, 0.1)),
        ("late rate", slow, f"{late:.4g} +/- 10%", _within(slow, late, 0.1)),
        ("RK4 vs linear solve at t=1500", dev, "< 1e-6", dev < 1e-6),
    ])
    assert not failed, failed


@pytest.mark.criterion(7, "exceptional points and dark-branch linewidths")
def test_criterion_07_exceptional_points():
    grid = np.geomspace(1e-5, 10.0, 400)
    parts = []
    for label, ls in (("single", two_mode_system([0.5])), ("dual", two_mode_system([0.25, 0.25]))):
        eps = [e.strength for e in find_exceptional_points(ls, grid)]
        a = [s for s in eps if SPLIT / 3 <= s <= 3 * SPLIT]
        b = [s for s in eps if s >= 0.05]
        parts.append((f"{label} A-point near dw", a, "in [dw/3, 3 dw]", bool(a)))
        parts.append((f"{label} B-point strong coupling", b, ">= 0.05 kappa", bool(b)))
    for label, ls, M in (("single", two_mode_system([0.1]), 1), ("dual", two_mode_system([0.05, 0.05]), 2)):
        rep = eigenmodes(rwa_dynamical_matrix(ls), M, couplings=ls.couplings)
        ratio = -rep.eigenvalues[rep.branch_of(DARK)].imag / (GAMMA / 2)
        if label == "single":
            parts.append(("single dark |Im|/(gamma/2)", ratio, "1 +/- 5%", abs(ratio - 1) <= 0.05))
        else:
            parts.append(("dual dark |Im|/(gamma/2)", ratio, ">= 10", ratio >= 10))
    failed = _report(parts)
    assert not failed, failed


@pytest.mark.criterion(8, "sequential three-drive membrane cooling below one phonon")
def test_criterion_08_membrane_cooling():
    base, n_th, unit, run = preset_system("fig4a")
    proto = DriveProtocol.sequential(run["strength"] / unit, 3, steps=int(run["steps"]))
    occ = quasi_static_run(base, n_th, proto).final.occupancies
    failed = _report([(f"n_schmidt_{j + 1} (n_th={n_th:.1f})", occ[j], "< 1", occ[j] < 1) for j in range(3)])
    assert not failed, failed


@pytest.mark.criterion(9, "ten-mode staircase")
def test_criterion_09_staircase():
    base, n_th, _, run = preset_system("fig4b")
    res = quasi_static_run(base, n_th, DriveProtocol.sequential(run["strength"], base.M, steps=1))
    plateaus = np.array([r.total for r in res.segment_ends()]) / n_th
    parts = [(f"plateau M={M}", plateaus[M - 1], f"{10 - M} +/- 5%", _within(plateaus[M - 1], 10 - M, 0.05))
             for M in range(1, 10)]
    # drives beyond the tenth find no dark mode left to cool
    for M in range(11, base.M + 1):
        drop = 1 - plateaus[M - 1] / plateaus[M - 2]
        parts.append((f"drop to M={M}", drop, "< 0.5", drop < 0.5))
    failed = _report(parts)
    assert not failed, failed


@pytest.mark.criterion(10, "sequential and simultaneous ramps end equal")
def test_criterion_10_path_independence():
    base, n_th, unit, run = preset_system("figS4")
    s = run["strength"] / unit
    cmp_ = path_independence_check(base, n_th, DriveProtocol.sequential(s, 3, steps=2),
                                   DriveProtocol.simultaneous(s, 3, steps=2))
    failed = _report([("relative difference", cmp_.relative_difference, "< 1e-8", cmp_.relative_difference < 1e-8)])
    assert not failed, failed


@pytest.mark.criterion(11, "detuning optimum at the mean mechanical frequency")
def test_criterion_11_detuning_optimum():
    base, n_th, _, _ = preset_system("figS1")
    curve = detuning_sweep(base, n_th, 0, np.linspace(19.0, 21.0, 81))
    offset = curve.argmin - float(np.mean(base.omegas))
    failed = _report([("argmin offset [kappa]", offset, "|.| < 0.01", abs(offset) < 0.01)])
    assert not failed, failed


@pytest.mark.criterion(12, "quantum back-action limit")
def test_criterion_12_quantum_limit():
    wbar = 20.0
    q = quantum_limit([0.3, 0.7], [wbar, wbar], [1.0, 1.0], wbar).occupancy
    closed = 1.0 / (16 * wbar**2)
    failed = _report([
        ("n_Q vs kappa^2/(16 w^2)", q, closed, abs(q - closed) <= 1e-15 * closed),
        ("n_Q", q, "1.5625e-4 and < 1e-3", abs(q - 1.5625e-4) <= 1e-15 and q < 1e-3),
    ])
    assert not failed, failed
