"""Closed-form cooling limits.

Three regimes are covered, each with its own validity conditions:

* weak coupling with the cavity adiabatically eliminated (gamma, dw << Gamma << kappa);
* the classical strong-drive limit for two symmetric modes (dw = 0);
* the quantum back-action limit from the force-noise asymmetry.

``regime_flags`` evaluates the conditions so reports can state which
formulas apply.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import DependentRowsError, coupling_angles, numerical_rank

# "a << b" is read as a < MARGIN * b in validity flags
MARGIN = 0.1


class DarkModeError(ValueError):
    """The coupling matrix leaves a dark mode, so the weak-coupling limit diverges."""


class HeatingError(ValueError):
    """Blue-sideband noise dominates; there is no cooling limit."""


def weak_coupling_two_mode(gamma, strength, theta, splitting, n_th):
    """Steady total phonon number, two modes, two symmetric drives, weak coupling.

    ``strength`` is the total Gamma (each drive carries Gamma/2); ``theta`` is
    the cross angle between the coupling vectors.
    """
    a = gamma + 2.0 * strength
    c2 = np.cos(theta) ** 2
    return 2.0 * gamma * n_th * a / (a**2 - 4.0 * strength**2 * c2 * a**2 / (a**2 + splitting**2))


def weak_coupling_two_mode_degenerate(gamma, strength, theta, n_th):
    """The ``splitting -> 0`` form: 2 gamma n_th (gamma + 2G) / (gamma^2 + 4 gamma G + 4 G^2 sin^2 theta)."""
    s2 = np.sin(theta) ** 2
    return 2.0 * gamma * n_th * (gamma + 2.0 * strength) / (
        gamma**2 + 4.0 * gamma * strength + 4.0 * strength**2 * s2)


def _square_invertible(G):
    G = np.asarray(G, complex)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DarkModeError(f"need as many drives as mechanical modes, got shape {G.shape}")
    r = numerical_rank(G)
    if r < G.shape[0]:
        raise DarkModeError(f"coupling matrix has rank {r} < {G.shape[0]}: a dark mode survives")
    return G


def weak_coupling_general(G, kappas, gamma, n_th) -> float:
    """n_tot = (gamma n_th / 2) Tr P^-1 with P = 2 G^dag K^-1 G.

    Uses the equivalent form (gamma n_th / 4) sum_k kappa_k |c_k|^2, where c_k
    is the k-th reciprocal vector (conjugated column of G^-1). For uniform
    kappa this is (gamma kappa n_th / 4) sum |(G^-1)_jk|^2.
    """
    G = _square_invertible(G)
    kap = np.broadcast_to(np.asarray(kappas, float), (G.shape[0],))
    Ginv = np.linalg.inv(G)
    return float(gamma * n_th / 4.0 * np.sum(kap[None, :] * np.abs(Ginv) ** 2))


def weak_coupling_trace_form(G, kappas, gamma, n_th) -> float:
    """Same limit computed literally as (gamma n_th / 2) Tr P^-1."""
    G = _square_invertible(G)
    kap = np.broadcast_to(np.asarray(kappas, float), (G.shape[0],))
    P = 2.0 * G.conj().T @ np.diag(1.0 / kap) @ G
    return float(gamma * n_th / 2.0 * np.trace(np.linalg.inv(P)).real)


def limit_by_angles(strengths, thetas, gamma, n_th) -> float:
    """(gamma n_th / 4) sum_k 1 / (Gamma_k sin^2 theta_k)."""
    s = np.sin(np.asarray(thetas, float)) ** 2
    if np.any(s == 0):
        raise DarkModeError("a coupling angle is zero: the cooling limit diverges")
    return float(gamma * n_th / 4.0 * np.sum(1.0 / (np.asarray(strengths, float) * s)))


def strengths_and_angles(G, kappas):
    """(Gamma_k, theta_k) of a square coupling matrix."""
    G = np.asarray(G, complex)
    try:
        th = coupling_angles(G)
    except DependentRowsError as exc:
        raise DarkModeError(str(exc)) from exc
    kap = np.broadcast_to(np.asarray(kappas, float), (G.shape[0],))
    return np.sum(np.abs(G) ** 2, axis=1) / kap, th


def classical_limit_two_mode(gamma, kappa, strength, theta, n_th):
    """Two symmetric modes at zero splitting, any drive strength (no adiabatic elimination).

    With s = (gamma + kappa)/Gamma, L = gamma[(s + 2)^2 - 4 cos^2 theta]/kappa and
    q = L + 2s + 4 sin^2 theta, n_tot = 2 L n_th / (q - 4 s^2 cos^2 theta / q).
    """
    if strength == 0:
        return 2.0 * n_th
    s = (gamma + kappa) / strength
    c2 = np.cos(theta) ** 2
    L = gamma * ((s + 2.0) ** 2 - 4.0 * c2) / kappa
    q = L + 2.0 * s + 4.0 * np.sin(theta) ** 2
    return 2.0 * L * n_th / (q - 4.0 * s**2 * c2 / q)


def classical_asymptote(gamma, kappa, theta, n_th):
    """Gamma -> infinity of :func:`classical_limit_two_mode`."""
    if np.isclose(np.sin(theta), 0.0, atol=1e-15):
        return (gamma / (gamma + kappa) + 1.0) * n_th
    return 2.0 * gamma * n_th / (gamma + kappa)


@dataclass(frozen=True)
class QuantumLimit:
    spectrum: Callable[[float], float]
    occupancy: float


def force_spectrum(g_column, detunings, kappas) -> Callable:
    """S(w) = sum_k |g_kj|^2 / ((w - delta_k)^2 + kappa_k^2/4), in units with x_zpf = 1."""
    g2 = np.abs(np.asarray(g_column, complex)) ** 2
    d = np.asarray(detunings, float)
    k = np.asarray(kappas, float)

    def spectrum(w):
        w = np.asarray(w, float)[..., None]
        return np.sum(g2 / ((w - d) ** 2 + k**2 / 4.0), axis=-1)

    return spectrum


def quantum_limit(g_column, detunings, kappas, mean_frequency) -> QuantumLimit:
    """Back-action limit n^Q = S(-w) / (S(w) - S(-w)) at the mean mechanical frequency."""
    S = force_spectrum(g_column, detunings, kappas)
    red, blue = float(S(mean_frequency)), float(S(-mean_frequency))
    if not red > blue:
        raise HeatingError(f"S(+w) = {red:.6g} does not exceed S(-w) = {blue:.6g}")
    return QuantumLimit(S, blue / (red - blue))


def regime_flags(gamma, strength, kappa, splitting=0.0, mean_frequency=None) -> dict:
    """Validity of each analytic regime for the given scales."""
    flags = {
        "weak_coupling": bool(gamma < MARGIN * strength and strength < MARGIN * kappa),
        "degenerate": bool(splitting < MARGIN * strength),
        "strong_coupling": bool(strength >= kappa),
    }
    if mean_frequency is not None:
        flags["resolved_sideband"] = bool(kappa < MARGIN * mean_frequency)
    return flags
