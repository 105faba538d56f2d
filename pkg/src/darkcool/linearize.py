"""Classical steady state of the driven system and the linearized fluctuation model.

The mean fields obey

    d alpha_k/dt = (-i delta'_k - kappa_k/2) alpha_k
                   - i sum_j gS_kj alpha_k (beta_j + beta_j^*) - i Q_k
    d beta_j/dt  = (-i omega_j - gamma_j/2) beta_j - i sum_k gS_kj |alpha_k|^2

and the fluctuations see the corrected detuning
delta_k = delta'_k + sum_j gS_kj (beta_j + beta_j^*) and the enhanced
coupling g_kj = gS_kj alpha_k.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .model import ConfigError, NumericalError, SystemConfig

log = logging.getLogger(__name__)

PICARD_DAMPING = 0.5
PICARD_MAX_ITER = 10_000
PICARD_RTOL = 1e-12


class ConvergenceError(NumericalError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class NoCouplingError(ConfigError):
    pass


@dataclass(frozen=True)
class LinearizedSystem:
    """Everything the fluctuation dynamics needs.

    ``alpha`` and ``beta`` are ``None`` when the linearized couplings were
    supplied directly instead of being derived from drive amplitudes.
    """

    detunings: np.ndarray
    kappas: np.ndarray
    omegas: np.ndarray
    gammas: np.ndarray
    couplings: np.ndarray
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    bare_detunings: np.ndarray | None = None

    @property
    def M(self) -> int:
        return len(self.kappas)

    @property
    def N(self) -> int:
        return len(self.omegas)

    def with_couplings(self, G) -> "LinearizedSystem":
        G = np.asarray(G, dtype=complex).reshape(self.M, self.N)
        return LinearizedSystem(self.detunings, self.kappas, self.omegas, self.gammas, G,
                                None, None, self.bare_detunings)

    def with_detuning(self, k: int, value: float) -> "LinearizedSystem":
        d = np.array(self.detunings, dtype=float)
        d[k] = value
        return LinearizedSystem(d, self.kappas, self.omegas, self.gammas, self.couplings,
                                self.alpha, self.beta, self.bare_detunings)


def mean_field_residual(cfg: SystemConfig, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand sides of the mean-field equations; zero at a steady state."""
    gS = cfg.coupling.values
    kap, om, gam = cfg.kappas, cfg.omegas, cfg.gammas
    x = 2.0 * np.real(beta)
    delta = cfg.bare_detunings + np.real(gS @ x)
    d_alpha = (-1j * delta - kap / 2) * alpha - 1j * cfg.drive_amplitudes
    d_beta = (-1j * om - gam / 2) * beta - 1j * (gS.T @ np.abs(alpha) ** 2)
    return d_alpha, d_beta


def classical_steady_state(
    cfg: SystemConfig,
    damping: float = PICARD_DAMPING,
    max_iter: int = PICARD_MAX_ITER,
    rtol: float = PICARD_RTOL,
) -> LinearizedSystem:
    """Self-consistent mean fields by damped Picard iteration on beta.

    Each sweep evaluates alpha_k = -i Q_k / (i delta_k + kappa_k/2) at the
    current detuning, then beta_j = -i sum_k gS_kj |alpha_k|^2 / (i omega_j + gamma_j/2),
    and mixes the new beta with the old one.

    Raises
    ------
    ConvergenceError
        When the iteration stalls, typically a bistable or strongly
        nonlinear drive.
    """
    if cfg.coupling.kind != "single_photon":
        raise ConfigError("classical_steady_state needs single-photon couplings")
    gS = cfg.coupling.values
    if not np.all(np.isreal(gS)):
        # the radiation-pressure term couples to (b + b^dagger) with a real gS
        raise ConfigError("single-photon couplings must be real")
    gS = gS.real
    kap, om, gam = cfg.kappas, cfg.omegas, cfg.gammas
    Q = cfg.drive_amplitudes
    d0 = cfg.bare_detunings

    def alpha_of(beta):
        delta = d0 + gS @ (2.0 * beta.real)
        return -1j * Q / (1j * delta + kap / 2), delta

    beta = np.zeros(cfg.N, dtype=complex)
    resid = np.inf
    for it in range(max_iter):
        alpha, delta = alpha_of(beta)
        beta_new = -1j * (gS.T @ np.abs(alpha) ** 2) / (1j * om + gam / 2)
        scale = max(np.max(np.abs(beta_new), initial=0.0), np.finfo(float).tiny)
        resid = np.max(np.abs(beta_new - beta), initial=0.0) / scale
        beta = damping * beta + (1 - damping) * beta_new
        if resid < rtol or not np.any(beta_new):
            beta = beta_new
            break
    else:
        raise ConvergenceError(f"mean-field iteration did not converge in {max_iter} sweeps", resid)
    alpha, delta = alpha_of(beta)
    log.debug("mean fields converged after %d sweeps", it + 1)
    G = gS * alpha[:, None]
    return LinearizedSystem(delta, kap, om, gam, G, alpha, beta, d0)


def linearized_system(cfg: SystemConfig, rtol: float = PICARD_RTOL) -> LinearizedSystem:
    """Entry point for both config styles: derive from drives, or take G as given."""
    if cfg.coupling.kind == "single_photon":
        return classical_steady_state(cfg, rtol=rtol)
    d = cfg.bare_detunings
    return LinearizedSystem(d, cfg.kappas, cfg.omegas, cfg.gammas,
                            np.array(cfg.coupling.values), None, None, d)


def amplitude_for_target_strength(cfg: SystemConfig, k: int, target: float, tol: float = 1e-12) -> complex:
    """Drive amplitude Q_k such that drive k ends up with strength ``target``.

    Gamma_k = |alpha_k|^2 |gS_k|^2 / kappa_k fixes the intracavity photon number;
    Q_k then follows from inverting the alpha relation at the self-consistent
    detuning. The other drives are held at their configured amplitudes, so the
    mean-field shift they cause is included. The phase of Q_k is chosen so
    that alpha_k is real and positive.
    """
    if target < 0:
        raise ValueError("target strength must be non-negative")
    gS = cfg.coupling.values
    row_norm2 = float(np.sum(np.abs(gS[k]) ** 2))
    if row_norm2 == 0:
        raise NoCouplingError(f"optical mode {k} has no single-photon coupling")
    if target == 0:
        return 0j
    kap = cfg.kappas[k]
    n_target = target * kap / row_norm2
    a_k = np.sqrt(n_target)

    # fixed point in the detuning: alpha_k is pinned, the others respond to delta
    Q = complex(0)
    Q_new = Q
    for _ in range(200):
        optical = list(cfg.optical)
        optical[k] = replace(optical[k], drive_amplitude=Q)
        trial = replace(cfg, optical=tuple(optical))
        ls = classical_steady_state(trial)
        # invert alpha = -iQ/(i delta + kappa/2) with alpha_k = a_k
        Q_new = 1j * a_k * (1j * ls.detunings[k] + kap / 2)
        if abs(Q_new - Q) <= tol * abs(Q_new):
            return complex(Q_new)
        Q = Q_new
    raise ConvergenceError("drive amplitude inversion did not converge", abs(Q_new - Q) / abs(Q_new))


def linearized_hamiltonian_matrices(ls: LinearizedSystem):
    """Return (Delta, Omega, G, K): detuning, mechanical frequency, coupling and linewidth matrices."""
    return (np.diag(ls.detunings), np.diag(ls.omegas), np.array(ls.couplings), np.diag(ls.kappas))
