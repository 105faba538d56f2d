"""Rotating-wave spectral analysis: normal modes, dark subspace, optical damping matrix.

Mechanical "coefficient vectors" e describe the mode b~ = sum_j e_j b_j. Such a
mode is dark for drive k when g_k^* . e = sum_j conj(g_kj) e_j = 0, i.e. e is
orthogonal (Hermitian inner product) to the coupling row g_k. The bright mode
of a single drive therefore has coefficients proportional to g_k itself.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .linearize import LinearizedSystem

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10
EP_THRESHOLD = 1e-6  # coalescence threshold, in units of kappa


class DependentRowsError(ValueError):
    def __init__(self, rank, n):
        super().__init__(f"coupling rows are linearly dependent (rank {rank} of {n})")
        self.rank = rank


# -- dynamical matrix and eigenmodes -----------------------------------------

def rwa_dynamical_matrix(ls: LinearizedSystem) -> np.ndarray:
    """Complex (M+N) x (M+N) matrix H with d/dt (a, b) = -i H (a, b) in the RWA.

    Diagonal: delta_k - i kappa_k/2 and omega_j - i gamma_j/2; off-diagonal
    blocks G and G^dagger.
    """
    G = np.asarray(ls.couplings, dtype=complex)
    top = np.hstack([np.diag(ls.detunings - 0.5j * ls.kappas), G])
    bot = np.hstack([G.conj().T, np.diag(ls.omegas - 0.5j * ls.gammas)])
    return np.vstack([top, bot])


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, unit norm
    photonic_weight: np.ndarray
    labels: list
    M: int
    ties: list = field(default_factory=list)

    @property
    def phononic_weight(self) -> np.ndarray:
        return 1.0 - self.photonic_weight

    def mechanical_part(self, i: int) -> np.ndarray:
        return self.eigenvectors[self.M:, i]

    def overlap_with(self, e) -> np.ndarray:
        """Weight of each (unit-norm) mode on the mechanical coefficient vector ``e``.

        A right eigenvector's mechanical amplitudes are the conjugates of its
        coefficient vector, hence ``e^H conj(v_mech)``.
        """
        e = np.asarray(e, complex)
        e = e / np.linalg.norm(e)
        return np.abs(e.conj() @ self.eigenvectors[self.M:, :].conj()) ** 2

    def branch_of(self, e) -> int:
        """Index of the mode with the largest weight on ``e``."""
        return int(np.argmax(self.overlap_with(e)))


def _label(vec, M, G, weight):
    if weight > 0.5:
        return "optical-like"
    mech = vec[M:]
    nrm = np.linalg.norm(mech)
    if G.shape[0] == 0 or nrm == 0:
        return "dark-like"
    # share of the coefficient vector lying in span{g_k}
    Q, _ = np.linalg.qr(G.T)
    coeff = mech.conj() / nrm
    in_span = np.linalg.norm(Q.conj().T @ coeff) ** 2
    return "bright-like" if in_span >= 0.5 else "dark-like"


def _order(w, v, previous):
    ties = []
    if previous is None:
        return np.lexsort((w.real, -w.imag)), ties
    ov = np.abs(previous.eigenvectors.conj().T @ v) ** 2  # [old, new]
    order = np.empty(len(w), dtype=int)
    taken = np.zeros(len(w), dtype=bool)
    for i in range(len(w)):
        cand = np.where(taken, -np.inf, ov[i])
        hits = np.flatnonzero(np.isclose(cand, np.max(cand), rtol=0, atol=1e-12))
        if len(hits) > 1:
            ties.append((i, tuple(int(h) for h in hits)))
        order[i] = hits[0]
        taken[hits[0]] = True
    return order, ties


def _report(w, v, M, previous, couplings):
    v = v / np.linalg.norm(v, axis=0)
    order, ties = _order(w, v, previous)
    w, v = w[order], v[:, order]
    weight = np.sum(np.abs(v[:M]) ** 2, axis=0)
    G = np.zeros((0, v.shape[0] - M)) if couplings is None else np.asarray(couplings)
    labels = [_label(v[:, i], M, G, weight[i]) for i in range(len(w))]
    return SpectralReport(w, v, weight, labels, M, ties)


def eigenmodes(H: np.ndarray, M: int, previous: SpectralReport | None = None,
               couplings: np.ndarray | None = None) -> SpectralReport:
    """Eigen-decomposition with photonic weights and presentation labels.

    Without ``previous`` the modes are ordered by decreasing Im (least damped
    first), then by Re. With ``previous`` they are matched to the earlier
    sweep point by maximal eigenvector overlap; ambiguous matches are resolved
    by index order and recorded in ``ties``. Labels need ``couplings`` to tell
    bright from dark; without them every phonon-like mode is "dark-like".
    """
    w, v = np.linalg.eig(H)
    return _report(w, v, M, previous, couplings)


# -- dark subspace, damping matrix, bases -------------------------------------

@dataclass(frozen=True)
class DarkSubspace:
    basis: np.ndarray  # (dim, N), rows orthonormal coefficient vectors
    rank: int

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]


def numerical_rank(G, rtol: float = RANK_RTOL) -> int:
    G = np.atleast_2d(np.asarray(G, complex))
    if G.size == 0:
        return 0
    s = np.linalg.svd(G, compute_uv=False)
    return int(np.sum(s > rtol * s.max())) if s.max() > 0 else 0


def dark_subspace(G, N: int | None = None, rtol: float = RANK_RTOL) -> DarkSubspace:
    """Orthonormal basis of {e : g_k^* . e = 0 for every row k}, via SVD."""
    G = np.asarray(G, complex)
    if G.ndim == 1:
        G = G[None, :]
    N = G.shape[1] if N is None else N
    if G.shape[0] == 0 or not np.any(G):
        return DarkSubspace(np.eye(N, dtype=complex), 0)
    # g_k^* . e = (conj(G) e)_k ; null space of conj(G)
    _, s, Vh = np.linalg.svd(G.conj())
    r = int(np.sum(s > rtol * s.max()))
    return DarkSubspace(Vh[r:].conj(), r)


def dissipation_matrix(ls_or_G, kappas=None):
    """Optical damping matrix P = 2 G^dag K^-1 G and its per-drive parts.

    p^(k)_{jj'} = 2 conj(g_kj) g_kj' / kappa_k, so Tr P^(k) = 2 Gamma_k.
    """
    if isinstance(ls_or_G, LinearizedSystem):
        G, kap = np.asarray(ls_or_G.couplings, complex), ls_or_G.kappas
    else:
        G, kap = np.atleast_2d(np.asarray(ls_or_G, complex)), np.asarray(kappas, float)
    parts = np.array([2.0 * np.outer(G[k].conj(), G[k]) / kap[k] for k in range(G.shape[0])])
    P = parts.sum(axis=0) if len(parts) else np.zeros((G.shape[1], G.shape[1]), complex)
    return P, parts


def bright_dark_split(g):
    """(bright, dark) coefficient vectors for one coupling row of length 2.

    bright = g/|g|; dark = (-conj(g_2), conj(g_1))/|g| so that g^* . dark = 0.
    For real g this is (g_1 b_1 + g_2 b_2)/|g| and (-g_2 b_1 + g_1 b_2)/|g|.
    """
    g = np.asarray(g, complex)
    if g.shape != (2,):
        raise ValueError("bright/dark split is defined for two mechanical modes")
    nrm = np.linalg.norm(g)
    if nrm == 0:
        raise ValueError("zero coupling vector has no bright mode")
    bright = g / nrm
    dark = np.array([-g[1].conj(), g[0].conj()]) / nrm
    return bright, dark


@dataclass(frozen=True)
class SchmidtBasis:
    vectors: np.ndarray  # (N, N) rows e_1..e_N
    rank: int
    used_rows: tuple  # coupling rows that contributed a new direction


def schmidt_basis(G, rtol: float = RANK_RTOL) -> SchmidtBasis:
    """Gram-Schmidt over the coupling rows in drive order (Hermitian inner product).

    e_j is orthogonal to g_1..g_{j-1}, so it stays dark until drive j is on.
    Rows that add no new direction are skipped and the rank reported; the
    basis is completed with the dark subspace of the accepted rows.
    """
    G = np.atleast_2d(np.asarray(G, complex))
    N = G.shape[1]
    scale = np.max(np.linalg.norm(G, axis=1), initial=0.0)
    vecs, used = [], []
    for k, g in enumerate(G):
        v = g.copy()
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for e in vecs:
                v = v - (e.conj() @ v) * e
        nrm = np.linalg.norm(v)
        if nrm > rtol * max(scale, np.finfo(float).tiny) and len(vecs) < N:
            vecs.append(v / nrm)
            used.append(k)
    rank = len(vecs)
    if rank < N:
        done = np.array(vecs) if vecs else np.zeros((0, N), complex)
        comp = dark_subspace(done.conj(), N).basis if rank else np.eye(N, dtype=complex)
        vecs.extend(list(comp))
    return SchmidtBasis(np.array(vecs), rank, tuple(used))


def two_mode_angle(g1, g2) -> float:
    """Cross angle in [0, pi/2] between two coupling vectors."""
    g1, g2 = np.asarray(g1, complex), np.asarray(g2, complex)
    c = abs(np.vdot(g1, g2)) / (np.linalg.norm(g1) * np.linalg.norm(g2))
    return float(np.arccos(min(c, 1.0)))


def reciprocal_vectors(G) -> np.ndarray:
    """Rows c_k with g_k^* . c_j = delta_kj, i.e. c_k = conj(column k of G^-1)."""
    G = np.asarray(G, complex)
    r = numerical_rank(G)
    if G.shape[0] != G.shape[1] or r < G.shape[0]:
        raise DependentRowsError(r, G.shape[0])
    return np.linalg.inv(G).conj().T


def coupling_angles(G) -> np.ndarray:
    """theta_k: angle between g_k and the span of the other rows, in (0, pi/2]."""
    G = np.asarray(G, complex)
    C = reciprocal_vectors(G)
    gn = np.linalg.norm(G, axis=1)
    cn = np.linalg.norm(C, axis=1)
    s = np.abs(np.sum(G.conj() * C, axis=1)) / (gn * cn)
    return np.arcsin(np.clip(s, 0.0, 1.0))


# -- parameter sweeps and exceptional points ----------------------------------

@dataclass
class Sweep:
    parameter: np.ndarray
    eigenvalues: np.ndarray  # (P, M+N), branch-matched
    photonic_weight: np.ndarray
    reports: list


def scale_couplings(ls: LinearizedSystem, total_strength: float) -> LinearizedSystem:
    """Rescale all rows by one common factor so that sum_k Gamma_k = total_strength."""
    G = np.asarray(ls.couplings, complex)
    current = float(np.sum(np.sum(np.abs(G) ** 2, axis=1) / ls.kappas))
    if current == 0:
        raise ValueError("cannot rescale a zero coupling matrix")
    return ls.with_couplings(G * np.sqrt(total_strength / current))


def sweep_strength(ls: LinearizedSystem, strengths, threads: int | None = None) -> Sweep:
    """Eigenvalues along a sweep of the total drive strength.

    Eigensolves run on a thread pool; branch matching is a sequential pass.
    """
    strengths = np.asarray(strengths, float)
    systems = [scale_couplings(ls, s) for s in strengths]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        eigs = list(pool.map(lambda x: np.linalg.eig(rwa_dynamical_matrix(x)), systems))
    reports, prev = [], None
    for s, x, (w, v) in zip(strengths, systems, eigs):
        rep = _report(w, v, ls.M, prev, x.couplings)
        if rep.ties:
            log.info("branch matching tie at strength %.6g: %s", s, rep.ties)
        reports.append(rep)
        prev = rep
    ev = np.array([r.eigenvalues for r in reports])
    wt = np.array([r.photonic_weight for r in reports])
    return Sweep(strengths, ev, wt, reports)


def min_pair_distance(H: np.ndarray):
    w = np.linalg.eigvals(H)
    d = np.abs(w[:, None] - w[None, :])
    d[np.diag_indices(len(w))] = np.inf
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return float(d[i, j]), (int(min(i, j)), int(max(i, j))), w


@dataclass(frozen=True)
class ExceptionalPoint:
    strength: float
    eigenvalue: complex
    distance: float
    branches: tuple

    def to_record(self) -> dict:
        return {"strength": self.strength, "eigenvalue_re": self.eigenvalue.real,
                "eigenvalue_im": self.eigenvalue.imag, "distance": self.distance,
                "branches": list(self.branches)}


def find_exceptional_points(ls: LinearizedSystem, strengths, threshold: float | None = None,
                            kappa_ref: float | None = None) -> list[ExceptionalPoint]:
    """Locate eigenvalue coalescences along a strength sweep.

    Local minima of the smallest pairwise eigenvalue distance on the grid are
    refined by bounded golden-section search in log-strength; a minimum counts
    as an exceptional point if the refined distance is below
    ``threshold`` (default 1e-6 * kappa_ref, kappa_ref defaulting to the first
    optical linewidth).
    """
    strengths = np.asarray(strengths, float)
    kref = float(ls.kappas[0]) if kappa_ref is None else kappa_ref
    thr = EP_THRESHOLD * kref if threshold is None else threshold

    def dist(logs):
        return min_pair_distance(rwa_dynamical_matrix(scale_couplings(ls, np.exp(logs))))[0]

    grid = np.log(strengths)
    ds = np.array([dist(x) for x in grid])
    eps = []
    for i in range(1, len(grid) - 1):
        if not (ds[i] <= ds[i - 1] and ds[i] <= ds[i + 1]):
            continue
        res = minimize_scalar(dist, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                              options={"xatol": 1e-15, "maxiter": 500})
        # the cusp |s - s*|^(1/2) is resolved better by a final golden pass
        res2 = minimize_scalar(dist, bracket=(grid[i - 1], res.x, grid[i + 1]), method="golden",
                               tol=1e-15) if grid[i - 1] < res.x < grid[i + 1] else res
        best = res2 if res2.fun < res.fun else res
        d, pair, w = min_pair_distance(rwa_dynamical_matrix(scale_couplings(ls, np.exp(best.x))))
        if d < thr:
            eps.append(ExceptionalPoint(float(np.exp(best.x)), complex((w[pair[0]] + w[pair[1]]) / 2),
                                        d, pair))
    return eps


def write_sweep_csv(path, sweep: Sweep) -> None:
    import csv

    n = sweep.eigenvalues.shape[1]
    header = ["strength"]
    for i in range(n):
        header += [f"re_{i + 1}", f"im_{i + 1}", f"photonic_{i + 1}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, ev, wt in zip(sweep.parameter, sweep.eigenvalues, sweep.photonic_weight):
            row = [p]
            for z, x in zip(ev, wt):
                row += [z.real, z.imag, x]
            w.writerow([f"{x:.17g}" for x in row])


def write_exceptional_points_json(path, eps) -> None:
    with open(path, "w") as fh:
        json.dump([e.to_record() for e in eps], fh, indent=2)


def damping_modes(P: np.ndarray):
    """Eigen-decomposition of the damping matrix, most damped first.

    Returns ``(rates, coefficients)``; row i of ``coefficients`` is the
    coefficient vector of the i-th mode, the conjugate of the eigenvector
    because P acts on mode amplitudes. Number-decay rates are twice ``rates``.
    """
    w, v = np.linalg.eigh(P)
    order = np.argsort(w)[::-1]
    return w[order], v[:, order].conj().T
