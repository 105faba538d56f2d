"""Second-moment (Lyapunov) dynamics of the linearized optomechanical system.

The state is the set of all second moments of the fluctuation operators,

    Baa[k', k] = <a_k'^dag a_k>      Hermitian, M x M
    Bbb[j', j] = <b_j'^dag b_j>      Hermitian, N x N
    Saa[k', k] = <a_k' a_k>          symmetric, M x M
    Sbb[j', j] = <b_j' b_j>          symmetric, N x N
    X[k, j]    = <a_k^dag b_j>       M x N
    Y[k, j]    = <a_k b_j>           M x N

packed into a real vector of length M^2 + N^2 + M(M+1) + N(N+1) + 4MN. The
packing order is fixed (golden files depend on it):

* Hermitian blocks: diagonal (real), then the strict upper triangle in
  row-major order as (re, im) pairs;
* symmetric blocks: upper triangle including the diagonal, row-major,
  (re, im) pairs;
* rectangular blocks: row-major (re, im) pairs;

with blocks in the order Baa, Bbb, Saa, Sbb, X, Y. Only independent entries
are stored, so Hermiticity and symmetry hold exactly for every packed vector,
including each RK4 stage.

No rotating-wave approximation is made here: the <aa>, <bb> and <ab>
families and their couplings are all kept. Optical baths are at zero
temperature.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import lapack

from .linearize import LinearizedSystem
from .model import NumericalError

RCOND_MIN = 1e-14
RESIDUAL_MAX = 1e-10
RK4_STABILITY = 2.7


class StabilityError(NumericalError):
    """Drift matrix is singular or too ill-conditioned (undamped dark mode, parametric instability)."""


class StepSizeError(NumericalError):
    pass


class NormalizationError(ValueError):
    pass


def moment_dimension(M: int, N: int) -> int:
    return M * M + N * N + M * (M + 1) + N * (N + 1) + 4 * M * N


@dataclass(frozen=True)
class _Layout:
    M: int
    N: int
    D: int
    # per block: (offset, n_rows, n_cols, kind)
    blocks: tuple


@functools.lru_cache(maxsize=64)
def _layout(M: int, N: int) -> _Layout:
    specs = [("Baa", M, M, "herm"), ("Bbb", N, N, "herm"), ("Saa", M, M, "sym"),
             ("Sbb", N, N, "sym"), ("X", M, N, "rect"), ("Y", M, N, "rect")]
    blocks = []
    off = 0
    for name, r, c, kind in specs:
        if kind == "herm":
            size = r * r
        elif kind == "sym":
            size = r * (r + 1)
        else:
            size = 2 * r * c
        blocks.append((name, off, r, c, kind))
        off += size
    return _Layout(M, N, off, tuple(blocks))


def _unpack_block(v, off, r, c, kind):
    batch = v.shape[:-1]
    out = np.zeros(batch + (r, c), dtype=complex)
    if kind == "herm":
        d = np.arange(r)
        out[..., d, d] = v[..., off:off + r]
        iu, ju = np.triu_indices(r, 1)
        p = off + r
        vals = v[..., p:p + 2 * len(iu):2] + 1j * v[..., p + 1:p + 2 * len(iu):2]
        out[..., iu, ju] = vals
        out[..., ju, iu] = vals.conj()
    elif kind == "sym":
        iu, ju = np.triu_indices(r)
        vals = v[..., off:off + 2 * len(iu):2] + 1j * v[..., off + 1:off + 2 * len(iu):2]
        out[..., iu, ju] = vals
        out[..., ju, iu] = vals
    else:
        n = r * c
        vals = v[..., off:off + 2 * n:2] + 1j * v[..., off + 1:off + 2 * n:2]
        out[...] = vals.reshape(batch + (r, c))
    return out


def _pack_block(out, blk, off, r, c, kind):
    if kind == "herm":
        d = np.arange(r)
        out[..., off:off + r] = blk[..., d, d].real
        iu, ju = np.triu_indices(r, 1)
        p = off + r
        vals = blk[..., iu, ju]
    elif kind == "sym":
        iu, ju = np.triu_indices(r)
        p = off
        vals = blk[..., iu, ju]
    else:
        p = off
        vals = blk.reshape(blk.shape[:-2] + (r * c,))
    out[..., p:p + 2 * vals.shape[-1]:2] = vals.real
    out[..., p + 1:p + 2 * vals.shape[-1]:2] = vals.imag


def unpack(v: np.ndarray, M: int, N: int) -> dict:
    """Packed real vector(s) -> dict of complex blocks (leading batch axes allowed)."""
    lay = _layout(M, N)
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != lay.D:
        raise ValueError(f"expected length {lay.D} for M={M}, N={N}, got {v.shape[-1]}")
    return {name: _unpack_block(v, off, r, c, kind) for name, off, r, c, kind in lay.blocks}


def pack(blocks: dict, M: int, N: int) -> np.ndarray:
    lay = _layout(M, N)
    batch = np.shape(blocks["Bbb"])[:-2]
    out = np.zeros(batch + (lay.D,))
    for name, off, r, c, kind in lay.blocks:
        _pack_block(out, np.asarray(blocks[name], dtype=complex), off, r, c, kind)
    return out


@dataclass(frozen=True)
class MomentState:
    """All second moments, stored packed; block accessors return complex matrices."""

    vector: np.ndarray
    M: int
    N: int

    def blocks(self) -> dict:
        return unpack(self.vector, self.M, self.N)

    @property
    def bdag_b(self) -> np.ndarray:
        return self.blocks()["Bbb"]

    @property
    def adag_a(self) -> np.ndarray:
        return self.blocks()["Baa"]

    @classmethod
    def from_blocks(cls, M, N, **blocks) -> "MomentState":
        full = {
            "Baa": np.zeros((M, M), complex), "Bbb": np.zeros((N, N), complex),
            "Saa": np.zeros((M, M), complex), "Sbb": np.zeros((N, N), complex),
            "X": np.zeros((M, N), complex), "Y": np.zeros((M, N), complex),
        }
        full.update(blocks)
        return cls(pack(full, M, N), M, N)

    @classmethod
    def thermal(cls, M: int, N: int, n_th) -> "MomentState":
        """Uncorrelated mechanical modes at occupancy n_th, optical vacuum."""
        n = np.broadcast_to(np.asarray(n_th, dtype=float), (N,))
        return cls.from_blocks(M, N, Bbb=np.diag(n).astype(complex))


@dataclass(frozen=True)
class MomentGenerator:
    """dm/dt = A m + c for the packed moment vector m."""

    A: np.ndarray
    c: np.ndarray
    M: int
    N: int

    @property
    def D(self) -> int:
        return self.A.shape[0]


def moment_derivatives(blocks: dict, ls: LinearizedSystem, n_th: float, source: bool = True) -> dict:
    """Time derivatives of every moment block.

    Works on batched blocks (leading axes). With ``source=False`` the
    constant terms (thermal input and the -i g_kj commutator term in <a b>)
    are dropped, leaving the homogeneous part.
    """
    G = np.asarray(ls.couplings, dtype=complex)
    Gc, GT, GH = G.conj(), G.T, G.conj().T
    delta, kap = np.asarray(ls.detunings, float), np.asarray(ls.kappas, float)
    om, gam = np.asarray(ls.omegas, float), np.asarray(ls.gammas, float)

    Baa, Bbb, Saa, Sbb, X, Y = (blocks[k] for k in ("Baa", "Bbb", "Saa", "Sbb", "X", "Y"))
    XH = np.conj(np.swapaxes(X, -1, -2))
    YH = np.conj(np.swapaxes(Y, -1, -2))
    XT = np.swapaxes(X, -1, -2)
    YT = np.swapaxes(Y, -1, -2)
    Xc, Yc = np.conj(X), np.conj(Y)

    # <b_j'^dag b_j>
    rate_bb = 1j * om[:, None] - 1j * om[None, :] - (gam[:, None] + gam[None, :]) / 2
    dBbb = rate_bb * Bbb - 1j * (XH @ Gc + YH @ G) + 1j * (GH @ Y + GT @ X)

    # <b_j' b_j>
    rate_sbb = -1j * om[:, None] - 1j * om[None, :] - (gam[:, None] + gam[None, :]) / 2
    dSbb = rate_sbb * Sbb - 1j * (YT @ Gc + XT @ G) - 1j * (GH @ Y + GT @ X)

    # <a_k'^dag a_k>
    rate_aa = 1j * delta[:, None] - 1j * delta[None, :] - (kap[:, None] + kap[None, :]) / 2
    dBaa = rate_aa * Baa - 1j * (X + Yc) @ GT + 1j * Gc @ np.swapaxes(Y + Xc, -1, -2)

    # <a_k' a_k>
    rate_saa = -1j * delta[:, None] - 1j * delta[None, :] - (kap[:, None] + kap[None, :]) / 2
    dSaa = rate_saa * Saa - 1j * (Y + Xc) @ GT - 1j * G @ np.swapaxes(Y + Xc, -1, -2)

    # <a_k^dag b_j>
    rate_x = 1j * delta[:, None] - 1j * om[None, :] - (gam[None, :] + kap[:, None]) / 2
    dX = rate_x * X - 1j * (Baa @ Gc + np.conj(Saa) @ G) + 1j * Gc @ (Sbb + Bbb)

    # <a_k b_j>
    rate_y = -1j * delta[:, None] - 1j * om[None, :] - (gam[None, :] + kap[:, None]) / 2
    dY = rate_y * Y - 1j * (Saa @ Gc + np.swapaxes(Baa, -1, -2) @ G) - 1j * G @ (Sbb + Bbb)

    if source:
        dBbb = dBbb + np.diag(gam * n_th)
        dY = dY - 1j * G
    return {"Baa": dBaa, "Bbb": dBbb, "Saa": dSaa, "Sbb": dSbb, "X": dX, "Y": dY}


def build_generator(ls: LinearizedSystem, n_th: float) -> MomentGenerator:
    """Assemble the real drift matrix A and source c column by column."""
    M, N = ls.M, ls.N
    D = moment_dimension(M, N)
    basis = unpack(np.eye(D), M, N)
    A = pack(moment_derivatives(basis, ls, n_th, source=False), M, N).T
    zero = unpack(np.zeros(D), M, N)
    c = pack(moment_derivatives(zero, ls, n_th, source=True), M, N)
    return MomentGenerator(np.ascontiguousarray(A), c, M, N)


def steady_state_moments(gen: MomentGenerator, rcond_min: float = RCOND_MIN) -> MomentState:
    """Solve A m + c = 0 by LU with a condition estimate.

    Raises
    ------
    StabilityError
        If the reciprocal condition number falls below ``rcond_min`` or the
        solution residual exceeds 1e-10 relative.
    """
    A, c = gen.A, gen.c
    lu, piv, info = lapack.dgetrf(A)
    if info > 0:
        raise StabilityError("drift matrix is exactly singular (undamped mode?)")
    anorm = np.linalg.norm(A, 1)
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    if rcond < rcond_min:
        raise StabilityError(f"drift matrix ill-conditioned, rcond={rcond:.2e}")
    m, info = lapack.dgetrs(lu, piv, -c)
    r = A @ m + c
    cn = np.linalg.norm(c)
    if cn > 0:
        # one step of iterative refinement
        dm, _ = lapack.dgetrs(lu, piv, -r)
        m = m + dm
        r = A @ m + c
        if np.linalg.norm(r) / cn > RESIDUAL_MAX:
            raise StabilityError(f"steady-state residual {np.linalg.norm(r) / cn:.2e} too large")
    return MomentState(m, gen.M, gen.N)


def default_time_step(ls: LinearizedSystem) -> float:
    rates = np.concatenate([np.abs(ls.kappas), np.abs(ls.omegas), np.abs(ls.detunings)])
    return 0.01 / float(rates.max())


def rk4_propagator(A: np.ndarray, c: np.ndarray, dt: float):
    """One classic RK4 step for the affine system m' = A m + c, as m -> R m + r.

    For linear autonomous dynamics the four stages collapse to a matrix
    polynomial; applying (R, r) is arithmetically the same as evaluating
    k1..k4.
    """
    D = A.shape[0]
    hA = dt * A
    I = np.eye(D)
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    R = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    r = dt * (c + hA @ c / 2 + hA2 @ c / 6 + hA3 @ c / 24)
    return R, r


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    vectors: np.ndarray  # (T, D)
    M: int
    N: int

    def state(self, i: int) -> MomentState:
        return MomentState(self.vectors[i], self.M, self.N)

    def phonon_numbers(self) -> np.ndarray:
        """(T, N) array of <b_j^dag b_j>."""
        lay = _layout(self.M, self.N)
        off = lay.blocks[1][1]
        return self.vectors[:, off:off + self.N]

    def total_phonons(self) -> np.ndarray:
        return self.phonon_numbers().sum(axis=1)


def evolve_moments(
    gen: MomentGenerator,
    m0: MomentState,
    t_end: float,
    dt: float,
    record_every: int = 1,
) -> Trajectory:
    """Classic fourth-order Runge-Kutta integration from ``m0`` up to ``t_end``.

    States are recorded every ``record_every`` steps (and at t=0). The step is
    checked against ||A||_2 * dt < 2.7 before integrating.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    norm = np.linalg.norm(gen.A, 2)
    if norm * dt >= RK4_STABILITY:
        raise StepSizeError(f"||A||*dt = {norm * dt:.3g} exceeds the RK4 bound {RK4_STABILITY}")
    n_steps = int(round(t_end / dt))
    R, r = rk4_propagator(gen.A, gen.c, dt)
    # stride propagator: m -> R^s m + (R^{s-1} + ... + 1) r
    Rs, rs = np.eye(gen.D), np.zeros(gen.D)
    for _ in range(record_every):
        Rs, rs = R @ Rs, R @ rs + r
    n_rec = n_steps // record_every
    out = np.empty((n_rec + 1, gen.D))
    out[0] = m0.vector
    m = np.array(m0.vector, dtype=float)
    ref = max(np.linalg.norm(m), 1.0)
    for i in range(1, n_rec + 1):
        m = Rs @ m + rs
        out[i] = m
        if not np.all(np.isfinite(m)) or np.linalg.norm(m) > 1e12 * ref:
            raise StepSizeError(f"RK4 trajectory diverged at t={i * record_every * dt:.4g}")
    times = dt * record_every * np.arange(n_rec + 1)
    return Trajectory(times, out, gen.M, gen.N)


def phonon_numbers(m: MomentState):
    """Occupations n_j = Re <b_j^dag b_j> and their sum."""
    n = np.real(np.diag(m.bdag_b))
    return n, float(n.sum())


def hybrid_occupancy(m: MomentState, e, tol: float = 1e-12) -> float:
    """Occupation of b~ = sum_j e_j b_j, i.e. e^dag <b^dag b> e with <b_j'^dag b_j> ordering."""
    e = np.asarray(e, dtype=complex)
    if abs(np.linalg.norm(e) - 1.0) > tol:
        raise NormalizationError(f"coefficient vector has norm {np.linalg.norm(e):.15g}, expected 1")
    return float(np.real(e.conj() @ m.bdag_b @ e))


def write_trajectory_csv(path, traj: Trajectory, blocks: Iterable[str] = ()) -> None:
    """CSV with columns t, n_1..n_N, n_tot and optional flattened moment blocks."""
    blocks = tuple(blocks)
    n = traj.phonon_numbers()
    header = ["t"] + [f"n_{j + 1}" for j in range(traj.N)] + ["n_tot"]
    extra = []
    for name in blocks:
        blk = unpack(traj.vectors, traj.M, traj.N)[name]
        r, c = blk.shape[-2:]
        for i in range(r):
            for j in range(c):
                header += [f"{name}_{i + 1}_{j + 1}_re", f"{name}_{i + 1}_{j + 1}_im"]
        extra.append(blk.reshape(len(traj.times), -1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(len(traj.times)):
            row = [traj.times[t], *n[t], n[t].sum()]
            for blk in extra:
                for z in blk[t]:
                    row += [z.real, z.imag]
            w.writerow([f"{x:.17g}" for x in row])


def first_moment_drift(ls: LinearizedSystem) -> np.ndarray:
    """Drift of the operator vector (a, b, a^dag, b^dag); the moments are stable iff it is."""
    M, N = ls.M, ls.N
    G = np.asarray(ls.couplings, complex)
    S = M + N
    X = np.zeros((2 * S, 2 * S), complex)
    ia, ib = np.arange(M), M + np.arange(N)
    X[ia, ia] = -1j * ls.detunings - ls.kappas / 2
    X[ib, ib] = -1j * ls.omegas - ls.gammas / 2
    # a_k' = ... - i sum_j g_kj (b_j + b_j^dag)
    X[np.ix_(ia, ib)] = -1j * G
    X[np.ix_(ia, S + ib)] = -1j * G
    # b_j' = ... - i sum_k (g_kj a_k^dag + conj(g_kj) a_k)
    X[np.ix_(ib, ia)] = -1j * G.conj().T
    X[np.ix_(ib, S + ia)] = -1j * G.T
    X[S:, S:] = X[:S, :S].conj()
    X[S:, :S] = X[:S, S:].conj()
    return X


def stability_margin(ls: LinearizedSystem) -> float:
    """Largest real part of the first-moment drift eigenvalues; negative means stable."""
    return float(np.max(np.linalg.eigvals(first_moment_drift(ls)).real))


def steady_state(ls: LinearizedSystem, n_th: float, check_stability: bool = True) -> MomentState:
    """Steady moments of ``ls`` with bath occupancy ``n_th``.

    Raises
    ------
    StabilityError
        If some fluctuation mode grows (the stationary solution of the
        moment equations would be unphysical) or the solve is ill-conditioned.
    """
    if check_stability:
        margin = stability_margin(ls)
        if margin >= 0:
            raise StabilityError(f"linearized dynamics unstable (growth rate {margin:.3e})")
    return steady_state_moments(build_generator(ls, n_th))


def fit_double_exponential(times, values, baseline: float, rates_guess=None):
    """Fit values - baseline = A exp(-r1 t) + B exp(-r2 t) with r1 >= r2.

    Returns ``(r1, r2, A, B)``. The default starting point takes the slow
    rate from the log-slope over the second half of the window and the fast
    rate as ten times that.
    """
    from scipy.optimize import curve_fit

    t = np.asarray(times, float)
    y = np.asarray(values, float) - baseline
    if rates_guess is None:
        h = len(t) // 2
        with np.errstate(divide="ignore", invalid="ignore"):
            slow = -(np.log(abs(y[-1])) - np.log(abs(y[h]))) / (t[-1] - t[h])
        slow = slow if np.isfinite(slow) and slow > 0 else 1.0 / (t[-1] - t[0])
        rates_guess = (10 * slow, slow)
    p0 = [y[0] / 2, rates_guess[0], y[0] / 2, rates_guess[1]]

    def model(t, A, r1, B, r2):
        return A * np.exp(-r1 * t) + B * np.exp(-r2 * t)

    p, _ = curve_fit(model, t, y, p0=p0, maxfev=20000)
    A, r1, B, r2 = p
    if r1 < r2:
        A, r1, B, r2 = B, r2, A, r1
    return float(r1), float(r2), float(A), float(B)
