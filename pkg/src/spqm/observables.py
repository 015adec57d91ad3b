"""Expectation-value geometry, phase-space operators and the classical
(matrix Hamilton / Boltzmann) dynamics derived from them.

Time conventions. The bracket {a, b} = <[A, iB]> fixes the Heisenberg rule
X' = [X, iH]; under it, expectations in a fixed state move as if the state
evolved by exp(+iHt). ``ehrenfest_flow`` and ``mode_expansion_flow`` follow
that rule. ``boltzmann_flow`` applies the same rule to the density operator
itself, rho' = [rho, iH], which is the ordinary Schrodinger picture
psi(t) = exp(-iHt) psi for pure states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.sparse.linalg import expm_multiply

from .coherent_states import KernelDomainError, PolyWavefunction, SymCoord, resolution_density
from .involutions import j_element
from .numerics import disc_quadrature, mat_exp
from .rep_theory import (
    build_fock,
    build_metaplectic,
    product_vector,
    tensor_realization,
)
from .sp_algebra import (
    AlgebraBasis,
    AlgebraElement,
    Realization,
    killing_matrix,
    structure_constants,
)


class ZeroNormState(ValueError):
    pass


class IncompleteBasis(ValueError):
    pass


class PositivityLoss(RuntimeError):
    pass


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def _expect(op, psi: np.ndarray) -> complex:
    return complex(np.vdot(psi, op @ psi))


def _norm2(psi: np.ndarray) -> float:
    nn = float(np.vdot(psi, psi).real)
    if nn <= 1e-300:
        raise ZeroNormState("state has zero norm")
    return nn


def _gen(real: Realization, lab):
    return real.mats[real.basis.index[lab]]


def _e(i: int, j: int):
    i, j = min(i, j), max(i, j)
    return ("e", i, j)


def _f(i: int, j: int):
    i, j = min(i, j), max(i, j)
    return ("f", i, j)


# ---------------------------------------------------------------- expected geometry


@dataclass(frozen=True)
class PreGeometry:
    """Operator content of the pre-geometry for a given signature.

    ``E_ij`` with i < j is rho(e_ij); with i > j it is rho(e_ji^+), the
    algebraic adjoint. Indices are 1-based in the dictionaries.
    """

    signature: tuple[int, int]
    E: object
    E_i: dict
    E_minus: dict
    E_ij: dict
    J: object


def pre_geometry(real: Realization, state: np.ndarray | None = None) -> PreGeometry:
    n = real.basis.n
    E_i = {i: _gen(real, ("e", i, i)) for i in range(1, n + 1)}
    E_minus = {i: _gen(real, ("f", i, i)) for i in range(1, n + 1)}
    E_ij = {}
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i < j:
                E_ij[(i, j)] = _gen(real, _e(i, j))
            elif i > j:
                E_ij[(i, j)] = _gen(real, _f(j, i))
    ident = sp.identity(real.dim, dtype=complex, format="csr") if real.sparse else np.eye(real.dim, dtype=complex)
    sig = vev_metric(state, real).signature if state is not None else (n, 0)
    return PreGeometry(sig, ident, E_i, E_minus, E_ij, real.matrix(j_element(real.basis)))


@dataclass(frozen=True)
class GeometryVEV:
    eta: np.ndarray
    omega: np.ndarray
    jvev: complex
    raw: np.ndarray
    weights: np.ndarray
    scale: float
    norm: float

    @property
    def signature(self) -> tuple[int, int]:
        ev = np.linalg.eigvalsh(self.eta)
        return int(np.sum(ev > 1e-9)), int(np.sum(ev < -1e-9))

    @property
    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.raw - self.raw.T)))


def _omega(state: np.ndarray, real: Realization, nn: float) -> np.ndarray:
    n = real.basis.n
    om = np.zeros((n, n), complex)
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            v = (_expect(_gen(real, _e(i, j)), state) - _expect(_gen(real, _f(i, j)), state)) / nn
            om[i - 1, j - 1], om[j - 1, i - 1] = v, -v
    return om


def vev_metric(state: np.ndarray, real: Realization, scale: float | None = None) -> GeometryVEV:
    """Anticommutator expectations <{e_i, e_j^+}>/<psi|psi> and their normalization.

    For a state annihilated by every lowering generator with Cartan weight
    lambda, the raw matrix equals -4 diag(lambda). ``eta`` divides by -4 s,
    s being the mean |lambda_i| (or ``scale`` when given), and keeps the
    real symmetric part.
    """
    psi = np.asarray(state, complex)
    nn = _norm2(psi)
    n = real.basis.n
    E = [_gen(real, ("e", i, i)) for i in range(1, n + 1)]
    F = [_gen(real, ("f", i, i)) for i in range(1, n + 1)]
    Epsi = [e @ psi for e in E]
    Fpsi = [f @ psi for f in F]
    Epsi_dag = [e.conj().T @ psi for e in E]
    Fpsi_dag = [f.conj().T @ psi for f in F]
    raw = np.zeros((n, n), complex)
    for i in range(n):
        for j in range(n):
            # <psi| e_i f_j + f_j e_i |psi>
            raw[i, j] = (np.vdot(Epsi_dag[i], Fpsi[j]) + np.vdot(Fpsi_dag[j], Epsi[i])) / nn
    weights = np.array([_expect(_gen(real, ("h", i)), psi) / nn for i in range(1, n + 1)])
    s = float(np.mean(np.abs(weights))) if scale is None else float(scale)
    if s <= 0:
        raise ZeroNormState("state has vanishing Cartan weight scale")
    sym = 0.5 * (raw + raw.T).real
    eta = sym / (-4.0 * s)
    jv = _expect(real.matrix(j_element(real.basis)), psi) / nn
    return GeometryVEV(eta=eta, omega=_omega(psi, real, nn), jvev=jv, raw=raw, weights=weights, scale=s, norm=nn)


def vev_symplectic(state: np.ndarray, real: Realization) -> np.ndarray:
    """Omega_ij = <E_ij - E_ji> with E_ji (j > i) the adjoint generator."""
    psi = np.asarray(state, complex)
    return _omega(psi, real, _norm2(psi))


def expectation_wedge(state: np.ndarray, real: Realization) -> np.ndarray:
    """<E_i><E_-j> - <E_j><E_-i>, the product-of-expectations competitor to Omega."""
    psi = np.asarray(state, complex)
    nn = _norm2(psi)
    n = real.basis.n
    e = np.array([_expect(_gen(real, ("e", i, i)), psi) / nn for i in range(1, n + 1)])
    f = np.array([_expect(_gen(real, ("f", i, i)), psi) / nn for i in range(1, n + 1)])
    return np.outer(e, f) - np.outer(f, e).T


# ---------------------------------------------------------------- signature (3, 1) ground state


@dataclass(frozen=True)
class GroundState:
    realization: Realization
    vector: np.ndarray
    weight: tuple


def lorentzian_ground_state(cutoff: int = 4) -> GroundState:
    """Lowest-weight vector of weight (1/2, 1/2, 1/2, -1/2).

    Built in oscillator (x) metaplectic: the oscillator factor carries one
    quantum in the fourth negative mode, the metaplectic factor is its vacuum.
    Every lowering generator kills the product, so <{e_i, e_j^+}> is
    diagonal with one sign flipped.
    """
    js = build_fock(4, cutoff, 1)
    mp = build_metaplectic(4, cutoff, 1)
    occ = [0] * 8
    occ[js.mode(-4)] = 1
    a = np.zeros(js.dim, complex)
    a[js.fock.index_of(occ)] = 1.0
    b = np.zeros(mp.dim, complex)
    b[mp.fock.index_of([0] * 4)] = 1.0
    return GroundState(tensor_realization(js, mp), product_vector(a, b), (0.5, 0.5, 0.5, -0.5))


# ---------------------------------------------------------------- phase-space operators


@dataclass(frozen=True)
class PhaseSpaceOps:
    """n x n arrays (lists of lists) of realization matrices."""

    n: int
    Q: list
    Pi: list
    M: list
    A: list

    @staticmethod
    def _combine(X, Y):
        return [[X[i][j] + Y[i][j] for j in range(len(X))] for i in range(len(X))]

    @cached_property
    def Q_int(self) -> list:
        return self._combine(self.Q, self.M)

    @cached_property
    def Pi_int(self) -> list:
        return self._combine(self.Pi, self.A)

    def hermiticity(self) -> dict:
        """Max residual of Q^+ = Q, Pi^+ = -Pi, M^+ = M, A^+ = -A, each operator entry adjointed in place."""

        def res(X, sign):
            worst = 0.0
            for i in range(self.n):
                for j in range(self.n):
                    d = _dense(X[i][j]).conj().T - sign * _dense(X[i][j])
                    worst = max(worst, float(np.max(np.abs(d), initial=0.0)))
            return worst

        return {"Q": res(self.Q, 1), "Pi": res(self.Pi, -1), "M": res(self.M, 1), "A": res(self.A, -1)}


def build_phase_ops(basis: AlgebraBasis, real: Realization) -> PhaseSpaceOps:
    if real.basis.n != basis.n:
        raise ValueError("basis and realization ranks differ")
    n = basis.n
    zero = real.matrix(basis.zero())
    Q = [[None] * n for _ in range(n)]
    Pi = [[None] * n for _ in range(n)]
    M = [[None] * n for _ in range(n)]
    A = [[None] * n for _ in range(n)]
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            e, f = _gen(real, _e(i, j)), _gen(real, _f(i, j))
            Q[i - 1][j - 1] = 0.5 * (e + f)
            Pi[i - 1][j - 1] = 0.5 * (e - f)
            if i == j:
                M[i - 1][j - 1] = _gen(real, ("h", i))
                A[i - 1][j - 1] = zero
            else:
                uij, uji = _gen(real, ("u", i, j)), _gen(real, ("u", j, i))
                M[i - 1][j - 1] = 0.5 * (uij + uji)
                A[i - 1][j - 1] = 0.5 * (uij - uji)
    return PhaseSpaceOps(n, Q, Pi, M, A)


def _adjoint(X: list) -> list:
    n = len(X)
    return [[X[j][i].conj().T for j in range(n)] for i in range(n)]


def _anti(X: list, Y: list) -> list:
    n = len(X)
    return [
        [sum(X[i][k] @ Y[k][j] + Y[i][k] @ X[k][j] for k in range(n)) for j in range(n)]
        for i in range(n)
    ]


def stress_energy(ops: PhaseSpaceOps) -> list:
    """T_ij = 1/2 ({P, P^+} + {Q, Q^+})_ij with the interaction combinations."""
    Q, P = ops.Q_int, ops.Pi_int
    aq, ap = _anti(Q, _adjoint(Q)), _anti(P, _adjoint(P))
    return [[0.5 * (ap[i][j] + aq[i][j]) for j in range(ops.n)] for i in range(ops.n)]


def trace_operator(T: list):
    return sum(T[i][i] for i in range(len(T)))


def blockwise_selfadjoint_residual(T: list) -> float:
    n = len(T)
    return max(float(np.max(np.abs(_dense(T[j][i]).conj().T - _dense(T[i][j])), initial=0.0)) for i in range(n) for j in range(n))


# ---------------------------------------------------------------- classical bracket and Ehrenfest flow


def classical_bracket(A, B, state: np.ndarray) -> complex:
    """<psi|[A, iB]|psi> / <psi|psi>."""
    psi = np.asarray(state, complex)
    nn = _norm2(psi)
    Ap, Bp = A @ psi, B @ psi
    return complex(1j * (np.vdot(psi, A @ Bp) - np.vdot(psi, B @ Ap)) / nn)


def _bracket_matrix(X: list, H, psi: np.ndarray) -> np.ndarray:
    n = len(X)
    return np.array([[classical_bracket(X[i][j], H, psi) for j in range(n)] for i in range(n)])


def _expect_matrix(X: list, psi: np.ndarray, nn: float) -> np.ndarray:
    n = len(X)
    return np.array([[_expect(X[i][j], psi) / nn for j in range(n)] for i in range(n)])


def heisenberg_states(H, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """States exp(+iHt) psi0 on an equispaced grid, rows indexed by time."""
    times = np.asarray(times, float)
    dt = np.diff(times)
    if len(times) > 2 and np.max(np.abs(dt - dt[0])) > 1e-12 * max(1.0, abs(times[-1])):
        raise ValueError("grid must be equispaced")
    Hs = sp.csr_matrix(H) if not sp.issparse(H) else H.tocsr()
    out = expm_multiply(1j * Hs, np.asarray(psi0, complex), start=times[0], stop=times[-1], num=len(times), endpoint=True)
    return np.atleast_2d(out)


def _integrate(rate: np.ndarray, times: np.ndarray) -> np.ndarray:
    re = cumulative_simpson(rate.real, x=times, axis=0, initial=0)
    im = cumulative_simpson(rate.imag, x=times, axis=0, initial=0)
    return re + 1j * im


@dataclass(frozen=True)
class EhrenfestTrajectory:
    times: np.ndarray
    q: np.ndarray
    pi: np.ndarray
    q_rate: np.ndarray
    pi_rate: np.ndarray
    q_flow: np.ndarray
    pi_flow: np.ndarray
    energy: np.ndarray

    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def flow_defect(self) -> float:
        """Integrated bracket flow vs direct quantum expectations."""
        return float(max(np.max(np.abs(self.q_flow - self.q)), np.max(np.abs(self.pi_flow - self.pi))))

    def _fd(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = self.times[1] - self.times[0]
        d = (x[:-4] - 8 * x[1:-3] + 8 * x[3:-1] - x[4:]) / (12 * h)
        return d, slice(2, -2)

    def ehrenfest_defect(self) -> float:
        """Five-point d<Pi>/dt vs {pi, H} at interior grid points."""
        dq, s = self._fd(self.q)
        dp, _ = self._fd(self.pi)
        return float(max(np.max(np.abs(dp - self.pi_rate[s])), np.max(np.abs(dq - self.q_rate[s]))))


def ehrenfest_flow(ops: PhaseSpaceOps, H, state: np.ndarray, grid: Sequence[float], tol: float = 1e-6) -> EhrenfestTrajectory:
    """Matrix Hamilton equations dq/dt = {q, H}, dpi/dt = {pi, H} for the
    interaction operators, driven by brackets evaluated along the quantum
    trajectory and integrated with composite Simpson; the result is compared
    with the direct expectations and ``tol`` bounds the mismatch.
    """
    times = np.asarray(grid, float)
    psi0 = np.asarray(state, complex)
    nn = _norm2(psi0)
    states = heisenberg_states(H, psi0, times)
    Q, P = ops.Q_int, ops.Pi_int
    q = np.array([_expect_matrix(Q, s, nn) for s in states])
    pi = np.array([_expect_matrix(P, s, nn) for s in states])
    qr = np.array([_bracket_matrix(Q, H, s) for s in states])
    pr = np.array([_bracket_matrix(P, H, s) for s in states])
    energy = np.array([_expect(H, s).real / nn for s in states])
    q_flow = q[0] + _integrate(qr, times)
    pi_flow = pi[0] + _integrate(pr, times)
    traj = EhrenfestTrajectory(times, q, pi, qr, pr, q_flow, pi_flow, energy)
    if traj.flow_defect() > tol * max(1.0, float(np.max(np.abs(q))), float(np.max(np.abs(pi)))):
        raise RuntimeError(f"bracket flow departs from quantum expectations by {traj.flow_defect():.3e}; refine the grid")
    return traj


# ---------------------------------------------------------------- eigenmode expansion


@dataclass(frozen=True)
class ModeExpansion:
    times: np.ndarray
    coeffs: np.ndarray  # time x modes
    energies: np.ndarray
    modes: np.ndarray

    def norm_drift(self) -> float:
        nrm = np.sum(np.abs(self.coeffs) ** 2, axis=1)
        return float(np.max(np.abs(nrm - nrm[0])))


def mode_expansion_flow(c0, V, T, grid: Sequence[float], basis_tol: float = 1e-10, rtol: float = 1e-12, atol: float = 1e-14) -> ModeExpansion:
    """Coefficients c_k of Psi = sum c_k psi_k in the eigenbasis psi_k of T
    under dc/dt = i V_I(t) c, (V_I)_kl = exp(-i t E_k) V_kl exp(i t E_l).

    Interaction picture Psi = exp(-itT) psi for psi' = i(T + V) psi.
    """
    Td, Vd = _dense(T), _dense(V)
    energies, modes = np.linalg.eigh(0.5 * (Td + Td.conj().T))
    defect = np.max(np.abs(modes.conj().T @ modes - np.eye(len(energies))))
    if defect > basis_tol or np.max(np.abs(Td - Td.conj().T)) > basis_tol * max(1.0, np.max(np.abs(Td))):
        raise IncompleteBasis(f"T does not admit a complete orthonormal eigenbasis (defect {defect:.2e})")
    Vm = modes.conj().T @ Vd @ modes
    times = np.asarray(grid, float)

    def rhs(t, c):
        ph = np.exp(-1j * t * energies)
        return 1j * ph * (Vm @ (ph.conj() * c))

    c0 = np.asarray(c0, complex)
    sol = solve_ivp(rhs, (times[0], times[-1]), c0, t_eval=times, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return ModeExpansion(times, sol.y.T, energies, modes)


def two_level_closed_form(E: Sequence[float], coupling: complex, c0, t: float) -> np.ndarray:
    """Interaction-picture amplitudes for T = diag(E), V = [[0, g], [g*, 0]]."""
    e1, e2 = E
    g = complex(coupling)
    mean, half = 0.5 * (e1 + e2), 0.5 * (e1 - e2)
    w = math.sqrt(half**2 + abs(g) ** 2)
    H = np.array([[e1, g], [g.conjugate(), e2]])
    if w == 0.0:
        U = np.exp(1j * mean * t) * np.eye(2)
    else:
        U = np.exp(1j * mean * t) * (math.cos(w * t) * np.eye(2) + 1j * math.sin(w * t) / w * (H - mean * np.eye(2)))
    back = np.diag(np.exp(-1j * t * np.array([e1, e2])))
    return back @ U @ np.asarray(c0, complex)


# ---------------------------------------------------------------- density operators


@dataclass(frozen=True)
class DensityState:
    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, complex)
        if abs(np.trace(r) - 1) > 1e-10:
            raise ValueError("density operator must have unit trace")
        if np.max(np.abs(r - r.conj().T)) > 1e-10:
            raise ValueError("density operator must be Hermitian")
        if np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() < -1e-10:
            raise ValueError("density operator must be positive semidefinite")

    @classmethod
    def pure(cls, psi) -> "DensityState":
        v = np.asarray(psi, complex)
        v = v / math.sqrt(_norm2(v))
        return cls(np.outer(v, v.conj()))


@dataclass(frozen=True)
class BoltzmannTrajectory:
    times: np.ndarray
    rho: np.ndarray
    f: np.ndarray
    min_eig: np.ndarray

    def trace_drift(self) -> float:
        tr = np.trace(self.rho, axis1=1, axis2=2)
        return float(np.max(np.abs(tr - 1.0)))

    def fidelity(self, states: np.ndarray) -> np.ndarray:
        s = np.asarray(states, complex)
        s = s / np.linalg.norm(s, axis=1, keepdims=True)
        return np.einsum("ti,tij,tj->t", s.conj(), self.rho, s).real


def boltzmann_flow(rho0: DensityState, H, grid: Sequence[float], positivity_tol: float = 1e-8, rtol: float = 1e-12, atol: float = 1e-14) -> BoltzmannTrajectory:
    """drho/dt = [rho, iH]; f = tr drho/dt is reported at every grid time."""
    Hd = _dense(H)
    d = Hd.shape[0]
    times = np.asarray(grid, float)

    def deriv(r):
        return 1j * (r @ Hd - Hd @ r)

    def rhs(t, y):
        return deriv(y.reshape(d, d)).ravel()

    sol = solve_ivp(rhs, (times[0], times[-1]), np.asarray(rho0.rho, complex).ravel(), t_eval=times, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    rho = sol.y.T.reshape(len(times), d, d)
    f = np.array([np.trace(deriv(r)) for r in rho])
    mins = np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for r in rho])
    if mins.min() < -positivity_tol:
        raise PositivityLoss(f"density operator lost positivity ({mins.min():.2e})")
    return BoltzmannTrajectory(times, rho, f, mins)


# ---------------------------------------------------------------- Lagrangian density


def adjoint_flow(x: AlgebraElement, H: AlgebraElement, times: Sequence[float]) -> np.ndarray:
    """Coefficients of x(t) solving x' = [x, iH] (rows indexed by time)."""
    ad = structure_constants(x.basis).ad(H)
    return np.array([mat_exp(-1j * t * ad) @ x.coeffs for t in np.asarray(times, float)])


def lagrangian_density(traj: np.ndarray, times: Sequence[float], H: AlgebraElement, B: np.ndarray | None = None) -> np.ndarray:
    """1/2 B(D_t x, (D_t x)^+) along a sampled trajectory, D_t = d/dt + ad(iH).

    Derivatives use fourth-order differences on the (equispaced) grid, with
    one-sided stencils at the two ends of each side.
    """
    xs = np.asarray(traj, complex)
    t = np.asarray(times, float)
    if len(t) < 5:
        raise ValueError("need at least five samples")
    basis = H.basis
    Bm = killing_matrix(basis.n) if B is None else B
    ad = structure_constants(basis).ad(H)
    h = t[1] - t[0]
    dx = np.empty_like(xs)
    dx[2:-2] = (xs[:-4] - 8 * xs[1:-3] + 8 * xs[3:-1] - xs[4:]) / (12 * h)
    for k in (0, 1):
        dx[k] = (-25 * xs[k] + 48 * xs[k + 1] - 36 * xs[k + 2] + 16 * xs[k + 3] - 3 * xs[k + 4]) / (12 * h)
        m = len(t) - 1 - k
        dx[m] = (25 * xs[m] - 48 * xs[m - 1] + 36 * xs[m - 2] - 16 * xs[m - 3] + 3 * xs[m - 4]) / (12 * h)
    y = dx + 1j * xs @ ad.T
    perm = basis.dagger_perm()
    ydag = np.empty_like(y)
    ydag[:, perm] = y.conj()
    return 0.5 * np.einsum("ta,ab,tb->t", y, Bm, ydag).real


# ---------------------------------------------------------------- number density (rank one)


def number_density(psiA: PolyWavefunction, psiB: PolyWavefunction, order: int | None = None) -> complex:
    """Disc integral of psiA^+ P psiB with the resolution density of the
    scalar module (U = c Id); needs c > 1."""
    space = psiA.space
    if space is not psiB.space and (space.n, space.max_degree) != (psiB.space.n, psiB.space.max_degree):
        raise ValueError("wavefunctions live on different spaces")
    if space.n != 1:
        raise ValueError("number density is evaluated on the rank-one disc")
    if space.d != 1:
        raise ValueError("number density needs the scalar module")
    c = float(space.u_mats[0, 0, 0, 0].real)
    if c <= 1:
        raise ValueError("measure is normalizable only for c > 1")
    if order is None:
        order = max(4, space.max_degree + math.ceil(c) + 2)
    quad = disc_quadrature(order)
    norm = (c - 1) / math.pi
    vals = []
    for z in quad.nodes:
        Z = SymCoord(np.array([[z]]))
        if not Z.is_contraction():
            raise KernelDomainError("quadrature node outside the disc")
        dens = resolution_density(Z, space.u_mats, norm)
        a, b = psiA(Z.Z), psiB(Z.Z)
        vals.append(np.vdot(a, dens @ b))
    return quad.integrate(vals)
