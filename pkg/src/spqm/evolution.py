"""Group-valued time evolution h(t) with h' = -i H(t) h, h(t0) = Id.

Three integrators share one generator description: classical RK4 on the
matrix ODE, a stepwise Magnus integrator built from the Bernoulli series
for the logarithm, and Wei-Norman product coordinates in the adjoint
representation. Heisenberg and Schrodinger pictures, the drift of the
parabolic subalgebra and norm drift of non-unitary generators sit on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .numerics import commutator, mat_exp
from .sp_algebra import AlgebraElement, Realization, structure_constants

Term = Union[AlgebraElement, tuple]
BERNOULLI = (1.0, -0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0)
LOCAL_ERROR_LIMIT = 1e-6
BLOWUP_LIMIT = 1e6


class StepRejected(RuntimeError):
    pass


class ConvergenceGuard(ValueError):
    pass


class ChartError(RuntimeError):
    """The Wei-Norman frame became singular (edge of the coordinate chart)."""


class BlowUp(RuntimeError):
    pass


def constant(value: float) -> Callable[[float], float]:
    return lambda t: value


@dataclass
class GeneratorSpec:
    """H(t) = sum_i alpha_i(t) g_i with g_i a generator or a product of two."""

    terms: list[tuple[Callable[[float], complex], Term]]
    self_adjoint: bool = True

    @property
    def is_linear(self) -> bool:
        return all(isinstance(g, AlgebraElement) for _, g in self.terms)

    def basis(self):
        g = self.terms[0][1]
        return g.basis if isinstance(g, AlgebraElement) else g[0].basis

    def realized_terms(self, real: Realization) -> list:
        out = []
        for _, g in self.terms:
            if isinstance(g, AlgebraElement):
                out.append(real.matrix(g))
            else:
                m = real.matrix(g[0])
                for extra in g[1:]:
                    m = m @ real.matrix(extra)
                out.append(m)
        return out

    def element(self, t: float) -> AlgebraElement:
        if not self.is_linear:
            raise ValueError("quadratic generator has no algebra coordinates")
        out = self.basis().zero()
        for alpha, g in self.terms:
            out = out + g * alpha(t)
        return out

    def coefficients(self, t: float) -> np.ndarray:
        return np.array([alpha(t) for alpha, _ in self.terms], dtype=complex)


class _Hamiltonian:
    """Cached realized terms; evaluates H(t) as a dense or sparse matrix."""

    def __init__(self, spec: GeneratorSpec, real: Realization, tol: float = 1e-10):
        self.spec, self.real = spec, real
        terms = spec.realized_terms(real)
        self.sparse = any(sp.issparse(m) for m in terms)
        self.terms = [sp.csr_matrix(m) if self.sparse else np.asarray(m, complex) for m in terms]
        if spec.self_adjoint:
            probe = self(0.37)
            diff = probe - probe.conj().T
            err = np.max(np.abs(diff.data if sp.issparse(diff) else diff), initial=0.0)
            if err > tol:
                raise ValueError(f"generator flagged self-adjoint is not Hermitian here (residual {err:.2e})")

    def __call__(self, t: float):
        c = self.spec.coefficients(t)
        out = c[0] * self.terms[0]
        for a, m in zip(c[1:], self.terms[1:]):
            out = out + a * m
        return out

    def dense(self, t: float) -> np.ndarray:
        m = self(t)
        return m.toarray() if sp.issparse(m) else m


@dataclass
class EvolutionPath:
    times: np.ndarray
    mats: list[np.ndarray]
    method: str
    realization: Realization
    spec: GeneratorSpec
    defects: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.defects is None:
            self.defects = np.zeros(len(self.times))

    def unitarity_drift(self) -> float:
        eye = np.eye(self.mats[0].shape[0])
        return max(float(np.max(np.abs(h.conj().T @ h - eye))) for h in self.mats)

    def final(self) -> np.ndarray:
        return self.mats[-1]


def _polar(h: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(h)
    return u @ vh


# ---------------------------------------------------------------- RK4


def _rk4_step(H: _Hamiltonian, t: float, dt: float, h: np.ndarray) -> np.ndarray:
    f = lambda s, y: -1j * (H(s) @ y)
    k1 = f(t, h)
    k2 = f(t + dt / 2, h + dt / 2 * k1)
    k3 = f(t + dt / 2, h + dt / 2 * k2)
    k4 = f(t + dt, h + dt * k3)
    return h + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance(H: _Hamiltonian, t0: float, t1: float, h: np.ndarray, substeps: int, depth: int = 0) -> np.ndarray:
    dt = (t1 - t0) / substeps
    out = h
    for k in range(substeps):
        s = t0 + k * dt
        full = _rk4_step(H, s, dt, out)
        half = _rk4_step(H, s + dt / 2, dt / 2, _rk4_step(H, s, dt / 2, out))
        err = float(np.max(np.abs(full - half))) / 15.0
        if err > LOCAL_ERROR_LIMIT:
            if depth >= 12:
                raise StepRejected(f"local error {err:.2e} at t={s:.4g} after refinement")
            half = _advance(H, s, s + dt, out, 2, depth + 1)
        out = half
    return out


def evolve_ode(spec: GeneratorSpec, grid: Sequence[float], real: Realization, substeps: int = 8) -> EvolutionPath:
    """RK4 (step-doubling controlled) on the dense group matrix."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    H = _Hamiltonian(spec, real)
    h = np.eye(real.dim, dtype=complex)
    mats, defects = [h], [0.0]
    for t0, t1 in zip(grid[:-1], grid[1:]):
        h = _advance(H, t0, t1, h, substeps)
        if spec.self_adjoint:
            h = _polar(h)
        if np.max(np.abs(h)) > BLOWUP_LIMIT:
            raise BlowUp(f"group matrix exceeds {BLOWUP_LIMIT:g} at t={t1:.4g}")
        mats.append(h)
        # defect of the ODE from a centred difference of the last two nodes
        mid = 0.5 * (t0 + t1)
        dh = (mats[-1] - mats[-2]) / (t1 - t0)
        hm = 0.5 * (mats[-1] + mats[-2])
        defects.append(float(np.max(np.abs(dh + 1j * (H(mid) @ hm)))))
    return EvolutionPath(grid, mats, "ode", real, spec, np.array(defects))


# ---------------------------------------------------------------- Magnus


def _dexpinv(omega: np.ndarray, a: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros_like(a)
    term = a
    for k in range(order):
        if k > 0:
            term = commutator(omega, term)
        if BERNOULLI[k] != 0.0:
            out = out + BERNOULLI[k] / math.factorial(k) * term
    return out


def magnus_step(H: _Hamiltonian, t0: float, t1: float, order: int, rtol: float = 1e-13, atol: float = 1e-15) -> np.ndarray:
    """Omega for one step: Omega' = sum_{k<order} B_k/k! ad_Omega^k A(t), A = -iH."""
    d = H.real.dim

    def rhs(t, w):
        return _dexpinv(w.reshape(d, d), -1j * H.dense(t), order).ravel()

    sol = solve_ivp(rhs, (t0, t1), np.zeros(d * d, complex), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1].reshape(d, d)


def _norm_integral(H: _Hamiltonian, t0: float, t1: float, points: int = 9) -> float:
    x, w = np.polynomial.legendre.leggauss(points)
    s = 0.5 * (t1 - t0) * (x + 1) + t0
    return float(0.5 * (t1 - t0) * sum(wi * np.linalg.norm(H.dense(si), 2) for wi, si in zip(w, s)))


def magnus_expand(spec: GeneratorSpec, t: float, order: int, real: Realization, steps: int = 1, t0: float = 0.0) -> np.ndarray:
    """exp(Omega) over [t0, t] from the truncated Magnus series, split into ``steps`` pieces."""
    if not 1 <= order <= 4:
        raise ValueError("Magnus order must be between 1 and 4")
    H = _Hamiltonian(spec, real)
    edges = np.linspace(t0, t, steps + 1)
    h = np.eye(real.dim, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        if _norm_integral(H, a, b) >= math.pi:
            raise ConvergenceGuard(f"integral of |H| over [{a:.4g}, {b:.4g}] reaches pi")
        h = mat_exp(magnus_step(H, a, b, order)) @ h
    return h


def magnus_path(spec: GeneratorSpec, grid: Sequence[float], order: int, real: Realization, steps_per_interval: int = 1) -> EvolutionPath:
    grid = np.asarray(grid, dtype=float)
    H = _Hamiltonian(spec, real)
    h = np.eye(real.dim, dtype=complex)
    mats = [h]
    for a, b in zip(grid[:-1], grid[1:]):
        edges = np.linspace(a, b, steps_per_interval + 1)
        for u, v in zip(edges[:-1], edges[1:]):
            if _norm_integral(H, u, v) >= math.pi:
                raise ConvergenceGuard(f"integral of |H| over [{u:.4g}, {v:.4g}] reaches pi")
            h = mat_exp(magnus_step(H, u, v, order)) @ h
        mats.append(h)
    return EvolutionPath(grid, mats, f"magnus{order}", real, spec)


# ---------------------------------------------------------------- Wei-Norman


def default_ordering(basis) -> list[int]:
    return basis.label_set("z_plus") + basis.label_set("u") + basis.label_set("z_minus")


@dataclass
class WeiNormanCoords:
    ordering: list[int]
    times: np.ndarray
    gammas: np.ndarray  # len(times) x len(ordering)
    max_condition: float

    def reconstruct(self, real: Realization, k: int = -1) -> np.ndarray:
        h = np.eye(real.dim, dtype=complex)
        for idx, g in zip(self.ordering, self.gammas[k]):
            if g != 0:
                m = real.mats[idx]
                m = m.toarray() if sp.issparse(m) else m
                h = h @ mat_exp(-1j * g * m)
        return h


def wei_norman(spec: GeneratorSpec, grid: Sequence[float], ordering: Sequence[int] | None = None, max_condition: float = 1e10, rtol: float = 1e-12, atol: float = 1e-14) -> WeiNormanCoords:
    """Coordinates of h(t) = prod_i exp(-i gamma_i g_i) along the given order.

    Differentiating the product gives sum_i gamma_i' Ad(prefix_i) g_i = H(t);
    the frame columns Ad(prefix_i) g_i are computed in the adjoint
    representation and the linear system is integrated with DOP853.
    """
    basis = spec.basis()
    order = list(ordering) if ordering is not None else default_ordering(basis)
    if sorted(order) != list(range(basis.dim)):
        raise ValueError("Wei-Norman ordering must list every basis generator once")
    ad = structure_constants(basis).ad_basis()
    ad_ord = [ad[i] for i in order]
    unit = np.eye(basis.dim)
    worst = [1.0]

    def rhs(t, gam):
        cols = []
        prefix = np.eye(basis.dim, dtype=complex)
        for k, idx in enumerate(order):
            cols.append(prefix @ unit[idx])
            if gam[k] != 0:
                prefix = prefix @ mat_exp(-1j * gam[k] * ad_ord[k])
        frame = np.column_stack(cols)
        cond = np.linalg.cond(frame)
        worst[0] = max(worst[0], cond)
        if not np.isfinite(cond) or cond > max_condition:
            raise ChartError(f"Wei-Norman frame singular at t={t:.4g} (condition {cond:.2e})")
        return np.linalg.solve(frame, spec.element(t).coeffs)

    grid = np.asarray(grid, dtype=float)
    sol = solve_ivp(rhs, (grid[0], grid[-1]), np.zeros(basis.dim, complex), t_eval=grid, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    out = sol.y.T
    return WeiNormanCoords(order, grid, np.array(out), worst[0])


# ---------------------------------------------------------------- pictures


def _as_matrix(x, real: Realization) -> np.ndarray:
    if isinstance(x, AlgebraElement):
        return real.dense(x)
    return np.asarray(x.toarray() if sp.issparse(x) else x, dtype=complex)


@dataclass
class HeisenbergTrajectory:
    times: np.ndarray
    values: list[np.ndarray]
    derivatives: list[np.ndarray]
    hamiltonians: list[np.ndarray]

    def finite_difference_defect(self) -> float:
        """Centred difference of x(t) against the analytic derivative i[H~, x]."""
        worst = 0.0
        t = self.times
        for k in range(1, len(t) - 1):
            fd = (self.values[k + 1] - self.values[k - 1]) / (t[k + 1] - t[k - 1])
            worst = max(worst, float(np.max(np.abs(fd - self.derivatives[k]))))
        return worst

    def second_order_defect(self) -> float:
        """max |x'' + ad_H~^2 x| with x'' from a centred second difference."""
        worst = 0.0
        t = self.times
        for k in range(1, len(t) - 1):
            dt = t[k + 1] - t[k]
            fd2 = (self.values[k + 1] - 2 * self.values[k] + self.values[k - 1]) / dt**2
            H = self.hamiltonians[k]
            x = self.values[k]
            ad2 = commutator(H, commutator(H, x))
            worst = max(worst, float(np.max(np.abs(fd2 + ad2))))
        return worst


def heisenberg_evolve(x, path: EvolutionPath) -> HeisenbergTrajectory:
    """x(t) = h(t)^-1 x h(t), its derivative i[H~(t), x(t)] with H~ = h^-1 H h."""
    real = path.realization
    X = _as_matrix(x, real)
    H = _Hamiltonian(path.spec, real)
    vals, ders, hams = [], [], []
    for t, h in zip(path.times, path.mats):
        hinv = np.linalg.inv(h)
        xt = hinv @ X @ h
        ht = hinv @ H.dense(t) @ h
        vals.append(xt)
        hams.append(ht)
        ders.append(1j * commutator(ht, xt))
    return HeisenbergTrajectory(path.times, vals, ders, hams)


def gauge_commutators(x, path: EvolutionPath) -> tuple[float, float]:
    """(|[x', x]|, |[[x', x], x]|) maximized along the path, x' = i[H~, x]."""
    traj = heisenberg_evolve(x, path)
    first = second = 0.0
    for xt, dx in zip(traj.values, traj.derivatives):
        c = commutator(dx, xt)
        first = max(first, float(np.max(np.abs(c))))
        second = max(second, float(np.max(np.abs(commutator(c, xt)))))
    return first, second


def schrodinger_evolve(psi, spec: GeneratorSpec, grid: Sequence[float], model: Realization, substeps: int = 8, tail_tol: float = 1e-12):
    """Integrate dPsi/dt = -i H Psi for a coefficient vector (polynomial model or realization).

    Returns (trajectory, truncation defect). When the model is a polynomial
    space, the defect is the largest coefficient reaching the top degree;
    exceeding ``tail_tol`` there means truncation was active.
    """
    from .coherent_states import PolySpace, PolyWavefunction

    H = _Hamiltonian(spec, model)
    space = psi.space if isinstance(psi, PolyWavefunction) else None
    v = np.asarray(psi.coeffs if space is not None else psi, dtype=complex)
    grid = np.asarray(grid, dtype=float)
    out = [v]
    top = None
    if isinstance(space, PolySpace):
        top = (np.flatnonzero(space.degree == space.max_degree)[:, None] * space.d + np.arange(space.d)).ravel()
    defect = 0.0
    for t0, t1 in zip(grid[:-1], grid[1:]):
        v = _advance(H, t0, t1, v.reshape(-1, 1), substeps).ravel()
        if top is not None:
            defect = max(defect, float(np.max(np.abs(v[top]), initial=0.0)))
            if defect > tail_tol:
                raise OverflowError(f"wavefunction reached the degree cap {space.max_degree} (tail {defect:.2e})")
        out.append(v)
    if space is not None:
        return [PolyWavefunction(space, c) for c in out], defect
    return out, defect


# ---------------------------------------------------------------- parabolic drift and norm probes


@dataclass
class DriftReport:
    times: np.ndarray
    leakage: np.ndarray

    @property
    def max_leakage(self) -> float:
        return float(np.max(self.leakage))


def parabolic_drift(path: EvolutionPath) -> DriftReport:
    """Z+ component of h p h^-1 for every parabolic generator p, maximized."""
    real = path.realization
    basis = real.basis
    zp = basis.label_set("z_plus")
    parab = basis.label_set("parabolic")
    leak = []
    for h in path.mats:
        hinv = np.linalg.inv(h)
        worst = 0.0
        for k in parab:
            m = real.mats[k]
            m = m.toarray() if sp.issparse(m) else m
            c = real.decompose(h @ m @ hinv).coeffs
            worst = max(worst, float(np.linalg.norm(c[zp])))
        leak.append(worst)
    return DriftReport(path.times, np.array(leak))


@dataclass
class NormDrift:
    times: np.ndarray
    norms: np.ndarray

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0])))

    def initial_rate(self) -> float:
        """d<phi|phi>/dt at the first node from a quadratic fit of the first three points."""
        t, y = self.times[:3], self.norms[:3]
        return float(np.polyfit(t - t[0], y, 2)[1])


def nonunitary_probe(spec: GeneratorSpec, grid: Sequence[float], real: Realization, vacuum: np.ndarray, substeps: int = 8) -> NormDrift:
    H = _Hamiltonian(spec, real)
    v = np.asarray(vacuum, dtype=complex).reshape(-1, 1)
    grid = np.asarray(grid, dtype=float)
    norms = [float(np.vdot(v, v).real)]
    for t0, t1 in zip(grid[:-1], grid[1:]):
        v = _advance(H, t0, t1, v, substeps)
        nv = float(np.vdot(v, v).real)
        if nv > BLOWUP_LIMIT**2:
            raise BlowUp(f"state norm exceeds {BLOWUP_LIMIT:g} at t={t1:.4g}")
        norms.append(nv)
    return NormDrift(grid, np.array(norms))
