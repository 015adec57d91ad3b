"""Polynomial model of matrix coherent states on symmetric n x n matrices.

Wavefunctions are polynomials in the independent entries z_ij (i <= j) of a
symmetric matrix Z with values in a u(n)-module. Operators are sparse
matrices on (monomial, module) pairs, index = monomial * d + module.
The generator model is

    e_kl   -> E+_kl = sum_ab Z_ka Z_bl D_ab + sum_b (Z_kb U_lb + Z_lb U_kb)
    -f_kl  -> E-_kl = D_kl
    u_ij   -> EU_ij = sum_b Z_ib D_bj + U_ij

where D is the symmetric derivative matrix (2 d/dz_ii on the diagonal,
d/dz_ij off it) and U_ij are the module matrices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .numerics import BranchError, disc_quadrature, mat_exp, mat_log_principal
from .rep_theory import ModuleSpace
from .sp_algebra import AlgebraBasis, Realization, build_basis, structure_constants

CONTRACTION_MARGIN = 1e-6


class KernelDomainError(ValueError):
    pass


# ---------------------------------------------------------------- coordinates


@dataclass(frozen=True)
class SymCoord:
    Z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.Z, dtype=complex)
        if z.ndim != 2 or z.shape[0] != z.shape[1] or np.max(np.abs(z - z.T), initial=0.0) > 0:
            raise ValueError("coherent-state coordinates must be a symmetric square matrix")
        object.__setattr__(self, "Z", z)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @classmethod
    def from_entries(cls, n: int, values) -> "SymCoord":
        z = np.zeros((n, n), complex)
        for (i, j), v in zip(sym_pairs(n), values):
            z[i, j] = z[j, i] = v
        return cls(z)

    def conj(self) -> "SymCoord":
        return SymCoord(self.Z.conj())

    def radius(self) -> float:
        return float(np.max(np.linalg.svd(self.Z, compute_uv=False)))

    def is_contraction(self) -> bool:
        return self.radius() < 1 - CONTRACTION_MARGIN


def sym_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i, n)]


def random_contraction(n: int, rng: np.random.Generator, radius: float = 0.5) -> SymCoord:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a = a + a.T
    a *= radius * rng.random() / np.max(np.linalg.svd(a, compute_uv=False))
    return SymCoord(a)


# ---------------------------------------------------------------- polynomial space


class PolySpace:
    """Module-valued polynomials in the z_ij up to ``max_degree``."""

    def __init__(self, n: int, max_degree: int, u_mats: np.ndarray):
        self.n = n
        self.max_degree = max_degree
        self.pairs = sym_pairs(n)
        self.var = {p: k for k, p in enumerate(self.pairs)}
        for i, j in self.pairs:
            self.var[(j, i)] = self.var[(i, j)]
        nv = len(self.pairs)
        monos = [m for deg in range(max_degree + 1) for m in _exponents(nv, deg)]
        self.monomials = np.array(monos, dtype=np.int64).reshape(len(monos), nv)
        self.degree = self.monomials.sum(axis=1)
        self._radix = (max_degree + 1) ** np.arange(nv, dtype=np.int64)
        codes = self.monomials @ self._radix
        self._order = np.argsort(codes)
        self._codes = codes[self._order]
        self.u_mats = np.asarray(u_mats, dtype=complex)
        if self.u_mats.shape[:2] != (n, n):
            raise ValueError("module matrices must be indexed by (i, j) in 1..n")
        self.d = self.u_mats.shape[2]

    @property
    def n_monomials(self) -> int:
        return len(self.monomials)

    @property
    def dim(self) -> int:
        return self.n_monomials * self.d

    def _lookup(self, rows):
        return self._order[np.searchsorted(self._codes, rows @ self._radix)]

    def index(self, exponents, component: int = 0) -> int:
        return int(self._lookup(np.asarray([exponents]))[0]) * self.d + component

    def columns_up_to(self, degree: int) -> np.ndarray:
        mono = np.flatnonzero(self.degree <= degree)
        return (mono[:, None] * self.d + np.arange(self.d)[None, :]).ravel()

    # scalar (monomial-only) building blocks
    @cached_property
    def _mult(self) -> list[sp.csr_matrix]:
        out = []
        for v in range(len(self.pairs)):
            src = np.flatnonzero(self.degree < self.max_degree)
            rows = self.monomials[src].copy()
            rows[:, v] += 1
            out.append(sp.csr_matrix((np.ones(len(src)), (self._lookup(rows), src)), shape=(self.n_monomials,) * 2))
        return out

    @cached_property
    def _diff(self) -> list[sp.csr_matrix]:
        out = []
        for v in range(len(self.pairs)):
            src = np.flatnonzero(self.monomials[:, v] > 0)
            rows = self.monomials[src].copy()
            amp = rows[:, v].astype(float)
            rows[:, v] -= 1
            out.append(sp.csr_matrix((amp, (self._lookup(rows), src)), shape=(self.n_monomials,) * 2))
        return out

    def z(self, i: int, j: int) -> sp.csr_matrix:
        return self._mult[self.var[(i, j)]]

    def dz(self, i: int, j: int) -> sp.csr_matrix:
        """Entry (i, j) of the symmetric derivative matrix (0-based)."""
        m = self._diff[self.var[(i, j)]]
        return 2.0 * m if i == j else m

    def lift(self, scalar_op, module_op=None) -> sp.csr_matrix:
        mod = sp.identity(self.d, format="csr") if module_op is None else sp.csr_matrix(module_op)
        return sp.kron(scalar_op, mod, format="csr")

    # ---- generator models
    def lowering(self, i: int, j: int) -> sp.csr_matrix:
        return self.lift(self.dz(i, j))

    def u_action(self, i: int, j: int) -> sp.csr_matrix:
        n = self.n
        euler = sum(self.z(i, b) @ self.dz(b, j) for b in range(n))
        return (self.lift(euler) + self.lift(sp.identity(self.n_monomials, format="csr"), self.u_mats[i, j])).tocsr()

    def raising(self, k: int, l: int) -> sp.csr_matrix:
        n = self.n
        quad = sum(self.z(k, a) @ self.z(b, l) @ self.dz(a, b) for a in range(n) for b in range(n))
        out = self.lift(quad)
        for b in range(n):
            out = out + self.lift(self.z(k, b), self.u_mats[l, b]) + self.lift(self.z(l, b), self.u_mats[k, b])
        return out.tocsr()

    def generator_model(self, lab) -> sp.csr_matrix:
        kind = lab[0]
        if kind == "h":
            i = lab[1] - 1
            return self.u_action(i, i)
        if kind == "u":
            return self.u_action(lab[1] - 1, lab[2] - 1)
        if kind == "e":
            return self.raising(lab[1] - 1, lab[2] - 1)
        return -self.lowering(lab[1] - 1, lab[2] - 1)

    def model_realization(self, basis: AlgebraBasis | None = None) -> Realization:
        basis = basis or build_basis(self.n)
        return Realization(basis, [self.generator_model(lab) for lab in basis.labels], name=f"cs-model(n={self.n})", star="noncompact")

    # ---- wavefunctions
    def constant(self, vec) -> np.ndarray:
        out = np.zeros(self.dim, complex)
        out[: self.d] = vec
        return out

    def evaluate(self, coeffs: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Value at Z of each module component; ``coeffs`` may carry extra columns."""
        zs = np.array([Z[i, j] for i, j in self.pairs])
        vals = np.prod(zs[None, :] ** self.monomials, axis=1)
        c = np.asarray(coeffs).reshape(self.n_monomials, self.d, *np.shape(coeffs)[1:])
        return np.tensordot(vals, c, axes=(0, 0))


def _exponents(nv: int, deg: int):
    for combo in itertools.combinations_with_replacement(range(nv), deg):
        e = [0] * nv
        for c in combo:
            e[c] += 1
        yield tuple(e)


@dataclass(frozen=True)
class PolyWavefunction:
    space: PolySpace
    coeffs: np.ndarray

    def __call__(self, Z) -> np.ndarray:
        return self.space.evaluate(self.coeffs, np.asarray(Z, complex))

    def apply(self, op) -> "PolyWavefunction":
        return PolyWavefunction(self.space, op @ self.coeffs)

    def degree(self, tol: float = 0.0) -> int:
        c = np.abs(self.coeffs.reshape(self.space.n_monomials, self.space.d)).max(axis=1)
        nz = np.flatnonzero(c > tol)
        return int(self.space.degree[nz].max()) if len(nz) else -1


def poly_space(n: int, max_degree: int, module: ModuleSpace | None = None) -> PolySpace:
    u = np.zeros((n, n, 1, 1), complex) if module is None else module.u_matrices()
    return PolySpace(n, max_degree, u)


def scalar_u(n: int, c: float) -> np.ndarray:
    """Module matrices of the one-dimensional u(n)-module with U_ij = c delta_ij."""
    u = np.zeros((n, n, 1, 1), complex)
    for i in range(n):
        u[i, i, 0, 0] = c
    return u


# ---------------------------------------------------------------- operator checks


def homomorphism_residual(space: PolySpace, input_degree: int) -> float:
    """max |[a^, b^] - sum_k c_ab^k k^| on inputs of degree <= input_degree."""
    if space.max_degree < input_degree + 2:
        raise ValueError("polynomial space must exceed the input degree by two")
    basis = build_basis(space.n)
    sc = structure_constants(basis)
    models = [space.generator_model(lab) for lab in basis.labels]
    cols = space.columns_up_to(input_degree)
    restricted = [m[:, cols] for m in models]
    worst = 0.0
    for a in range(basis.dim):
        for b in range(a + 1, basis.dim):
            comm = models[a] @ restricted[b] - models[b] @ restricted[a]
            for k in np.flatnonzero(sc.tensor[a, b]):
                comm = comm - sc.tensor[a, b, k] * restricted[k]
            if comm.nnz:
                worst = max(worst, float(np.max(np.abs(comm.data))))
    return worst


# ---------------------------------------------------------------- kernel and states


def _check_domain(Zp: SymCoord, Zstar: SymCoord) -> np.ndarray:
    prod = Zp.Z @ Zstar.Z
    if np.max(np.abs(np.linalg.eigvals(prod)), initial=0.0) >= 1 - CONTRACTION_MARGIN:
        raise KernelDomainError("spectral radius of Z' Z* must stay below 1")
    return prod


def overlap_kernel(Zp: SymCoord, Zstar: SymCoord, u_mats: np.ndarray) -> np.ndarray:
    """exp(sum_ij B_ij U_ji) with B = -log(Id - Z' Z*)."""
    prod = _check_domain(Zp, Zstar)
    try:
        B = -mat_log_principal(np.eye(Zp.n) - prod)
    except BranchError as exc:
        raise KernelDomainError(str(exc)) from None
    gen = np.einsum("ij,jiab->ab", B, u_mats)
    return mat_exp(gen)


def scalar_kernel(Zp: SymCoord, Zstar: SymCoord, c: float) -> complex:
    """det(Id - Z' Z*)^(-c): the one-dimensional-module case in closed form."""
    prod = _check_domain(Zp, Zstar)
    return complex(np.exp(-c * np.log(np.linalg.det(np.eye(Zp.n) - prod) + 0j)))


def coherent_series(space: PolySpace, W: np.ndarray, vec, terms: int | None = None) -> np.ndarray:
    """Truncated exp(1/2 tr(W E+)) applied to the constant wavefunction ``vec``."""
    n = space.n
    gen = None
    for k in range(n):
        for l in range(n):
            if W[l, k] != 0:
                t = 0.5 * W[l, k] * space.raising(k, l)
                gen = t if gen is None else gen + t
    psi = space.constant(vec)
    out = psi.copy()
    if gen is None:
        return out
    term = psi
    for m in range(1, (terms or space.max_degree) + 1):
        term = gen @ term / m
        out = out + term
    return out


def fock_overlap_series(zp: complex, zstar: complex, flavours: int, terms: int = 60) -> complex:
    """<0| exp(zp A/2) exp(zstar A+/2) |0> for A+ = sum_s a_s+^2, summed over Fock levels.

    Level m of exp(z A+/2)|0> has squared norm |z|^(2m) (k/2)_m / m!, which is
    accumulated from explicit occupation-number amplitudes.
    """
    total = 0.0 + 0.0j
    for m in range(terms + 1):
        # sum over flavour distributions of m pairs: amplitude of |2m_1,...,2m_k>
        weight = 0.0
        for dist in _distributions(m, flavours):
            amp = 1.0
            for ms in dist:
                amp *= math.sqrt(math.factorial(2 * ms)) / (2**ms * math.factorial(ms))
            weight += amp * amp
        total += (zp * zstar) ** m * weight
    return total


def _distributions(m: int, k: int):
    if k == 1:
        yield (m,)
        return
    for first in range(m + 1):
        for rest in _distributions(m - first, k - 1):
            yield (first,) + rest


def fock_coherent_state(real: Realization, zstar: complex) -> np.ndarray:
    """exp(zstar e/2)|0> on a rank-one pair-creation realization, by Taylor sum."""
    e = real.generator(("e", 1, 1))
    v = np.zeros(real.dim, complex)
    v[0] = 1.0
    out, term = v.copy(), v
    for m in range(1, real.cutoff // 2 + 1):
        term = 0.5 * zstar * (e @ term) / m
        out = out + term
    return out


def kernel_gram(points: list[SymCoord], u_mats: np.ndarray) -> np.ndarray:
    d = u_mats.shape[2]
    N = len(points)
    G = np.zeros((N * d, N * d), complex)
    for a, za in enumerate(points):
        for b, zb in enumerate(points):
            G[a * d : (a + 1) * d, b * d : (b + 1) * d] = overlap_kernel(za, zb.conj(), u_mats)
    return G


# ---------------------------------------------------------------- resolution of identity


def resolution_density(Z: SymCoord, u_mats: np.ndarray, normalization: float) -> np.ndarray:
    """N * K(Z, Z*) / det(Id - Z Z*)^(n+1) with K the inverse of the overlap kernel."""
    if not Z.is_contraction():
        raise KernelDomainError("resolution density needs a strict contraction")
    n = Z.n
    kinv = overlap_kernel(Z, Z.conj(), u_mats)
    det = np.linalg.det(np.eye(n) - Z.Z @ Z.Z.conj()).real
    return normalization * np.linalg.inv(kinv) / det ** (n + 1)


@dataclass(frozen=True)
class ResolutionReport:
    c: float
    normalization: float
    matrix: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.matrix - np.eye(len(self.matrix)))))


def resolution_check(c: float, max_degree: int = 5, order: int = 16) -> ResolutionReport:
    """Rank-one resolution of identity on the orthonormal monomials.

    The monomial z^m has squared norm m!/(c)_m in the model; the coherent
    state (z| has components sqrt((c)_m/m!) conj(z)^m. The normalization
    constant is fixed by the degree-zero entry.
    """
    quad = disc_quadrature(order)
    u = scalar_u(1, c)
    dens = np.array([resolution_density(SymCoord(np.array([[z]])), u, 1.0)[0, 0].real for z in quad.nodes])
    norm = 1.0 / quad.integrate(dens).real
    m = np.arange(max_degree + 1)
    scale = np.sqrt(np.array([_poch(c, k) / math.factorial(k) for k in m]))
    comps = scale[:, None] * quad.nodes[None, :] ** m[:, None]
    mat = norm * (comps * (quad.weights * dens)[None, :]) @ comps.conj().T
    return ResolutionReport(c=c, normalization=norm, matrix=mat)


def _poch(c: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= c + j
    return out


# ---------------------------------------------------------------- symbols and Cayley states


def operator_symbol(op, space: PolySpace, Zp: SymCoord, Zstar: SymCoord) -> np.ndarray:
    """Matrix-valued symbol (Z'| O |Z*): O applied to the truncated coherent
    states with parameter Z* (one per module basis vector), evaluated at Z'."""
    _check_domain(Zp, Zstar)
    cols = np.column_stack([coherent_series(space, Zstar.Z, np.eye(space.d)[k]) for k in range(space.d)])
    img = op @ cols if op is not None else cols
    return space.evaluate(img, Zp.Z)


def gauge_trace_residual(symbol: np.ndarray, group_elements: list[np.ndarray]) -> float:
    base = np.trace(symbol)
    return max((abs(np.trace(g @ symbol @ np.linalg.inv(g)) - base) for g in group_elements), default=0.0)


def raising_combination(real: Realization, Z: np.ndarray):
    """1/2 tr(Z E+) in the given realization, E+ the symmetric matrix of raising generators."""
    n = real.basis.n
    out = None
    for k in range(n):
        for l in range(n):
            if Z[l, k] != 0:
                lab = ("e", min(k, l) + 1, max(k, l) + 1)
                t = 0.5 * Z[l, k] * real.generator(lab)
                out = t if out is None else out + t
    if out is None:
        out = sp.csr_matrix((real.dim, real.dim), dtype=complex)
    return out


def cayley_cs(Z: SymCoord, real: Realization, lowest: np.ndarray) -> np.ndarray:
    """Cayley state (Id + A/2)(Id - A/2)^-1 v with A = 1/2 tr(Z E+).

    The half scale makes it agree with exp(A) v up to third order in Z.
    On an infinite module the resolvent series in A is only asymptotic: with a
    truncated realization the result stabilizes for moderate cutoffs and then
    diverges once the cutoff is large compared with 1/|Z|.
    """
    A = raising_combination(real, Z.Z)
    A = sp.csc_matrix(A) if sp.issparse(A) else sp.csc_matrix(np.asarray(A))
    eye = sp.identity(real.dim, format="csc", dtype=complex)
    resolvent = (eye - 0.5 * A).tocsc()
    try:
        x = spla.spsolve(resolvent, lowest.astype(complex))
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"singular Cayley resolvent: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("singular Cayley resolvent")
    return np.asarray((eye + 0.5 * A) @ x).ravel()


def cayley_matrix(A: np.ndarray) -> np.ndarray:
    eye = np.eye(len(A))
    return (eye + A) @ np.linalg.inv(eye - A)


def exp_cs(Z: SymCoord, real: Realization, lowest: np.ndarray) -> np.ndarray:
    A = raising_combination(real, Z.Z)
    return spla.expm_multiply(sp.csc_matrix(A), lowest.astype(complex)) if sp.issparse(A) else mat_exp(np.asarray(A)) @ lowest
