"""Oscillator realizations, weight bookkeeping and lowest-weight u(n) modules."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .sp_algebra import (
    AlgebraElement,
    Realization,
    build_basis,
    label_bilinear,
    structure_constants,
)


class RealizationError(ValueError):
    pass


class CutoffTooSmall(ValueError):
    pass


# ---------------------------------------------------------------- bosonic Fock space


class FockSpace:
    """Occupation-number basis of ``n_modes`` bosons with total occupation <= cutoff."""

    def __init__(self, n_modes: int, cutoff: int):
        self.n_modes = n_modes
        self.cutoff = cutoff
        base = cutoff + 1
        if base ** n_modes >= 2**62:
            raise ValueError("Fock space too large for integer state codes")
        states = [s for s in _compositions(n_modes, cutoff)]
        states.sort(key=lambda s: (sum(s), tuple(-v for v in s)))
        self.states = np.array(states, dtype=np.int64).reshape(len(states), n_modes)
        self.total = self.states.sum(axis=1)
        self._radix = base ** np.arange(n_modes, dtype=np.int64)
        codes = self.states @ self._radix
        self._order = np.argsort(codes)
        self._sorted_codes = codes[self._order]

    @property
    def dim(self) -> int:
        return len(self.states)

    def lookup(self, rows: np.ndarray) -> np.ndarray:
        codes = rows @ self._radix
        pos = np.searchsorted(self._sorted_codes, codes)
        return self._order[pos]

    def index_of(self, occ: Sequence[int]) -> int:
        return int(self.lookup(np.asarray([occ], dtype=np.int64))[0])

    def _op(self, src, rows, amp):
        return sp.csr_matrix((amp, (self.lookup(rows), src)), shape=(self.dim, self.dim), dtype=complex)

    def annihilation(self, m: int) -> sp.csr_matrix:
        src = np.flatnonzero(self.states[:, m] > 0)
        rows = self.states[src].copy()
        amp = np.sqrt(rows[:, m].astype(float))
        rows[:, m] -= 1
        return self._op(src, rows, amp)

    def creation(self, m: int) -> sp.csr_matrix:
        """Truncated creation operator (states at the cutoff are mapped to zero)."""
        src = np.flatnonzero(self.total < self.cutoff)
        rows = self.states[src].copy()
        rows[:, m] += 1
        return self._op(src, rows, np.sqrt(rows[:, m].astype(float)))

    def hop(self, p: int, q: int) -> sp.csr_matrix:
        """c_p^dagger c_q, exact on the truncated space (occupation preserving)."""
        if p == q:
            return sp.diags(self.states[:, p].astype(complex), format="csr")
        src = np.flatnonzero(self.states[:, q] > 0)
        rows = self.states[src].copy()
        amp = np.sqrt(rows[:, q].astype(float))
        rows[:, q] -= 1
        rows[:, p] += 1
        amp = amp * np.sqrt(rows[:, p].astype(float))
        return self._op(src, rows, amp)

    def pair_creation(self, p: int, q: int) -> sp.csr_matrix:
        src = np.flatnonzero(self.total <= self.cutoff - 2)
        rows = self.states[src].copy()
        rows[:, q] += 1
        amp = np.sqrt(rows[:, q].astype(float))
        rows[:, p] += 1
        amp = amp * np.sqrt(rows[:, p].astype(float))
        return self._op(src, rows, amp)

    def pair_annihilation(self, p: int, q: int) -> sp.csr_matrix:
        return self.pair_creation(p, q).conj().T.tocsr()

    def interior(self, margin: int = 2) -> np.ndarray:
        return np.flatnonzero(self.total <= self.cutoff - margin)


def _compositions(m: int, total: int):
    if m == 0:
        yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(m - 1, total - first):
            yield (first,) + rest


class FockRealization(Realization):
    """Bilinear (number conserving) realization on 2n modes per flavour.

    Each generator is scale * sum_flavour c_{alpha,beta} with the mode
    bilinear written through creation/annihilation operators. Mode order
    within a flavour is (+1..+n, -1..-n).
    """

    def __init__(self, n: int, cutoff: int, flavours: int = 1):
        if cutoff < 4:
            raise CutoffTooSmall("cutoff must be at least 4")
        basis = build_basis(n)
        self.n, self.cutoff, self.flavours = n, cutoff, flavours
        self.fock = FockSpace(2 * n * flavours, cutoff)
        mats = []
        for lab in basis.labels:
            a, b, s = label_bilinear(lab)
            mats.append(s * self.bilinear(a, b))
        super().__init__(basis, mats, name=f"fock(n={n}, cutoff={cutoff}, flavours={flavours})", star="compact")

    def mode(self, alpha: int, flavour: int = 0) -> int:
        n = self.n
        local = alpha - 1 if alpha > 0 else n - alpha - 1
        return flavour * 2 * n + local

    def annihilator(self, alpha: int, flavour: int = 0):
        return self.fock.annihilation(self.mode(alpha, flavour))

    def creator(self, alpha: int, flavour: int = 0):
        return self.fock.creation(self.mode(alpha, flavour))

    def bilinear(self, alpha: int, beta: int) -> sp.csr_matrix:
        sigma = np.sign(alpha) * np.sign(beta)
        out = None
        for s in range(self.flavours):
            term = self.fock.hop(self.mode(alpha, s), self.mode(beta, s)) - sigma * self.fock.hop(
                self.mode(-beta, s), self.mode(-alpha, s)
            )
            out = term if out is None else out + term
        return (out / math.sqrt(1.0 + (alpha == -beta))).tocsr()

    def lowest_weight_for(self, partition) -> tuple:
        mu = _pad(partition, self.n)
        if sum(1 for v in mu if v != 0) > self.flavours:
            raise CutoffTooSmall("partition has more rows than flavours")
        return tuple(-v for v in mu)

    def interior(self) -> np.ndarray:
        return self.fock.interior(2)


class MetaplecticRealization(Realization):
    """Pair-creation realization on n modes per flavour (k flavours).

    e_ij = sum_s a+_is a+_js, e_ij^+ = -sum_s a_is a_js, u_ij = sum_s a+_is a_js
    plus k/2 on the diagonal. The unitary structure is the noncompact one:
    rho(e)^dagger = -rho(e^+). Pair creation is truncated at the cutoff, so
    relations hold on states with total occupation <= cutoff - 2.
    """

    def __init__(self, n: int, cutoff: int, flavours: int = 1):
        if cutoff < 4:
            raise CutoffTooSmall("cutoff must be at least 4")
        basis = build_basis(n)
        self.n, self.cutoff, self.flavours = n, cutoff, flavours
        self.fock = FockSpace(n * flavours, cutoff)
        eye = sp.identity(self.fock.dim, dtype=complex, format="csr")
        mats = []
        for lab in basis.labels:
            kind = lab[0]
            if kind == "h":
                i = lab[1]
                m = self._sum(lambda s: self.fock.hop(self.mode(i, s), self.mode(i, s))) + 0.5 * flavours * eye
            elif kind == "u":
                i, j = lab[1:]
                m = self._sum(lambda s: self.fock.hop(self.mode(i, s), self.mode(j, s)))
            elif kind == "e":
                i, j = lab[1:]
                m = self._sum(lambda s: self.fock.pair_creation(self.mode(i, s), self.mode(j, s)))
            else:
                i, j = lab[1:]
                m = -self._sum(lambda s: self.fock.pair_annihilation(self.mode(i, s), self.mode(j, s)))
            mats.append(m.tocsr())
        super().__init__(basis, mats, name=f"metaplectic(n={n}, cutoff={cutoff}, flavours={flavours})", star="noncompact")

    def mode(self, i: int, flavour: int = 0) -> int:
        return flavour * self.n + i - 1

    def _sum(self, f):
        out = f(0)
        for s in range(1, self.flavours):
            out = out + f(s)
        return out

    @property
    def central_charge(self) -> float:
        return 0.5 * self.flavours

    def lowest_weight_for(self, partition) -> tuple:
        mu = _pad(partition, self.n, fill=self.central_charge)
        return tuple(reversed(mu))

    def interior(self) -> np.ndarray:
        return self.fock.interior(2)


def _pad(partition, n: int, fill=0) -> tuple:
    mu = list(partition)
    if len(mu) > n:
        raise ValueError("partition longer than the rank")
    mu = mu + [fill] * (n - len(mu))
    if any(mu[i] < mu[i + 1] for i in range(n - 1)):
        raise ValueError(f"partition {partition} is not weakly decreasing")
    return tuple(mu)


@lru_cache(maxsize=None)
def build_fock(n: int, cutoff: int, flavours: int = 1) -> FockRealization:
    return FockRealization(n, cutoff, flavours)


@lru_cache(maxsize=None)
def build_metaplectic(n: int, cutoff: int, flavours: int = 1) -> MetaplecticRealization:
    return MetaplecticRealization(n, cutoff, flavours)


@lru_cache(maxsize=None)
def adjoint_realization(n: int) -> Realization:
    sc = structure_constants(build_basis(n))
    return Realization(build_basis(n), list(sc.ad_basis()), name=f"adjoint(n={n})")


def ccr_residual(real: FockRealization) -> float:
    """max |[c_a, c_b^dagger] - delta_ab| on states with occupation <= cutoff - 2."""
    inner = real.interior()
    worst = 0.0
    ident = sp.identity(real.fock.dim, format="csr")
    modes = range(real.fock.n_modes)
    ann = [real.fock.annihilation(m) for m in modes]
    cre = [real.fock.creation(m) for m in modes]
    for a in modes:
        for b in modes:
            comm = ann[a] @ cre[b] - cre[b] @ ann[a] - (a == b) * ident
            block = comm[:, inner]
            if block.nnz:
                worst = max(worst, float(np.max(np.abs(block.data))))
    return worst


# ---------------------------------------------------------------- modules


@dataclass
class ModuleSpace:
    """Subspace of a realization with an orthonormal weight basis."""

    realization: Realization
    vectors: np.ndarray  # ambient dim x d, orthonormal columns
    weights: np.ndarray  # d x n
    lowest: int = 0
    partition: tuple | None = None
    gram: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.gram is None:
            self.gram = self.vectors.conj().T @ self.vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.realization.basis.n

    def act(self, x: AlgebraElement | int) -> np.ndarray:
        """Ambient matrix applied to the module vectors (ambient x d)."""
        m = self.realization.mats[x] if isinstance(x, (int, np.integer)) else self.realization.matrix(x)
        return np.asarray(m @ self.vectors)

    def restrict(self, x: AlgebraElement | int) -> np.ndarray:
        return self.vectors.conj().T @ self.act(x)

    def leakage(self, x: AlgebraElement | int) -> float:
        img = self.act(x)
        out = img - self.vectors @ (self.vectors.conj().T @ img)
        return float(np.max(np.abs(out), initial=0.0))

    def u_matrices(self) -> np.ndarray:
        """Module matrices of u_ij (i, j in 1..n) as an array [i-1, j-1, d, d]."""
        n, b = self.n, self.realization.basis
        out = np.zeros((n, n, self.dim, self.dim), dtype=complex)
        for i in range(n):
            for j in range(n):
                lab = ("h", i + 1) if i == j else ("u", i + 1, j + 1)
                out[i, j] = self.restrict(b.index[lab])
        return out


def full_module(real: Realization) -> ModuleSpace:
    d = real.dim
    space = ModuleSpace(real, np.eye(d, dtype=complex), np.zeros((d, real.basis.n)))
    return _with_weight_basis(space)


def trivial_module(n: int) -> ModuleSpace:
    """One-dimensional module on which every generator acts by zero."""
    basis = build_basis(n)
    real = Realization(basis, [np.zeros((1, 1), complex) for _ in basis.labels], name=f"trivial(n={n})")
    return ModuleSpace(real, np.ones((1, 1), complex), np.zeros((1, n)), partition=(0,) * n)


def _cartan_restricted(space: ModuleSpace) -> list[np.ndarray]:
    return [space.restrict(space.realization.basis.index[("h", i + 1)]) for i in range(space.n)]


def weight_decompose(space: ModuleSpace, tol: float = 1e-9) -> list[tuple[tuple, np.ndarray]]:
    """Group a simultaneous eigenbasis of the h_i by weight.

    Returns (weight, ambient basis of the weight space) pairs sorted by weight.
    """
    hs = _cartan_restricted(space)
    for a, b in itertools.combinations(hs, 2):
        if np.max(np.abs(a @ b - b @ a), initial=0.0) > tol:
            raise RealizationError("Cartan generators do not commute on this space")
    rng = np.random.default_rng(12345)
    coeffs = 1.0 + rng.random(len(hs)) * np.pi
    generic = sum(c * h for c, h in zip(coeffs, hs))
    vals, vecs = np.linalg.eig(generic)
    order = np.lexsort((vals.imag, vals.real))
    vals, vecs = vals[order], vecs[:, order]
    groups: list[list[int]] = []
    for k, v in enumerate(vals):
        if groups and abs(vals[groups[-1][0]] - v) < 1e-7:
            groups[-1].append(k)
        else:
            groups.append([k])
    out = []
    for g in groups:
        q, _ = np.linalg.qr(vecs[:, g])
        w = []
        for h in hs:
            hq = h @ q
            lam = np.trace(q.conj().T @ hq) / len(g)
            if np.max(np.abs(hq - lam * q), initial=0.0) > 1e-7:
                raise RealizationError("Cartan action is not diagonalizable on this space")
            w.append(_clean(lam))
        out.append((tuple(w), space.vectors @ q))
    out.sort(key=lambda item: item[0])
    return out


def _clean(z: complex):
    if abs(z.imag) < 1e-9:
        r = z.real
        if abs(r - round(r)) < 1e-9:
            return int(round(r))
        if abs(2 * r - round(2 * r)) < 1e-9:
            return Fraction(int(round(2 * r)), 2)
        return r
    return complex(z)


def _with_weight_basis(space: ModuleSpace) -> ModuleSpace:
    blocks = weight_decompose(space)
    vecs = np.hstack([v for _, v in blocks])
    q, r = np.linalg.qr(vecs)
    q = q * np.sign(np.diag(r).real + (np.diag(r).real == 0))
    weights = np.array([[float(c) if not isinstance(c, complex) else c.real for c in w] for w, v in blocks for _ in range(v.shape[1])])
    lowest = min(range(len(weights)), key=lambda k: tuple(weights[k]))
    return ModuleSpace(space.realization, q, weights, lowest=lowest, partition=space.partition)


def _orbit_span(real: Realization, seed: np.ndarray, gens: list[int], tol: float = 1e-10) -> np.ndarray:
    basis = [seed / np.linalg.norm(seed)]
    frontier = list(basis)
    while frontier:
        nxt = []
        for v in frontier:
            for g in gens:
                w = np.asarray(real.mats[g] @ v).ravel()
                for b in basis:
                    w = w - b * np.vdot(b, w)
                for b in basis:
                    w = w - b * np.vdot(b, w)
                nrm = np.linalg.norm(w)
                if nrm > tol:
                    w = w / nrm
                    basis.append(w)
                    nxt.append(w)
        frontier = nxt
    return np.column_stack(basis)


def lowest_weight_vectors(real: Realization, weight: Sequence, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of vectors of the given weight killed by the lowering set."""
    b = real.basis
    diag = np.column_stack([np.asarray(real.generator(("h", i + 1)).diagonal()).real for i in range(b.n)])
    h_offdiag = max(
        float(np.max(np.abs((real.generator(("h", i + 1)) - sp.diags(diag[:, i])).data), initial=0.0))
        if sp.issparse(real.generator(("h", i + 1)))
        else float(np.max(np.abs(real.generator(("h", i + 1)) - np.diag(diag[:, i]))))
        for i in range(b.n)
    )
    if h_offdiag > tol:
        raise RealizationError("lowest-weight search needs a realization with diagonal Cartan generators")
    target = np.array([float(w) for w in weight])
    cand = np.flatnonzero(np.all(np.abs(diag - target) < 1e-9, axis=1))
    if len(cand) == 0:
        raise CutoffTooSmall(f"no state of weight {tuple(weight)} in {real.name}")
    inner = getattr(real, "interior", None)
    if inner is not None:
        allowed = set(inner().tolist())
        cand = np.array([c for c in cand if c in allowed])
        if len(cand) == 0:
            raise CutoffTooSmall(f"weight {tuple(weight)} only occurs at the cutoff")
    sel = sp.csr_matrix((np.ones(len(cand)), (cand, np.arange(len(cand)))), shape=(real.dim, len(cand)))
    stack = sp.vstack([sp.csr_matrix(real.mats[k] @ sel) for k in b.label_set("g_minus")])
    gram = (stack.conj().T @ stack).toarray()
    vals, vecs = np.linalg.eigh(gram)
    null = vecs[:, vals < tol * max(1.0, float(vals[-1]))]
    if null.shape[1] == 0:
        raise CutoffTooSmall(f"no lowest-weight vector of weight {tuple(weight)}")
    full = np.zeros((real.dim, null.shape[1]), dtype=complex)
    full[cand] = null
    return full


def u4_lowest_module(real: Realization, partition: Sequence) -> ModuleSpace:
    """u(n)-module generated from the lowest-weight vector labelled by ``partition``."""
    weight = real.lowest_weight_for(partition)
    null = lowest_weight_vectors(real, weight)
    # deterministic pick: projection of the first candidate state that survives
    row = int(np.argmax(np.linalg.norm(null, axis=1) > 1e-6))
    seed = null @ null[row].conj()
    seed = seed / np.linalg.norm(seed)
    span = _orbit_span(real, seed, real.basis.label_set("u"))
    space = ModuleSpace(real, span, np.zeros((span.shape[1], real.basis.n)), partition=tuple(partition))
    out = _with_weight_basis(space)
    out.lowest = int(np.argmax(np.abs(out.vectors.conj().T @ seed)))
    return out


def defining_module(n: int) -> ModuleSpace:
    from .sp_algebra import defining_realization

    return full_module(defining_realization(n))


def adjoint_module(n: int) -> ModuleSpace:
    return full_module(adjoint_realization(n))


def fock_block(real: FockRealization, total: int) -> ModuleSpace:
    """Fixed total-occupation block of the bilinear realization."""
    idx = np.flatnonzero(real.fock.total == total)
    vecs = np.zeros((real.dim, len(idx)), dtype=complex)
    vecs[idx, np.arange(len(idx))] = 1.0
    return _with_weight_basis(ModuleSpace(real, vecs, np.zeros((len(idx), real.basis.n))))


# ---------------------------------------------------------------- dimensions


def _c_positive_roots(n: int):
    roots = []
    for i in range(n):
        for j in range(i + 1, n):
            r = [0] * n
            r[i], r[j] = 1, -1
            roots.append(r)
            r = [0] * n
            r[i], r[j] = 1, 1
            roots.append(r)
        r = [0] * n
        r[i] = 2
        roots.append(r)
    return roots


def weyl_dimension(highest_weight: Sequence[int], n: int) -> int:
    """Dimension of the C_n irrep with the given Dynkin labels (fundamental-weight coordinates)."""
    lab = [int(v) for v in highest_weight]
    if len(lab) != n or any(v < 0 for v in lab):
        raise ValueError(f"{tuple(highest_weight)} is not a dominant integral weight of C_{n}")
    # omega_k = e_1 + ... + e_k
    lam = [sum(lab[k] for k in range(i, n)) for i in range(n)]
    rho = [n - i for i in range(n)]
    num = den = Fraction(1)
    for r in _c_positive_roots(n):
        num *= sum((a + b) * c for a, b, c in zip(lam, rho, r))
        den *= sum(b * c for b, c in zip(rho, r))
    dim = num / den
    assert dim.denominator == 1
    return int(dim)


def gl_dimension(partition: Sequence) -> int:
    """Dimension of the gl(n) irrep with highest weight ``partition``."""
    mu = list(partition)
    n = len(mu)
    num = den = Fraction(1)
    for i in range(n):
        for j in range(i + 1, n):
            num *= Fraction(mu[i]) - Fraction(mu[j]) + j - i
            den *= j - i
    return int(num / den)


# ---------------------------------------------------------------- induction data


def _restricted_ad_trace(x: AlgebraElement, positions: list[int]) -> complex:
    sc = structure_constants(x.basis)
    ad = sc.ad(x)
    return complex(np.trace(ad[np.ix_(positions, positions)]))


def modular_function(x: AlgebraElement, subalgebra: str | Sequence[int] = "all") -> float:
    """|det Ad(exp x)| on the subalgebra, i.e. |exp tr(ad x restricted)|."""
    pos = x.basis.label_set(subalgebra) if isinstance(subalgebra, str) else list(subalgebra)
    outside = np.setdiff1d(np.arange(x.basis.dim), pos)
    if np.max(np.abs(x.coeffs[outside]), initial=0.0) > 1e-12:
        raise ValueError("element is not supported on the subalgebra")
    return float(math.exp(_restricted_ad_trace(x, pos).real))


def induction_normalization(x: AlgebraElement) -> float:
    """N(exp x) with N^2 = Delta_P / Delta_G for x in the parabolic subalgebra."""
    return math.sqrt(modular_function(x, "parabolic") / modular_function(x, "all"))


@dataclass
class InducedRepSpec:
    partition: tuple
    module: ModuleSpace
    normalization: Callable[[AlgebraElement], float] = induction_normalization
    trivial_extension: bool = True

    def annihilation_residual(self) -> float:
        m = self.module
        return max(
            (float(np.max(np.abs(m.act(k)), initial=0.0)) for k in m.realization.basis.label_set("z_minus")),
            default=0.0,
        )

    def parabolic_leakage(self) -> float:
        m = self.module
        return max(m.leakage(k) for k in m.realization.basis.label_set("parabolic"))

    def u_matrices(self) -> np.ndarray:
        return self.module.u_matrices()


def particle_spectrum(space: ModuleSpace, charge_normalization: float = 1.0) -> list[tuple[tuple, tuple]]:
    """Each weight vector with its charges |h_i eigenvalue| times a normalization."""
    out = []
    for w, vecs in weight_decompose(space):
        charges = tuple(abs(float(v)) * charge_normalization for v in w)
        out.extend([(w, charges)] * vecs.shape[1])
    return out


def signed_permutation_orbit(weight: Sequence) -> set:
    n = len(weight)
    out = set()
    for perm in itertools.permutations(range(n)):
        for signs in itertools.product((1, -1), repeat=n):
            out.add(tuple(signs[i] * weight[perm[i]] for i in range(n)))
    return out


def tensor_realization(first: Realization, second: Realization) -> Realization:
    """rho(x) = rho1(x) (x) Id + Id (x) rho2(x) on the product space."""
    if first.basis.n != second.basis.n:
        raise RealizationError("tensor factors must share the rank")
    i1 = sp.identity(first.dim, format="csr", dtype=complex)
    i2 = sp.identity(second.dim, format="csr", dtype=complex)
    mats = [
        (sp.kron(sp.csr_matrix(a), i2) + sp.kron(i1, sp.csr_matrix(b))).tocsr()
        for a, b in zip(first.mats, second.mats)
    ]
    star = first.star if first.star == second.star else "mixed"
    return Realization(first.basis, mats, name=f"{first.name} x {second.name}", star=star)


def product_vector(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(first, complex), np.asarray(second, complex))
