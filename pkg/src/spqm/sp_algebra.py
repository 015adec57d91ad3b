"""The symplectic Lie algebra sp(2n) in an oscillator-adapted basis.

Modes are labelled alpha in {+1..+n, -1..-n}; the defining representation
orders them (+1..+n, -1..-n). Generators are the bilinears

    c_{a,b} = (E_{a,b} - sgn(a) sgn(b) E_{-b,-a}) / sqrt(1 + delta_{a,-b})

and the basis is

    h_i     = c_{i,i}                       (Cartan, also the diagonal of u(n))
    e_ij    = c_{i,-j} (i<j),  e_i = sqrt(2) c_{i,-i}
    e_ij^+  = c_{-j,i} (i<j),  e_i^+ = sqrt(2) c_{-i,i}
    u_ij    = c_{i,j}  (i != j)

so that the symmetric matrix E with entries e_ij satisfies
[e_i, e_j^+] = 4 delta_ij h_i and u(n) = span{h_i, u_ij}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .numerics import ExactnessError, round_rational

MAX_RANK = 4


class BasisMismatch(ValueError):
    pass


class NotFaithful(ValueError):
    """A realization cannot reproduce the requested linear combination."""


# ---------------------------------------------------------------- labels


def _labels(n: int) -> tuple:
    out = [("h", i) for i in range(1, n + 1)]
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i, n + 1)]
    out += [("e", i, j) for i, j in pairs]
    out += [("f", i, j) for i, j in pairs]
    out += [("u", i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    return tuple(out)


def label_name(lab) -> str:
    kind = lab[0]
    if kind == "h":
        return f"h{lab[1]}"
    i, j = lab[1], lab[2]
    if kind == "e":
        return f"e{i}" if i == j else f"e{i}{j}"
    if kind == "f":
        return f"e{i}+" if i == j else f"e{i}{j}+"
    return f"u{i}{j}"


def dagger_label(lab):
    kind = lab[0]
    if kind == "h":
        return lab
    if kind == "e":
        return ("f",) + lab[1:]
    if kind == "f":
        return ("e",) + lab[1:]
    return ("u", lab[2], lab[1])


@dataclass(frozen=True)
class AlgebraBasis:
    n: int
    labels: tuple = field(repr=False)
    index: dict = field(repr=False, compare=False, hash=False)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def element(self, lab, coeff: complex = 1.0) -> "AlgebraElement":
        lab = canonical_label(lab)
        c = np.zeros(self.dim, dtype=complex)
        c[self.index[lab]] = coeff
        return AlgebraElement(self, c)

    def named(self, name: str) -> "AlgebraElement":
        return self.element(parse_label(name, self.n))

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, np.zeros(self.dim, dtype=complex))

    def positions(self, kinds: str) -> list[int]:
        return [k for k, lab in enumerate(self.labels) if lab[0] in kinds]

    def label_set(self, name: str) -> list[int]:
        return [self.index[lab] for lab in LABEL_SETS[name](self.n)]

    def dagger_perm(self) -> np.ndarray:
        return np.array([self.index[dagger_label(lab)] for lab in self.labels])

    def names(self) -> list[str]:
        return [label_name(lab) for lab in self.labels]


def canonical_label(lab):
    lab = tuple(lab)
    if lab[0] in "ef" and lab[1] > lab[2]:
        return (lab[0], lab[2], lab[1])
    if lab[0] == "u" and lab[1] == lab[2]:
        return ("h", lab[1])
    return lab


def parse_label(name: str, n: int):
    """Inverse of ``label_name`` for ranks up to 9 (single digit indices)."""
    s = name.strip()
    dag = s.endswith("+")
    if dag:
        s = s[:-1]
    kind, digits = s[0], s[1:]
    if not digits.isdigit() or kind not in "heu":
        raise KeyError(f"unknown generator name {name!r}")
    idx = [int(ch) for ch in digits]
    if any(not 1 <= k <= n for k in idx):
        raise KeyError(f"generator {name!r} out of range for rank {n}")
    if kind == "h" and len(idx) == 1 and not dag:
        return ("h", idx[0])
    if kind == "e" and len(idx) in (1, 2):
        i, j = (idx[0], idx[0]) if len(idx) == 1 else idx
        return canonical_label(("f" if dag else "e", i, j))
    if kind == "u" and len(idx) == 2 and not dag:
        return canonical_label(("u", idx[0], idx[1]))
    raise KeyError(f"unknown generator name {name!r}")


@lru_cache(maxsize=None)
def build_basis(n: int) -> AlgebraBasis:
    if not 1 <= n <= MAX_RANK:
        raise ValueError(f"rank must lie in 1..{MAX_RANK}, got {n}")
    labels = _labels(n)
    return AlgebraBasis(n=n, labels=labels, index={lab: k for k, lab in enumerate(labels)})


LABEL_SETS = {
    "cartan": lambda n: [("h", i) for i in range(1, n + 1)],
    "z_plus": lambda n: [l for l in _labels(n) if l[0] == "e"],
    "z_minus": lambda n: [l for l in _labels(n) if l[0] == "f"],
    "u": lambda n: [l for l in _labels(n) if l[0] in "hu"],
    "parabolic": lambda n: [l for l in _labels(n) if l[0] in "fhu"],
    "g_plus": lambda n: [l for l in _labels(n) if l[0] == "e" or (l[0] == "u" and l[1] < l[2])],
    "g_minus": lambda n: [l for l in _labels(n) if l[0] == "f" or (l[0] == "u" and l[1] > l[2])],
    "all": lambda n: list(_labels(n)),
}


def census(n: int) -> dict:
    b = build_basis(n)
    zp = len(b.label_set("z_plus"))
    return {
        "generators": b.dim,
        "z_plus": zp,
        "z_minus": len(b.label_set("z_minus")),
        "u": len(b.label_set("u")),
        "parabolic": len(b.label_set("parabolic")),
        "coset": zp,
        "sp_mod_u": b.dim - len(b.label_set("u")),
    }


# ---------------------------------------------------------------- elements


@dataclass(frozen=True)
class AlgebraElement:
    basis: AlgebraBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.basis.dim,):
            raise ValueError("coefficient vector length must equal the generator count")
        object.__setattr__(self, "coeffs", c)

    def _check(self, other: "AlgebraElement"):
        if other.basis.n != self.basis.n:
            raise BasisMismatch("elements live in different bases")

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.basis, self.coeffs - other.coeffs)

    def __neg__(self):
        return AlgebraElement(self.basis, -self.coeffs)

    def __mul__(self, s):
        return AlgebraElement(self.basis, complex(s) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return AlgebraElement(self.basis, self.coeffs / complex(s))

    def dagger(self) -> "AlgebraElement":
        """Hermitian adjoint for the unitary structure with e_ij^dagger = e_ij^+."""
        out = np.zeros_like(self.coeffs)
        out[self.basis.dagger_perm()] = self.coeffs.conj()
        return AlgebraElement(self.basis, out)

    def is_self_adjoint(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.dagger().coeffs - self.coeffs)) < tol)

    def is_split_real(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.coeffs.imag)) < tol)

    def restrict(self, positions: Iterable[int]) -> "AlgebraElement":
        out = np.zeros_like(self.coeffs)
        pos = list(positions)
        out[pos] = self.coeffs[pos]
        return AlgebraElement(self.basis, out)

    def support(self, tol: float = 1e-12) -> set:
        return {self.basis.labels[k] for k in np.flatnonzero(np.abs(self.coeffs) > tol)}

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __repr__(self):
        terms = [
            f"{c:.6g}*{label_name(self.basis.labels[k])}"
            for k, c in enumerate(self.coeffs)
            if abs(c) > 1e-14
        ]
        return "AlgebraElement(" + (" + ".join(terms) or "0") + ")"


def random_element(basis: AlgebraBasis, rng: np.random.Generator, kind: str = "generic", scale: float = 1.0):
    """Random element: ``generic`` complex, ``split_real`` (real matrices in the
    defining representation) or ``self_adjoint`` (Hermitian matrices)."""
    d = basis.dim
    if kind == "generic":
        c = rng.normal(size=d) + 1j * rng.normal(size=d)
    elif kind == "split_real":
        c = rng.normal(size=d).astype(complex)
    elif kind == "self_adjoint":
        c = rng.normal(size=d) + 1j * rng.normal(size=d)
        x = AlgebraElement(basis, c)
        return (x + x.dagger()) * (0.5 * scale)
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    return AlgebraElement(basis, scale * c)


# ---------------------------------------------------------------- defining rep


def mode_index(alpha: int, n: int) -> int:
    if alpha == 0 or abs(alpha) > n:
        raise ValueError(f"mode label {alpha} out of range")
    return alpha - 1 if alpha > 0 else n - alpha - 1


def oscillator_bilinear(alpha: int, beta: int, n: int) -> np.ndarray:
    """Defining-representation matrix of the mode bilinear c_{alpha,beta}."""
    m = np.zeros((2 * n, 2 * n))
    sigma = np.sign(alpha) * np.sign(beta)
    m[mode_index(alpha, n), mode_index(beta, n)] += 1.0
    m[mode_index(-beta, n), mode_index(-alpha, n)] -= sigma
    return m / math.sqrt(1.0 + (alpha == -beta))


def label_bilinear(lab) -> tuple[int, int, float]:
    """(alpha, beta, scale) with generator = scale * c_{alpha,beta}."""
    kind = lab[0]
    if kind == "h":
        return lab[1], lab[1], 1.0
    i, j = lab[1], lab[2]
    if kind == "e":
        return (i, -j, math.sqrt(2.0)) if i == j else (i, -j, 1.0)
    if kind == "f":
        return (-i, i, math.sqrt(2.0)) if i == j else (-j, i, 1.0)
    return i, j, 1.0


# ---------------------------------------------------------------- realizations


class Realization:
    """Assignment of basis generators to square matrices (dense or sparse).

    ``star`` records the unitary structure the matrices respect:
    ``compact`` means rho(x^dagger) = rho(x)^dagger, ``noncompact`` means
    rho(e)^dagger = -rho(e^+) with u(n) unchanged.
    """

    def __init__(self, basis: AlgebraBasis, mats: Sequence, name: str, star: str = "compact"):
        self.basis = basis
        self.mats = list(mats)
        self.name = name
        self.star = star
        self.dim = self.mats[0].shape[0]
        self.sparse = sp.issparse(self.mats[0])
        self._gram = None

    def __len__(self):
        return len(self.mats)

    def matrix(self, x: AlgebraElement):
        if x.basis.n != self.basis.n:
            raise BasisMismatch("element and realization use different bases")
        out = None
        for c, m in zip(x.coeffs, self.mats):
            if c != 0:
                out = c * m if out is None else out + c * m
        if out is None:
            out = sp.csr_matrix((self.dim, self.dim), dtype=complex) if self.sparse else np.zeros((self.dim, self.dim), complex)
        return out

    def dense(self, x: AlgebraElement) -> np.ndarray:
        m = self.matrix(x)
        return m.toarray() if sp.issparse(m) else np.asarray(m)

    def generator(self, lab):
        return self.mats[self.basis.index[canonical_label(lab)]]

    # Projection back onto the span of the generator matrices.
    def _design(self):
        if self._gram is None:
            if self.sparse:
                g = sp.vstack([sp.csr_matrix(m).reshape((1, -1)) for m in self.mats]).T.tocsr()
                gram = (g.conj().T @ g).toarray()
            else:
                g = np.column_stack([np.asarray(m).reshape(-1) for m in self.mats])
                gram = g.conj().T @ g
            rank = np.linalg.matrix_rank(gram, tol=1e-9 * max(1.0, np.max(np.abs(gram))))
            if rank < len(self.mats):
                raise NotFaithful(f"{self.name}: generator matrices are linearly dependent (rank {rank})")
            self._gram = (g, gram)
        return self._gram

    def decompose(self, m, tol: float = 1e-9) -> AlgebraElement:
        g, gram = self._design()
        if self.sparse:
            v = sp.csr_matrix(m).reshape((1, -1))
            rhs = np.asarray((v @ g.conj()).todense()).ravel()
        else:
            v = np.asarray(m).reshape(-1)
            rhs = g.conj().T @ v
        c = np.linalg.solve(gram, rhs)
        resid = sp.csr_matrix(m) - self.matrix(AlgebraElement(self.basis, c)) if self.sparse else np.asarray(m) - self.matrix(AlgebraElement(self.basis, c))
        vals = resid.data if sp.issparse(resid) else resid
        mvals = sp.csr_matrix(m).data if self.sparse else np.asarray(m)
        scale = max(1.0, float(np.max(np.abs(mvals), initial=0.0)))
        err = float(np.max(np.abs(vals), initial=0.0))
        if err > tol * scale:
            raise NotFaithful(f"{self.name}: matrix outside the algebra span (residual {err:.2e})")
        return AlgebraElement(self.basis, c)


@lru_cache(maxsize=None)
def defining_realization(n: int) -> Realization:
    basis = build_basis(n)
    mats = []
    for lab in basis.labels:
        a, b, s = label_bilinear(lab)
        mats.append(s * oscillator_bilinear(a, b, n).astype(complex))
    return Realization(basis, mats, name=f"defining(n={n})")


# ---------------------------------------------------------------- structure constants


@dataclass(frozen=True)
class StructureConstants:
    """c[a, b, k] with [g_a, g_b] = sum_k c[a, b, k] g_k."""

    n: int
    tensor: np.ndarray
    exact: dict = field(default_factory=dict, repr=False, compare=False)

    def ad(self, x: AlgebraElement) -> np.ndarray:
        """Matrix of ad x acting on coefficient vectors."""
        return np.einsum("a,abk->kb", x.coeffs, self.tensor)

    def ad_basis(self) -> np.ndarray:
        return np.transpose(self.tensor, (0, 2, 1))

    def to_json(self) -> str:
        basis = build_basis(self.n)
        entries = sorted(
            [a, b, k, f"{fr.numerator}/{fr.denominator}"] for (a, b, k), fr in self.exact.items()
        )
        return json.dumps(
            {"n": self.n, "labels": basis.names(), "constants": entries}, sort_keys=True, indent=1
        )

    @staticmethod
    def from_json(text: str) -> "StructureConstants":
        data = json.loads(text)
        basis = build_basis(int(data["n"]))
        if data["labels"] != basis.names():
            raise BasisMismatch("label table does not match this build's basis order")
        d = basis.dim
        t = np.zeros((d, d, d), dtype=complex)
        exact = {}
        for a, b, k, s in data["constants"]:
            fr = Fraction(s)
            exact[(a, b, k)] = fr
            t[a, b, k] = float(fr)
        return StructureConstants(basis.n, t, exact)


def structure_constants(basis: AlgebraBasis, realization: Realization | None = None) -> StructureConstants:
    """Extract structure constants from a faithful realization and round them
    to rationals with denominator at most 8 (residue asserted below 1e-9)."""
    if realization is None:
        return _default_constants(basis.n)
    if realization.basis.n != basis.n:
        raise BasisMismatch("realization built for another rank")
    d = basis.dim
    raw = np.zeros((d, d, d), dtype=complex)
    mats = realization.mats
    for a in range(d):
        for b in range(a + 1, d):
            comm = mats[a] @ mats[b] - mats[b] @ mats[a]
            raw[a, b] = realization.decompose(comm).coeffs
            raw[b, a] = -raw[a, b]
    exact = {}
    tensor = np.zeros_like(raw)
    for idx in zip(*np.nonzero(np.abs(raw) > 1e-12)):
        try:
            fr = round_rational(raw[idx], max_den=8, tol=1e-9)
        except ExactnessError as exc:
            raise ExactnessError(f"constant {idx}: {exc}") from None
        if fr != 0:
            exact[tuple(int(v) for v in idx)] = fr
            tensor[idx] = float(fr)
    return StructureConstants(basis.n, tensor, exact)


@lru_cache(maxsize=None)
def _default_constants(n: int) -> StructureConstants:
    return structure_constants(build_basis(n), defining_realization(n))


def jacobi_residual(sc: StructureConstants) -> float:
    """Max over basis triples of |[a,[b,c]] + [b,[c,a]] + [c,[a,b]]|."""
    ad = sc.ad_basis()  # ad[a] has entries [k, b]
    comm = np.einsum("akm,bmc->abkc", ad, ad) - np.einsum("bkm,amc->abkc", ad, ad)
    ad_ab = np.einsum("abm,mkc->abkc", sc.tensor, ad)
    return float(np.max(np.abs(comm - ad_ab)))


def antisymmetry_residual(sc: StructureConstants) -> float:
    return float(np.max(np.abs(sc.tensor + np.transpose(sc.tensor, (1, 0, 2)))))


# ---------------------------------------------------------------- operations


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    x._check(y)
    sc = _default_constants(x.basis.n)
    return AlgebraElement(x.basis, np.einsum("a,b,abk->k", x.coeffs, y.coeffs, sc.tensor))


@lru_cache(maxsize=None)
def killing_matrix(n: int) -> np.ndarray:
    """Gram matrix B_ab = tr(ad g_a ad g_b)."""
    ad = _default_constants(n).ad_basis()
    return np.einsum("akm,bmk->ab", ad, ad)


def killing_form(x: AlgebraElement, y: AlgebraElement) -> complex:
    x._check(y)
    return complex(x.coeffs @ killing_matrix(x.basis.n) @ y.coeffs)


def _split(x: AlgebraElement, names: tuple[str, str, str]):
    return tuple(x.restrict(x.basis.label_set(s)) for s in names)


def triangular_split(x: AlgebraElement):
    """(lowering, Cartan, raising) parts with respect to the Borel subalgebra."""
    return _split(x, ("g_minus", "cartan", "g_plus"))


def parabolic_split(x: AlgebraElement):
    """(Z_-, u(n), Z_+) parts of the parabolic decomposition."""
    return _split(x, ("z_minus", "u", "z_plus"))


def simple_root_generators(basis: AlgebraBasis) -> tuple[list, list]:
    """Raising and lowering generators of the simple roots of C_n."""
    n = basis.n
    up = [basis.element(("u", i, i + 1)) for i in range(1, n)] + [basis.element(("e", n, n))]
    down = [basis.element(("u", i + 1, i)) for i in range(1, n)] + [basis.element(("f", n, n))]
    return up, down


def quadrature_generators(basis: AlgebraBasis) -> list[tuple[tuple[int, int], AlgebraElement, AlgebraElement]]:
    """Position/momentum-like pairs q = (e + e^+)/2, p = (e - e^+)/2."""
    out = []
    for lab in basis.label_set("z_plus"):
        i, j = basis.labels[lab][1:]
        e = basis.element(("e", i, j))
        f = basis.element(("f", i, j))
        out.append(((i, j), (e + f) * 0.5, (e - f) * 0.5))
    return out


def cartan_weights(basis: AlgebraBasis) -> np.ndarray:
    """Row k holds the ad(h_i) eigenvalues of basis generator k."""
    sc = _default_constants(basis.n)
    w = np.zeros((basis.dim, basis.n))
    for i in range(basis.n):
        ad_h = sc.ad(basis.element(("h", i + 1)))
        if np.max(np.abs(ad_h - np.diag(np.diag(ad_h)))) > 1e-12:
            raise RuntimeError("basis generators are not Cartan weight vectors")
        w[:, i] = np.diag(ad_h).real
    return w


# ---------------------------------------------------------------- relation families


def _sym(kind: str, i: int, j: int):
    return (kind, min(i, j), max(i, j))


def _u(i: int, j: int):
    return ("h", i) if i == j else ("u", i, j)


def _relation_rhs(family: str, idx: tuple, transposed: bool = False) -> list[tuple[float, tuple]]:
    i, j, k, l = idx
    d = lambda a, b: 1.0 if a == b else 0.0
    if family == "[e,e+]":
        if transposed:
            terms = [(d(i, k), _u(j, l)), (d(i, l), _u(j, k)), (d(j, k), _u(i, l)), (d(j, l), _u(i, k))]
        else:
            terms = [(d(i, k), _u(l, j)), (d(i, l), _u(k, j)), (d(j, k), _u(l, i)), (d(j, l), _u(k, i))]
    elif family == "[u,u]":
        terms = [(d(j, k), _u(i, l)), (-d(i, l), _u(k, j))]
    elif family == "[u,e]":
        terms = [(d(j, k), _sym("e", i, l)), (d(j, l), _sym("e", i, k))]
    elif family == "[u,e+]":
        terms = [(-d(i, k), _sym("f", j, l)), (-d(i, l), _sym("f", j, k))]
    else:
        terms = []
    return [(c, lab) for c, lab in terms if c != 0.0]


def _relation_lhs(family: str, idx: tuple) -> tuple:
    i, j, k, l = idx
    return {
        "[e,e+]": (_sym("e", i, j), _sym("f", k, l)),
        "[u,u]": (_u(i, j), _u(k, l)),
        "[u,e]": (_u(i, j), _sym("e", k, l)),
        "[u,e+]": (_u(i, j), _sym("f", k, l)),
        "[e,e]": (_sym("e", i, j), _sym("e", k, l)),
        "[e+,e+]": (_sym("f", i, j), _sym("f", k, l)),
    }[family]


RELATION_FAMILIES = ("[e,e+]", "[u,u]", "[u,e]", "[u,e+]", "[e,e]", "[e+,e+]")


def relation_residuals(real: Realization, columns=None, transposed_ee: bool = False) -> dict:
    """Max residual of each printed relation family, evaluated as matrices
    of ``real`` on the given columns (all by default).

    ``i_ii`` is h_i, and symmetric labels are used with either index order.
    ``transposed_ee`` swaps the u-indices on the right of [e_ij, e_kl^+].
    Also reports ``[e_i,e_j+]=4d h_i``.
    """
    n = real.basis.n
    idx = real.basis.index

    def mat(lab):
        m = real.mats[idx[lab]]
        return m if columns is None else m[:, columns]

    def full(lab):
        return real.mats[idx[lab]]

    def comm(a, b):
        # [A, B] restricted to the chosen columns
        A, B = full(a), full(b)
        out = A @ mat(b) - B @ mat(a)
        return out

    def size(m):
        if sp.issparse(m):
            return float(np.max(np.abs(m.data), initial=0.0))
        return float(np.max(np.abs(m), initial=0.0))

    out = {}
    rng = range(1, n + 1)
    for fam in RELATION_FAMILIES:
        worst = 0.0
        for quad in ((a, b, c, e) for a in rng for b in rng for c in rng for e in rng):
            x, y = _relation_lhs(fam, quad)
            lhs = comm(x, y)
            for coef, lab in _relation_rhs(fam, quad, transposed_ee and fam == "[e,e+]"):
                lhs = lhs - coef * mat(lab)
            worst = max(worst, size(lhs))
        out[fam] = worst
    worst = 0.0
    for a in rng:
        for b in rng:
            lhs = comm(("e", a, a), ("f", b, b))
            if a == b:
                lhs = lhs - 4.0 * mat(("h", a))
            worst = max(worst, size(lhs))
    out["[e_i,e_j+]=4d h_i"] = worst
    return out
