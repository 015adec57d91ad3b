"""Quaternionic involutions J, K, L of the defining representation and the
invariant forms they induce on the algebra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import mat_exp
from .rep_theory import ModuleSpace, RealizationError
from .sp_algebra import (
    AlgebraBasis,
    AlgebraElement,
    defining_realization,
    killing_matrix,
    structure_constants,
)


@dataclass(frozen=True)
class InvolutionSet:
    n: int
    J: np.ndarray
    K: np.ndarray
    L: np.ndarray

    @property
    def identity(self) -> np.ndarray:
        return np.eye(2 * self.n, dtype=complex)

    def quaternion_residuals(self) -> dict:
        J, K, L, I = self.J, self.K, self.L, self.identity
        return {
            "J^2+I": float(np.max(np.abs(J @ J + I))),
            "K^2+I": float(np.max(np.abs(K @ K + I))),
            "L^2+I": float(np.max(np.abs(L @ L + I))),
            "{J,K}": float(np.max(np.abs(J @ K + K @ J))),
            "{J,L}": float(np.max(np.abs(J @ L + L @ J))),
            "{K,L}": float(np.max(np.abs(K @ L + L @ K))),
            "JKL+I": float(np.max(np.abs(J @ K @ L + I))),
        }


def build_involutions(n: int) -> InvolutionSet:
    if not 1 <= n <= 4:
        raise ValueError("rank must be between 1 and 4")
    z, one = np.zeros((n, n)), np.eye(n)
    J = np.block([[z, one], [-one, z]]).astype(complex)
    K = 1j * np.block([[z, one], [one, z]])
    L = 1j * np.block([[one, z], [z, -one]])
    return InvolutionSet(n, J, K, L)


def conjugate_by(x: AlgebraElement, g: np.ndarray) -> AlgebraElement:
    """Coefficients of g rho(x) g^-1 in the defining representation."""
    real = defining_realization(x.basis.n)
    return real.decompose(g @ real.dense(x) @ np.linalg.inv(g))


def ad_j_swap(x: AlgebraElement) -> AlgebraElement:
    return conjugate_by(x, build_involutions(x.basis.n).J)


def ad_matrix(g: np.ndarray, basis: AlgebraBasis) -> np.ndarray:
    """Matrix of x -> g x g^-1 on basis coefficients."""
    cols = [conjugate_by(basis.element(lab), g).coeffs for lab in basis.labels]
    return np.column_stack(cols)


def j_element(basis: AlgebraBasis) -> AlgebraElement:
    """Algebra element whose defining matrix is J itself (sum of momentum-type generators)."""
    return defining_realization(basis.n).decompose(build_involutions(basis.n).J)


def group_j(space: ModuleSpace) -> np.ndarray:
    """Action of the group element J on a module: exp((pi/2) rho(J)) restricted."""
    gen = space.restrict(j_element(space.realization.basis))
    return mat_exp(0.5 * np.pi * gen)


def eigensplit_J(space: ModuleSpace, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (module coordinates) of the +i and -i eigenspaces of J."""
    gen = space.restrict(j_element(space.realization.basis))
    if np.max(np.abs(gen @ gen.conj().T - gen.conj().T @ gen), initial=0.0) > tol:
        raise RealizationError("J is not normal on this module")
    # J = exp((pi/2) G) with G anti-Hermitian; eigenvalues of J follow from those of G
    vals, vecs = np.linalg.eig(0.5 * np.pi * gen)
    jvals = np.exp(vals)
    plus = np.abs(jvals - 1j) < tol
    minus = np.abs(jvals + 1j) < tol
    if not np.all(plus | minus):
        bad = jvals[~(plus | minus)]
        raise RealizationError(f"J has eigenvalues other than +-i: {bad[:3]}")
    q_plus = np.linalg.qr(vecs[:, plus])[0] if plus.any() else np.zeros((space.dim, 0), complex)
    q_minus = np.linalg.qr(vecs[:, minus])[0] if minus.any() else np.zeros((space.dim, 0), complex)
    return q_plus, q_minus


@dataclass(frozen=True)
class FormTriple:
    B: np.ndarray
    Omega: np.ndarray
    H: np.ndarray


def forms(basis: AlgebraBasis) -> FormTriple:
    """Killing form B, the antisymmetric form Omega(x, y) = B(x, ad(J/2) y)
    and the Hermitian combination H = B - i Omega.

    Ad(J) = exp(pi ad(J/2)); ad(J/2) is the infinitesimal rotation whose
    half-period flow is the swap, and it is the one that makes Omega
    antisymmetric.
    """
    B = killing_matrix(basis.n).astype(complex)
    rot = structure_constants(basis).ad(j_element(basis) * 0.5)
    omega = B @ rot
    return FormTriple(B=B, Omega=omega, H=B - 1j * omega)
