"""Dense complex matrix helpers and a deterministic disc quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

# Largest 1-norm accepted by mat_exp. e^700 is close to the double overflow point.
EXP_NORM_LIMIT = 700.0


class BranchError(ValueError):
    """Spectrum touches the branch cut of the principal logarithm."""


class ExactnessError(ValueError):
    """A value expected to be an exact small rational is not one."""


def as_square(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def is_hermitian(a, tol: float = 1e-12) -> bool:
    m = as_square(a)
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) < tol)


def mat_exp(a) -> np.ndarray:
    """Matrix exponential (Pade scaling and squaring via scipy)."""
    m = as_square(a)
    if np.linalg.norm(m, 1) > EXP_NORM_LIMIT:
        raise OverflowError("matrix norm beyond the supported exponential range")
    return scipy.linalg.expm(m)


def mat_log_principal(a, tol: float = 1e-10) -> np.ndarray:
    """Principal matrix logarithm.

    Raises BranchError when an eigenvalue sits on the closed negative real
    axis, and checks the round trip exp(log a) = a.
    """
    m = as_square(a)
    scale = max(1.0, float(np.max(np.abs(m))))
    for lam in np.linalg.eigvals(m):
        if abs(lam.imag) <= 1e-12 * scale and lam.real <= 1e-14 * scale:
            raise BranchError(f"eigenvalue {lam} on the principal branch cut")
    log = scipy.linalg.logm(m)
    if not np.all(np.isfinite(log)):
        raise BranchError("logarithm did not converge")
    resid = np.max(np.abs(scipy.linalg.expm(log) - m))
    if resid > tol * scale:
        raise BranchError(f"logarithm round trip residual {resid:.2e}")
    return log


def eigh_sorted(a):
    """Eigen-decomposition of a Hermitian matrix, ascending eigenvalues."""
    return np.linalg.eigh(as_square(a))


def determinant(a) -> complex:
    return complex(np.linalg.det(as_square(a)))


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def round_rational(x: complex, max_den: int = 8, tol: float = 1e-9) -> Fraction:
    """Round a (nearly real) double to a rational with small denominator.

    The residue is asserted below ``tol`` so exact structure constants are
    recovered honestly from floating point.
    """
    if abs(complex(x).imag) > tol:
        raise ExactnessError(f"value {x} has an imaginary part")
    r = complex(x).real
    frac = Fraction(r).limit_denominator(max_den)
    if abs(float(frac) - r) > tol:
        raise ExactnessError(f"value {r!r} is not a rational with denominator <= {max_den}")
    return frac


@dataclass(frozen=True)
class Quadrature1C:
    """Nodes in the open unit disc with positive weights (area measure)."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> complex:
        return complex(np.sum(self.weights * np.asarray(values)))


def disc_quadrature(order: int) -> Quadrature1C:
    """Product rule on the unit disc exact for z^a zbar^b with a + b <= 2*order.

    Radial part is Gauss-Legendre in r on [0, 1] carrying the Jacobian r;
    angular part is the trapezoid rule, exact for trig polynomials of degree
    below the point count.
    """
    if order < 4:
        raise ValueError("quadrature order must be at least 4")
    n_r = order + 1
    n_theta = 2 * order + 1
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w * r
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    wt = np.full(n_theta, 2.0 * np.pi / n_theta)
    nodes = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = (wr[:, None] * wt[None, :]).ravel()
    return Quadrature1C(nodes=nodes, weights=weights)
