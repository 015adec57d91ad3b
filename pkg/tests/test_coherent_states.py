import math

import numpy as np
import pytest

from spqm.coherent_states import (
    KernelDomainError,
    PolySpace,
    PolyWavefunction,
    SymCoord,
    cayley_cs,
    cayley_matrix,
    coherent_series,
    exp_cs,
    gauge_trace_residual,
    homomorphism_residual,
    kernel_gram,
    operator_symbol,
    overlap_kernel,
    poly_space,
    random_contraction,
    resolution_check,
    resolution_density,
    scalar_kernel,
    scalar_u,
)
from spqm.numerics import mat_exp
from spqm.rep_theory import build_metaplectic, defining_module
from spqm.sp_algebra import build_basis


def _c(z):
    return SymCoord(np.array([[z]], complex))


def test_symcoord_validation():
    with pytest.raises(ValueError):
        SymCoord(np.array([[0, 1], [0, 0]]))
    z = SymCoord.from_entries(2, [0.1, 0.2, 0.3])
    assert z.Z[0, 1] == z.Z[1, 0] == 0.2
    assert z.is_contraction()


def test_lowering_on_constants_and_coordinates():
    s = poly_space(2, 3)
    one = s.constant([1.0])
    assert np.all(s.lowering(0, 0) @ one == 0)
    z11 = np.zeros(s.dim)
    z11[s.index((1, 0, 0))] = 1.0
    z12 = np.zeros(s.dim)
    z12[s.index((0, 1, 0))] = 1.0
    np.testing.assert_array_equal(s.lowering(0, 0) @ z11, 2 * one)
    np.testing.assert_array_equal(s.lowering(0, 1) @ z12, one)


def test_raising_on_trivial_constant_vanishes():
    s = poly_space(2, 3)
    one = s.constant([1.0])
    for k in range(2):
        for l in range(2):
            assert np.all(s.raising(k, l) @ one == 0)


def test_raising_on_module_constant():
    """E+_kl Psi0 = Z_kb U_lb Psi0 + Z_lb U_kb Psi0: the symmetrized Z (x) U action."""
    mod = defining_module(2)
    s = poly_space(2, 2, mod)
    u = mod.u_matrices()
    v = np.arange(1, s.d + 1, dtype=complex)
    psi = s.raising(0, 1) @ s.constant(v)
    Z = np.array([[0.3, 0.1j], [0.1j, -0.2]])
    got = s.evaluate(psi, Z)
    want = sum(Z[0, b] * (u[1, b] @ v) + Z[1, b] * (u[0, b] @ v) for b in range(2))
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_u_action_trivial_constant_and_euler():
    s = poly_space(2, 3)
    one = s.constant([1.0])
    assert np.all(s.u_action(0, 1) @ one == 0)
    z12sq = np.zeros(s.dim)
    z12sq[s.index((0, 2, 0))] = 1.0
    total = (s.u_action(0, 0) + s.u_action(1, 1)) @ z12sq
    # the trace of the Euler matrix counts each degree twice
    np.testing.assert_allclose(total, 4 * z12sq)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_homomorphism(n):
    assert homomorphism_residual(poly_space(n, 5), 3) < 1e-8
    assert homomorphism_residual(poly_space(n, 5, defining_module(n)), 3) < 1e-8


def test_homomorphism_needs_headroom():
    with pytest.raises(ValueError):
        homomorphism_residual(poly_space(1, 4), 3)


def test_kernel_at_origin_is_identity():
    u = defining_module(2).u_matrices()
    K = overlap_kernel(SymCoord(np.zeros((2, 2))), random_contraction(2, np.random.default_rng(1)), u)
    np.testing.assert_allclose(K, np.eye(u.shape[2]), atol=1e-14)


def test_kernel_hermiticity(rng):
    u = defining_module(2).u_matrices()
    for _ in range(5):
        a, b = random_contraction(2, rng), random_contraction(2, rng)
        lhs = overlap_kernel(a, b.conj(), u).conj().T
        rhs = overlap_kernel(b, a.conj(), u)
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_scalar_kernel_matches_module_kernel(rng):
    for _ in range(3):
        a, b = random_contraction(3, rng), random_contraction(3, rng)
        K = overlap_kernel(a, b, scalar_u(3, 1.5))[0, 0]
        assert abs(K - scalar_kernel(a, b, 1.5)) < 1e-12


def test_kernel_domain_guard():
    with pytest.raises(KernelDomainError):
        scalar_kernel(_c(1.0), _c(1.0), 1.0)


def test_gram_positive(rng):
    pts = [random_contraction(2, rng, 0.6) for _ in range(10)]
    G = kernel_gram(pts, scalar_u(2, 1.5))
    assert np.linalg.eigvalsh(0.5 * (G + G.conj().T)).min() > -1e-10


def test_resolution_density_at_origin_and_positive(rng):
    u = defining_module(1).u_matrices() + 2 * np.eye(2)[None, None]
    P0 = resolution_density(_c(0.0), u, 0.7)
    np.testing.assert_allclose(P0, 0.7 * np.eye(2), atol=1e-14)
    for _ in range(10):
        z = 0.9 * math.sqrt(rng.random()) * np.exp(2j * math.pi * rng.random())
        P = resolution_density(_c(z), u, 1.0)
        assert np.linalg.eigvalsh(0.5 * (P + P.conj().T)).min() > 0


@pytest.mark.parametrize("c", [2.0, 3.0, 5.0])
def test_resolution_of_identity(c):
    rep = resolution_check(c, 5)
    assert rep.residual < 1e-6
    assert rep.normalization == pytest.approx((c - 1) / math.pi, rel=1e-10)


def test_symbol_of_identity_is_kernel():
    c = 1.5
    s = PolySpace(1, 40, scalar_u(1, c))
    zp, w = _c(0.3 + 0.1j), _c(0.2 - 0.25j)
    assert abs(operator_symbol(None, s, zp, w)[0, 0] - scalar_kernel(zp, w, c)) < 1e-10


def test_symbol_of_u_action_at_origin_vanishes():
    s = poly_space(1, 6)
    sym = operator_symbol(s.u_action(0, 0), s, _c(0.0), _c(0.0))
    assert np.all(sym == 0)


def test_symbol_of_lowering_is_holomorphic_derivative():
    c = 1.5
    s = PolySpace(1, 40, scalar_u(1, c))
    zp, w = 0.3 + 0.1j, 0.2 - 0.25j
    sym = operator_symbol(s.lowering(0, 0), s, _c(zp), _c(w))[0, 0]
    h = 1e-5
    fd = (scalar_kernel(_c(zp + h), _c(w), c) - scalar_kernel(_c(zp - h), _c(w), c)) / (2 * h)
    # the diagonal entry of the symmetric derivative carries a factor 2
    assert abs(sym - 2 * fd) < 1e-8


def test_gauge_trace_invariance(rng):
    mod = defining_module(1)
    s = poly_space(1, 8, mod)
    sym = operator_symbol(s.u_action(0, 0), s, _c(0.2), _c(0.1j))
    gs = [mat_exp(rng.normal(size=(2, 2)) * 0.3) for _ in range(4)]
    assert gauge_trace_residual(sym, gs) < 1e-10


def test_coherent_series_trivial_module():
    s = poly_space(2, 4)
    out = coherent_series(s, np.eye(2) * 0.3, [1.0])
    np.testing.assert_array_equal(out, s.constant([1.0]))


def test_poly_wavefunction_evaluation():
    s = poly_space(1, 3)
    coeffs = np.zeros(s.dim, complex)
    coeffs[s.index((2,))] = 3.0
    psi = PolyWavefunction(s, coeffs)
    assert psi(np.array([[0.5]]))[0] == pytest.approx(0.75)
    assert psi.degree() == 2
    assert psi.apply(s.lowering(0, 0)).degree() == 1


def test_cayley_state_properties():
    mp = build_metaplectic(1, 30)
    v = np.zeros(mp.dim, complex)
    v[0] = 1.0
    np.testing.assert_array_equal(cayley_cs(_c(0.0), mp, v), v)
    errs = [np.linalg.norm(cayley_cs(_c(z), mp, v) - exp_cs(_c(z), mp, v)) for z in (0.08, 0.04, 0.02)]
    rates = [errs[k] / errs[k + 1] for k in range(2)]
    assert all(r > 7.0 for r in rates)


def test_cayley_matrix_inverse(rng):
    A = 0.1 * (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    assert np.max(np.abs(cayley_matrix(A) @ cayley_matrix(-A) - np.eye(4))) < 1e-12


def test_model_realization_is_noncompact():
    real = poly_space(1, 4).model_realization(build_basis(1))
    assert real.star == "noncompact" and real.dim == 5
