import math

import numpy as np
import pytest
import scipy.sparse as sp

from spqm.coherent_states import PolyWavefunction, poly_space
from spqm.evolution import (
    ChartError,
    ConvergenceGuard,
    GeneratorSpec,
    constant,
    evolve_ode,
    gauge_commutators,
    heisenberg_evolve,
    magnus_expand,
    magnus_path,
    nonunitary_probe,
    parabolic_drift,
    schrodinger_evolve,
    wei_norman,
)
from spqm.numerics import mat_exp
from spqm.rep_theory import build_fock, build_metaplectic
from spqm.sp_algebra import Realization, build_basis, defining_realization, random_element


def _mixed(n=1):
    b = build_basis(n)
    x = b.named("e1") + b.named("e1+")
    return GeneratorSpec([(math.cos, x), (constant(0.5), b.named("h1"))])


def test_constant_cartan_generator():
    b = build_basis(2)
    real = defining_realization(2)
    spec = GeneratorSpec([(constant(1.0), b.named("h1"))])
    grid = np.linspace(0.0, 1.0, 11)
    path = evolve_ode(spec, grid, real)
    H = real.dense(b.named("h1"))
    for t, h in zip(grid, path.mats):
        assert np.max(np.abs(h - mat_exp(-1j * t * H))) < 1e-10
    assert np.array_equal(path.mats[0], np.eye(4))


def test_commuting_time_dependent_generator():
    b = build_basis(2)
    real = defining_realization(2)
    spec = GeneratorSpec([(math.cos, b.named("h1")), (lambda t: t * t, b.named("h2"))])
    path = evolve_ode(spec, np.linspace(0.0, 1.0, 11), real)
    integral = math.sin(1.0) * real.dense(b.named("h1")) + real.dense(b.named("h2")) / 3
    assert np.max(np.abs(path.final() - mat_exp(-1j * integral))) < 1e-10


def test_random_self_adjoint_spec_stays_unitary(rng):
    b = build_basis(2)
    x, y = random_element(b, rng, "self_adjoint"), random_element(b, rng, "self_adjoint")
    spec = GeneratorSpec([(math.sin, x), (constant(0.3), y)])
    path = evolve_ode(spec, np.linspace(0.0, 2.0, 21), defining_realization(2))
    assert path.unitarity_drift() < 1e-9
    assert np.max(path.defects) < 1e-1


def test_self_adjoint_flag_is_checked():
    b = build_basis(1)
    with pytest.raises(ValueError):
        evolve_ode(GeneratorSpec([(constant(1.0), b.named("e1"))]), [0.0, 0.1], defining_realization(1))


def test_grid_must_increase():
    with pytest.raises(ValueError):
        evolve_ode(_mixed(), [0.0, 0.2, 0.1], defining_realization(1))


def test_magnus_first_order_exact_for_commuting():
    b = build_basis(2)
    real = defining_realization(2)
    spec = GeneratorSpec([(math.cos, b.named("h1")), (constant(0.4), b.named("h2"))])
    h = magnus_expand(spec, 0.8, 1, real)
    integral = math.sin(0.8) * real.dense(b.named("h1")) + 0.32 * real.dense(b.named("h2"))
    assert np.max(np.abs(h - mat_exp(-1j * integral))) < 1e-12


@pytest.mark.parametrize("n", [1, 4])
def test_magnus_fourth_order_against_ode(n):
    real = defining_realization(n)
    spec = _mixed(n)
    ode = evolve_ode(spec, np.linspace(0.0, 0.5, 11), real).final()
    assert np.max(np.abs(magnus_expand(spec, 0.5, 4, real, steps=8) - ode)) < 1e-8


def test_magnus_second_order_convergence():
    real = defining_realization(1)
    spec = _mixed()
    ts = [0.4, 0.2, 0.1]
    errs = [np.max(np.abs(magnus_expand(spec, t, 2, real) - evolve_ode(spec, np.linspace(0, t, 9), real).final())) for t in ts]
    slopes = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(slopes) >= 2.8


def test_magnus_guard_and_order_range():
    real = defining_realization(1)
    big = GeneratorSpec([(constant(5.0), build_basis(1).named("h1"))])
    with pytest.raises(ConvergenceGuard):
        magnus_expand(big, 1.0, 2, real)
    with pytest.raises(ValueError):
        magnus_expand(_mixed(), 0.1, 5, real)


def test_magnus_path_tags():
    path = magnus_path(_mixed(), np.linspace(0, 0.2, 3), 3, defining_realization(1))
    assert path.method == "magnus3" and len(path.mats) == 3


def test_wei_norman_single_cartan():
    b = build_basis(2)
    spec = GeneratorSpec([(math.cos, b.named("h2"))])
    wn = wei_norman(spec, np.linspace(0.0, 1.0, 11))
    k = wn.ordering.index(b.index[("h", 2)])
    assert abs(wn.gammas[-1, k] - math.sin(1.0)) < 1e-10
    others = np.delete(wn.gammas[-1], k)
    assert np.max(np.abs(others)) < 1e-14


def test_wei_norman_reconstruction_n1():
    real = defining_realization(1)
    spec = _mixed()
    grid = np.linspace(0.0, 1.0, 21)
    wn = wei_norman(spec, grid)
    ode = evolve_ode(spec, grid, real)
    for k in range(len(grid)):
        assert np.max(np.abs(wn.reconstruct(real, k) - ode.mats[k])) < 1e-8


def test_wei_norman_parabolic_support():
    b = build_basis(2)
    spec = GeneratorSpec([(constant(1.0), b.named("h1")), (constant(0.05), b.named("e1"))], self_adjoint=False)
    wn = wei_norman(spec, np.linspace(0.0, 0.5, 6))
    zm = [wn.ordering.index(k) for k in b.label_set("z_minus")]
    zp = [wn.ordering.index(k) for k in b.label_set("z_plus")]
    assert np.max(np.abs(wn.gammas[-1, zm])) < 1e-12
    assert np.max(np.abs(wn.gammas[-1, zp])) > 1e-3


def test_wei_norman_chart_failure():
    with pytest.raises(ChartError):
        wei_norman(_mixed(), np.linspace(0.0, 0.5, 3), max_condition=1.0 - 1e-9)


def test_wei_norman_ordering_validated():
    with pytest.raises(ValueError):
        wei_norman(_mixed(), [0.0, 0.1], ordering=[0, 1])


def test_heisenberg_commuting_is_constant():
    b = build_basis(2)
    spec = GeneratorSpec([(constant(0.7), b.named("h1"))])
    path = evolve_ode(spec, np.linspace(0, 1, 11), defining_realization(2))
    traj = heisenberg_evolve(b.named("h2"), path)
    for x in traj.values:
        assert np.max(np.abs(x - traj.values[0])) < 1e-12


def test_heisenberg_trace_and_derivative(rng):
    b = build_basis(2)
    real = defining_realization(2)
    x = random_element(b, rng)
    coarse = heisenberg_evolve(x, evolve_ode(_mixed(2), np.linspace(0, 1, 201), real))
    traj = heisenberg_evolve(x, evolve_ode(_mixed(2), np.linspace(0, 1, 401), real))
    tr0 = np.trace(traj.values[0] @ traj.values[0])
    assert max(abs(np.trace(v @ v) - tr0) for v in traj.values) < 1e-9
    # centred differences converge at second order
    ratio = coarse.finite_difference_defect() / traj.finite_difference_defect()
    assert 3.5 < ratio < 4.5


def test_second_order_identity():
    b = build_basis(2)
    spec = GeneratorSpec([(constant(1.0), b.named("e12") + b.named("e12+") + b.named("h2"))])
    path = evolve_ode(spec, np.linspace(0.0, 1.0, 2001), defining_realization(2))
    assert heisenberg_evolve(b.named("e11+"), path).second_order_defect() < 1e-6


def test_gauge_commutators():
    b = build_basis(3)
    real = defining_realization(3)
    grid = np.linspace(0, 1, 11)
    internal = evolve_ode(GeneratorSpec([(constant(1.0), b.named("u12") + b.named("u21") + b.named("h3"))]), grid, real)
    external = evolve_ode(GeneratorSpec([(constant(1.0), b.named("e23") + b.named("e23+"))]), grid, real)
    for name in ("e13+", "e23+", "e3+"):
        x = b.named(name)
        assert gauge_commutators(x, internal)[0] < 1e-9
        assert gauge_commutators(x, external)[1] < 1e-9
    assert gauge_commutators(b.named("e23+"), external)[0] > 1e-3


def test_schrodinger_trivial_constant_is_stationary():
    s = poly_space(2, 4)
    model = s.model_realization()
    b = model.basis
    spec = GeneratorSpec([(constant(1.0), b.named("u12") + b.named("h1"))], self_adjoint=False)
    psi = PolyWavefunction(s, s.constant([1.0]))
    traj, defect = schrodinger_evolve(psi, spec, np.linspace(0, 1, 5), model)
    assert np.max(np.abs(traj[-1].coeffs - psi.coeffs)) < 1e-14 and defect == 0


def test_schrodinger_cartan_phases():
    s = poly_space(1, 4)
    model = s.model_realization()
    spec = GeneratorSpec([(constant(1.0), model.basis.named("h1"))], self_adjoint=False)
    coeffs = np.zeros(s.dim, complex)
    coeffs[s.index((3,))] = 1.0
    traj, _ = schrodinger_evolve(PolyWavefunction(s, coeffs), spec, np.linspace(0, 1, 11), model, substeps=32)
    lam = 6.0  # Euler eigenvalue 2 * degree
    assert abs(traj[-1].coeffs[s.index((3,))] - np.exp(-1j * lam)) < 1e-9


def test_schrodinger_truncation_overflow():
    s = poly_space(1, 3)
    model = s.model_realization()
    spec = GeneratorSpec([(constant(1.0), model.basis.named("e1"))], self_adjoint=False)
    s_mod = type(s)(1, 3, np.ones((1, 1, 1, 1), complex))
    psi = PolyWavefunction(s_mod, s_mod.constant([1.0]))
    with pytest.raises(OverflowError):
        schrodinger_evolve(psi, spec, np.linspace(0, 1, 3), s_mod.model_realization())


def test_pictures_agree(rng):
    fock = build_fock(1, 6)
    b = fock.basis
    spec = GeneratorSpec([(lambda t: 1j * math.cos(t), b.named("e1") - b.named("e1+")), (constant(0.3), b.named("h1"))])
    grid = np.linspace(0, 0.6, 7)
    path = evolve_ode(spec, grid, fock, substeps=32)
    psi = rng.normal(size=fock.dim) + 1j * rng.normal(size=fock.dim)
    phi = rng.normal(size=fock.dim) + 1j * rng.normal(size=fock.dim)
    O = fock.dense(b.named("h1"))
    states, _ = schrodinger_evolve(psi, spec, grid, fock, substeps=32)
    phis, _ = schrodinger_evolve(phi, spec, grid, fock, substeps=32)
    Ot = heisenberg_evolve(O, path).values[-1]
    lhs = np.vdot(phi, Ot @ psi)
    rhs = np.vdot(phis[-1], O @ states[-1])
    assert abs(lhs - rhs) < 1e-7


def test_parabolic_drift():
    b = build_basis(2)
    real = defining_realization(2)
    grid = np.linspace(0, 0.5, 6)
    inside = GeneratorSpec([(constant(1.0), b.named("h1") + 0.3 * b.named("u12") + 0.2 * b.named("e1+"))], self_adjoint=False)
    assert parabolic_drift(evolve_ode(inside, grid, real)).max_leakage < 1e-12
    outside = GeneratorSpec([(constant(1.0), b.named("e1") + b.named("e1+"))])
    rep = parabolic_drift(evolve_ode(outside, grid, real))
    assert rep.leakage[0] < 1e-14 and np.all(rep.leakage[1:] > 0)


def test_parabolic_drift_gauge_covariance():
    b = build_basis(2)
    real = defining_realization(2)
    p = mat_exp(real.dense(0.4 * b.named("u12") + 0.3 * b.named("e2+")))
    pinv = np.linalg.inv(p)
    grid = np.linspace(0, 0.5, 6)
    for gen, zero in ((b.named("h1") + b.named("u21"), True), (b.named("e1") + b.named("e1+"), False)):
        spec = GeneratorSpec([(constant(1.0), gen)], self_adjoint=False)
        path = evolve_ode(spec, grid, real)
        conj = type(path)(path.times, [p @ h @ pinv for h in path.mats], path.method, real, spec)
        assert (parabolic_drift(conj).max_leakage < 1e-10) == zero


def test_nonunitary_probe():
    mp = build_metaplectic(1, 30)
    b = mp.basis
    vac = np.zeros(mp.dim, complex)
    vac[0] = 1.0
    grid = np.linspace(0, 0.05, 6)
    unitary = GeneratorSpec([(constant(1.0), b.named("h1"))])
    assert nonunitary_probe(unitary, grid, mp, vac).max_drift < 1e-9
    rates = []
    for eps in (0.1, -0.1):
        spec = GeneratorSpec([(constant(1.0), b.named("h1")), (constant(1j * eps), b.named("h1"))], self_adjoint=False)
        rates.append(nonunitary_probe(spec, grid, mp, vac).initial_rate())
    lam = 0.5
    assert rates[0] == pytest.approx(2 * 0.1 * lam, rel=1e-4)
    assert rates[1] == pytest.approx(-rates[0], rel=1e-9)


def test_sparse_realization_matches_dense_copy():
    fock = build_fock(1, 6)
    b = fock.basis
    spec = GeneratorSpec([(math.cos, b.named("e1") - b.named("e1+")), (constant(0.5), b.named("h1"))], self_adjoint=False)
    dense = Realization(b, [m.toarray() for m in fock.mats], name="dense copy")
    assert sp.issparse(fock.mats[0])
    grid = np.linspace(0, 0.3, 4)
    a, c = evolve_ode(spec, grid, fock), evolve_ode(spec, grid, dense)
    assert np.max(np.abs(a.final() - c.final())) < 1e-13
