
import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from spqm.coherent_states import PolySpace, PolyWavefunction, poly_space, scalar_u
from spqm.numerics import mat_exp
from spqm.observables import (
    DensityState,
    IncompleteBasis,
    PositivityLoss,
    ZeroNormState,
    adjoint_flow,
    blockwise_selfadjoint_residual,
    boltzmann_flow,
    build_phase_ops,
    classical_bracket,
    ehrenfest_flow,
    expectation_wedge,
    heisenberg_states,
    lagrangian_density,
    lorentzian_ground_state,
    mode_expansion_flow,
    number_density,
    pre_geometry,
    stress_energy,
    trace_operator,
    two_level_closed_form,
    vev_metric,
    vev_symplectic,
)
from spqm.rep_theory import build_fock, build_metaplectic
from spqm.sp_algebra import build_basis, defining_realization, random_element


@pytest.fixture(scope="module")
def ground():
    return lorentzian_ground_state()


def _vacuum(real):
    v = np.zeros(real.dim, complex)
    v[0] = 1.0
    return v


def test_pre_geometry_operator_content():
    real = build_fock(2, 4)
    pg = pre_geometry(real)
    assert pg.signature == (2, 0)
    assert abs(pg.E - sp.identity(real.dim)).max() == 0
    for i in (1, 2):
        d = pg.E_i[i].conj().T - pg.E_minus[i]
        assert abs(d).max() < 1e-14
    assert set(pg.E_ij) == {(1, 2), (2, 1)}


def test_ground_state_metric(ground):
    v = vev_metric(ground.vector, ground.realization)
    assert np.max(np.abs(v.eta - np.diag([1.0, 1.0, 1.0, -1.0]))) < 1e-15
    assert v.signature == (3, 1)
    assert v.asymmetry < 1e-12
    np.testing.assert_allclose(v.weights, ground.weight, atol=1e-14)


def test_ground_state_symplectic_vanishes(ground):
    om = vev_symplectic(ground.vector, ground.realization)
    assert np.max(np.abs(om)) == 0


def test_evolved_state_changes_metric(ground):
    real = ground.realization
    base = vev_metric(ground.vector, real)
    H = real.matrix(real.basis.named("u14") + real.basis.named("u41"))
    psi = expm_multiply(-0.7j * sp.csr_matrix(H), ground.vector)
    moved = vev_metric(psi, real, scale=base.scale)
    assert np.linalg.norm(moved.eta - base.eta) > 1e-3
    om = vev_symplectic(psi, real)
    assert np.max(np.abs(om + om.T)) == 0


def test_vacuum_metric_is_euclidean():
    mp = build_metaplectic(4, 4)
    v = vev_metric(_vacuum(mp), mp)
    assert v.signature == (4, 0)
    assert np.linalg.eigvalsh(v.eta).min() > 0


def test_zero_weight_scale_rejected():
    js = build_fock(2, 4)
    with pytest.raises(ZeroNormState):
        vev_metric(_vacuum(js), js)
    with pytest.raises(ZeroNormState):
        vev_metric(np.zeros(js.dim), js)


def test_symplectic_differs_from_wedge_on_excited_state(rng):
    js = build_fock(2, 4)
    psi = rng.normal(size=js.dim) + 1j * rng.normal(size=js.dim)
    om = vev_symplectic(psi, js)
    wedge = expectation_wedge(psi, js)
    assert abs(om[0, 1] - wedge[0, 1]) > 1e-6


@pytest.mark.parametrize("n", [1, 2, 3])
def test_phase_ops_hermiticity_and_recombination(n):
    b = build_basis(n)
    js = build_fock(n, 4)
    ops = build_phase_ops(b, js)
    assert max(ops.hermiticity().values()) < 1e-14
    for i in range(n):
        assert abs(ops.A[i][i]).max() == 0
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            e = js.generator(("e", i, j))
            assert abs(ops.Q[i - 1][j - 1] + ops.Pi[i - 1][j - 1] - e).max() == 0


def test_stress_energy_n1():
    b = build_basis(1)
    mp = build_metaplectic(1, 12)
    T = stress_energy(build_phase_ops(b, mp))
    assert blockwise_selfadjoint_residual(T) < 1e-10
    vac = _vacuum(mp)
    e0 = np.vdot(vac, trace_operator(T) @ vac)
    assert e0.real > 0 and abs(e0.imag) < 1e-14
    # U(e) = Id: the classical value at the identity is the ground-state VEV
    g = np.eye(mp.dim)
    assert np.vdot(g @ vac, trace_operator(T) @ (g @ vac)) == e0


def test_stress_energy_blockwise_selfadjoint_js():
    T = stress_energy(build_phase_ops(build_basis(2), build_fock(2, 4)))
    assert blockwise_selfadjoint_residual(T) < 1e-10


def test_classical_bracket_basic(rng):
    js = build_fock(1, 6)
    ops = build_phase_ops(build_basis(1), js)
    q, p = ops.Q_int[0][0], ops.Pi_int[0][0]
    psi = rng.normal(size=js.dim) + 1j * rng.normal(size=js.dim)
    assert abs(classical_bracket(q, q, psi)) < 1e-13
    assert abs(classical_bracket(q, p, psi) + classical_bracket(p, q, psi)) < 1e-12


def test_bracket_matches_heisenberg_derivative(rng):
    js = build_fock(1, 6)
    ops = build_phase_ops(build_basis(1), js)
    H = trace_operator(stress_energy(ops))
    q = ops.Q_int[0][0]
    psi = rng.normal(size=js.dim) + 1j * rng.normal(size=js.dim)
    psi /= np.linalg.norm(psi)
    h = 1e-4
    states = heisenberg_states(H, psi, np.array([-2 * h, -h, 0.0, h, 2 * h]))
    vals = [np.vdot(s, q @ s) for s in states]
    fd = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
    assert abs(fd - classical_bracket(q, H, psi)) < 1e-6


def test_ehrenfest_cartan_rotation(rng):
    js = build_fock(1, 6)
    b = build_basis(1)
    ops = build_phase_ops(b, js)
    H = js.generator(("h", 1))
    psi = rng.normal(size=js.dim) + 1j * rng.normal(size=js.dim)
    grid = np.linspace(0.0, 1.0, 201)
    tr = ehrenfest_flow(ops, H, psi, grid)
    e_vev = tr.q[:, 0, 0] + tr.pi[:, 0, 0] - tr.q[0, 0, 0] - tr.pi[0, 0, 0] + (tr.q[0, 0, 0] + tr.pi[0, 0, 0])
    nn = np.vdot(psi, psi).real
    h_vev = np.vdot(psi, H @ psi).real / nn
    pure_e = e_vev - h_vev
    np.testing.assert_allclose(pure_e, pure_e[0] * np.exp(-2j * grid), atol=1e-10)
    assert tr.energy_drift() < 1e-12


def test_ehrenfest_energy_and_defect(rng):
    js = build_fock(1, 4)
    ops = build_phase_ops(build_basis(1), js)
    H = trace_operator(stress_energy(ops))
    psi = rng.normal(size=js.dim) + 1j * rng.normal(size=js.dim)
    tr = ehrenfest_flow(ops, H, psi, np.linspace(0.0, 1.0, 1001))
    assert tr.energy_drift() < 1e-7
    assert tr.ehrenfest_defect() < 1e-6
    assert tr.flow_defect() < 1e-6


def test_ehrenfest_coarse_grid_is_reported():
    js = build_fock(1, 6)
    ops = build_phase_ops(build_basis(1), js)
    H = trace_operator(stress_energy(ops))
    psi = np.ones(js.dim, complex)
    with pytest.raises(RuntimeError):
        ehrenfest_flow(ops, H, psi, np.linspace(0.0, 5.0, 11))


def test_heisenberg_states_needs_equispaced_grid():
    with pytest.raises(ValueError):
        heisenberg_states(np.eye(2), np.ones(2), np.array([0.0, 0.1, 0.3]))


def test_mode_expansion_trivial_and_unitary(rng):
    d = 6
    T = np.diag(np.arange(d, dtype=float))
    c0 = rng.normal(size=d) + 1j * rng.normal(size=d)
    me = mode_expansion_flow(c0, np.zeros((d, d)), T, np.linspace(0, 3, 31))
    assert np.max(np.abs(me.coeffs - c0)) < 1e-12
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    me = mode_expansion_flow(c0, 0.5 * (a + a.conj().T), T, np.linspace(0, 3, 31))
    assert me.norm_drift() < 1e-8


def test_two_level_rabi():
    E, g = (1.0, -0.5), 0.3 - 0.2j
    c0 = np.array([0.6, 0.8j])
    me = mode_expansion_flow(c0, np.array([[0, g], [np.conj(g), 0]]), np.diag(E), np.linspace(0, 8, 81))
    # eigenvector order of T is ascending, so map back before comparing
    for t, c in zip(me.times, me.coeffs):
        want = two_level_closed_form(E, g, me.modes @ c0, t)
        assert np.max(np.abs(me.modes @ c - want)) < 1e-7


def test_mode_expansion_rejects_defective_t():
    with pytest.raises(IncompleteBasis):
        mode_expansion_flow([1, 0], np.zeros((2, 2)), np.array([[0.0, 1.0], [0.0, 0.0]]), [0, 1])


def test_density_state_validation():
    with pytest.raises(ValueError):
        DensityState(np.eye(2))
    with pytest.raises(ValueError):
        DensityState(np.diag([1.5, -0.5]))
    assert abs(np.trace(DensityState.pure([1, 1j]).rho) - 1) < 1e-15


def test_boltzmann_stationary_and_pure(rng):
    d = 5
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = a + a.conj().T
    w, V = np.linalg.eigh(H)
    rho = DensityState(V @ np.diag([0.4, 0.3, 0.2, 0.1, 0.0]) @ V.conj().T)
    bt = boltzmann_flow(rho, H, np.linspace(0, 2, 11))
    assert np.max(np.abs(bt.rho - rho.rho)) < 1e-10
    assert bt.trace_drift() < 1e-10 and np.max(np.abs(bt.f)) < 1e-12
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    grid = np.linspace(0, 2, 11)
    bt = boltzmann_flow(DensityState.pure(psi), H, grid)
    states = np.array([mat_exp(-1j * t * H) @ psi for t in grid])
    assert bt.fidelity(states).min() >= 1 - 1e-8


def test_boltzmann_positivity_guard():
    rho = DensityState(np.diag([1.0, 0.0]))
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(PositivityLoss):
        boltzmann_flow(rho, H, np.linspace(0, 1, 5), positivity_tol=-1.0, rtol=1e-3, atol=1e-3)


def test_lagrangian_density(rng):
    b = build_basis(2)
    H = random_element(b, rng, "self_adjoint", 0.5)
    x = random_element(b, rng)
    times = np.linspace(0, 1, 201)
    traj = adjoint_flow(x, H, times)
    assert np.max(np.abs(lagrangian_density(traj, times, H))) < 1e-8
    delta = np.array([np.sin(3 * t) * b.named("u12").coeffs for t in times])
    small = [np.max(np.abs(lagrangian_density(traj + eps * delta, times, H))) for eps in (1e-2, 1e-3)]
    assert 80 < small[0] / small[1] < 120
    c = b.named("h1")
    flat = np.tile(c.coeffs, (len(times), 1))
    assert np.max(np.abs(lagrangian_density(flat, times, b.named("h2")))) < 1e-14
    with pytest.raises(ValueError):
        lagrangian_density(traj[:3], times[:3], H)


def test_number_density():
    c = 3.0
    s = PolySpace(1, 4, scalar_u(1, c))
    mono = []
    for k in range(3):
        v = np.zeros(s.dim, complex)
        v[s.index((k,))] = 1.0
        mono.append(PolyWavefunction(s, v))
    # squared norm of z^k is k!/(c)_k
    assert number_density(mono[2], mono[2]) == pytest.approx(2 / 12, abs=1e-12)
    assert abs(number_density(mono[1], mono[2])) < 1e-6
    mix = PolyWavefunction(s, mono[0].coeffs + (0.3 + 0.4j) * mono[1].coeffs)
    n_mm = number_density(mix, mix)
    assert abs(n_mm.imag) < 1e-12 and n_mm.real >= 0
    assert number_density(mix, mono[1]) == pytest.approx(np.conj(number_density(mono[1], mix)), abs=1e-12)


def test_number_density_guards():
    with pytest.raises(ValueError):
        number_density(*(2 * [PolyWavefunction(poly_space(2, 2), np.zeros(poly_space(2, 2).dim))]))
    s = PolySpace(1, 2, scalar_u(1, 0.5))
    with pytest.raises(ValueError):
        number_density(PolyWavefunction(s, s.constant([1.0])), PolyWavefunction(s, s.constant([1.0])))


def test_defining_rep_phase_ops_square():
    ops = build_phase_ops(build_basis(2), defining_realization(2))
    assert len(ops.Q) == 2 and ops.Q[0][0].shape == (4, 4)
    with pytest.raises(ValueError):
        build_phase_ops(build_basis(3), defining_realization(2))
