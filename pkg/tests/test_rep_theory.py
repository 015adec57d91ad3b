from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from spqm.rep_theory import (
    CutoffTooSmall,
    InducedRepSpec,
    RealizationError,
    adjoint_module,
    build_fock,
    build_metaplectic,
    ccr_residual,
    defining_module,
    fock_block,
    full_module,
    gl_dimension,
    induction_normalization,
    lowest_weight_vectors,
    modular_function,
    particle_spectrum,
    product_vector,
    signed_permutation_orbit,
    tensor_realization,
    trivial_module,
    u4_lowest_module,
    weight_decompose,
    weyl_dimension,
)
from spqm.sp_algebra import build_basis, relation_residuals, structure_constants


def test_single_mode_ccr():
    assert ccr_residual(build_fock(1, 6)) < 1e-12
    assert ccr_residual(build_fock(2, 5, 2)) < 1e-12


def test_cutoff_guard():
    with pytest.raises(CutoffTooSmall):
        build_fock(1, 3)
    with pytest.raises(CutoffTooSmall):
        build_metaplectic(1, 2)


def test_cartan_kills_vacuum():
    fock = build_fock(2, 6)
    vac = np.zeros(fock.dim)
    vac[fock.fock.index_of([0] * 4)] = 1.0
    for i in (1, 2):
        assert np.max(np.abs(fock.generator(("h", i)) @ vac)) == 0


def test_fock_bracket_e_edagger():
    fock = build_fock(1, 8)
    inner = fock.interior()
    e, f, h = (fock.generator(lab) for lab in (("e", 1, 1), ("f", 1, 1), ("h", 1)))
    comm = (e @ f - f @ e - 4 * h)[:, inner]
    assert np.max(np.abs(comm.toarray())) < 1e-12


@pytest.mark.parametrize("builder", [build_fock, build_metaplectic])
def test_interior_constants_match_abstract(builder):
    real = builder(2, 6)
    res = relation_residuals(real, real.interior(), transposed_ee=True)
    assert max(res.values()) < 1e-9
    sc = structure_constants(build_basis(2))
    inner = real.interior()
    mats = real.mats
    for a in range(len(mats)):
        for b in range(a + 1, len(mats)):
            comm = (mats[a] @ mats[b] - mats[b] @ mats[a])[:, inner]
            want = sum(sc.tensor[a, b, k] * mats[k] for k in np.flatnonzero(sc.tensor[a, b]))
            diff = comm - (want[:, inner] if not isinstance(want, int) else 0)
            diff = sp.csr_matrix(diff)
            assert diff.nnz == 0 or np.max(np.abs(diff.data)) < 1e-9


def test_defining_weights():
    blocks = weight_decompose(defining_module(4))
    weights = [w for w, v in blocks]
    assert len(weights) == 8 and all(v.shape[1] == 1 for _, v in blocks)
    assert set(weights) == signed_permutation_orbit((1, 0, 0, 0))


def test_trivial_module_weight():
    assert [w for w, _ in weight_decompose(trivial_module(4))] == [(0, 0, 0, 0)]


def test_adjoint_zero_weight_multiplicity():
    blocks = dict(weight_decompose(adjoint_module(4)))
    assert blocks[(0, 0, 0, 0)].shape[1] == 4
    assert sum(v.shape[1] for v in blocks.values()) == 36


@pytest.mark.parametrize(
    "labels,dim",
    [((0, 0, 0, 0), 1), ((1, 0, 0, 0), 8), ((0, 1, 0, 0), 27), ((0, 0, 1, 0), 48), ((0, 0, 0, 1), 42), ((2, 0, 0, 0), 36)],
)
def test_weyl_dimension(labels, dim):
    assert weyl_dimension(labels, 4) == dim


def test_weyl_dimension_rejects_non_dominant():
    with pytest.raises(ValueError):
        weyl_dimension((1, -1, 0, 0), 4)


def test_gl_dimension():
    assert gl_dimension((1, 0, 0, 0)) == 4
    assert gl_dimension((1, 1, 0, 0)) == 6
    assert gl_dimension((2, 2, 2, 2)) == 1
    assert gl_dimension((2, 1, 0)) == 8


def test_degenerate_partition_is_one_dimensional():
    mp = build_metaplectic(2, 6)
    mod = u4_lowest_module(mp, ())
    assert mod.dim == 1


def test_one_box_partition_has_dimension_n():
    fock = build_fock(4, 4)
    mod = u4_lowest_module(fock, (1,))
    assert mod.dim == 4 == gl_dimension((1, 0, 0, 0))
    spec = InducedRepSpec(mod.partition, mod)
    assert spec.parabolic_leakage() < 1e-8


def test_lowest_weight_annihilated_by_lowering():
    fock = build_fock(2, 6)
    vecs = lowest_weight_vectors(fock, fock.lowest_weight_for((1,)))
    assert vecs.shape[1] >= 1
    for k in fock.basis.label_set("g_minus"):
        assert np.max(np.abs(fock.mats[k] @ vecs)) < 1e-9


def test_missing_weight_raises():
    with pytest.raises(CutoffTooSmall):
        lowest_weight_vectors(build_fock(1, 4), (7,))


def test_modular_functions():
    b = build_basis(3)
    assert modular_function(b.named("h1") * 0.7) == pytest.approx(1.0, abs=1e-12)
    s = 0.3
    sc = structure_constants(b)
    pos = b.label_set("parabolic")
    tr = np.trace(sc.ad(b.named("h1"))[np.ix_(pos, pos)]).real
    assert tr != 0
    dp = modular_function(b.named("h1") * s, "parabolic")
    assert dp == pytest.approx(np.exp(s * tr), rel=1e-12)
    assert induction_normalization(b.named("h1") * s) ** 2 == pytest.approx(dp, rel=1e-12)
    with pytest.raises(ValueError):
        modular_function(b.named("e1"), "parabolic")


def test_particle_spectra():
    assert particle_spectrum(trivial_module(4)) == [((0, 0, 0, 0), (0.0, 0.0, 0.0, 0.0))]
    defining = particle_spectrum(defining_module(4))
    assert len(defining) == 8
    assert all(sorted(c) == [0.0, 0.0, 0.0, 1.0] for _, c in defining)
    adj = particle_spectrum(adjoint_module(4))
    neutral = [w for w, c in adj if not any(c)]
    assert len(neutral) == 4 and len(adj) - len(neutral) == 32


def test_metaplectic_weights_are_half_integral():
    mp = build_metaplectic(1, 6)
    blocks = weight_decompose(full_module(mp))
    assert blocks[0][0] == (Fraction(1, 2),)


def test_fock_block_total_occupation():
    fock = build_fock(1, 6)
    block = fock_block(fock, 2)
    assert block.dim == 3


def test_tensor_realization_is_a_representation():
    a, b = build_fock(1, 4), build_metaplectic(1, 6)
    t = tensor_realization(a, b)
    assert t.dim == a.dim * b.dim and t.star == "mixed"
    x = product_vector(np.eye(a.dim)[0], np.eye(b.dim)[0])
    h = t.generator(("h", 1))
    assert np.allclose(h @ x, 0.5 * x)
    with pytest.raises(RealizationError):
        tensor_realization(a, build_fock(2, 4))
