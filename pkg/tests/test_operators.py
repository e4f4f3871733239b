import math

import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from ccnet.lattice import BOX, TORUS, BoxSpec, GeometryError, Site
from ccnet.operators import (PhaseAngle, build_complement_s, build_decoupled,
                             build_operator, build_s, build_u, load_operator,
                             phi_from_energy, sample_disorder, save_operator,
                             unitarity_defect, wall_term)


def op_norm(mat) -> float:
    return float(scipy.linalg.svdvals(np.asarray(mat.todense() if hasattr(mat, "todense") else mat))[0])


# -- disorder -------------------------------------------------------------------

def test_disorder_unit_modulus_and_determinism():
    box = BoxSpec(2, 2)
    f1 = sample_disorder(123, box)
    f2 = sample_disorder(123, box)
    assert np.abs(np.abs(f1.phases) - 1.0).max() <= 1e-12
    assert np.array_equal(f1.phases, f2.phases)
    f3 = sample_disorder(124, box)
    assert not np.array_equal(f1.phases, f3.phases)


def test_disorder_angles_uniform_ks():
    # 1e5 angles against uniform[0, 2pi); 1% KS critical value ~ 1.63/sqrt(n)
    box = BoxSpec(L1=50, L2=25, mode=BOX)  # 20000 sites
    angles = np.concatenate([
        np.angle(sample_disorder((9, k), box).phases) % (2 * np.pi)
        for k in range(5)])
    assert len(angles) == 100_000
    stat = scipy.stats.kstest(angles / (2 * np.pi), "uniform").statistic
    assert stat < 1.63 / math.sqrt(len(angles))


def test_disorder_covers_subwindow():
    amb = BoxSpec(3, 3, mode=TORUS)
    f = sample_disorder(1, amb)
    inner = BoxSpec(1, 1)
    assert f.covers(inner.sites())
    assert f.phase(Site(0, 0)) == f.phases[amb.index_of(Site(0, 0))]


# -- angles ---------------------------------------------------------------------

def test_phase_angle_identity():
    for phi in (0.0, 0.3, 1.2):
        a = PhaseAngle(phi)
        assert a.t ** 2 + a.r ** 2 == pytest.approx(1.0, abs=1e-15)


def test_phi_from_energy():
    assert phi_from_energy(0.0).phi == pytest.approx(math.pi / 4, abs=1e-12)
    assert phi_from_energy(math.log(3)).phi == pytest.approx(math.pi / 3, abs=1e-12)
    assert phi_from_energy(1e4).phi == pytest.approx(math.pi / 2, abs=1e-8)
    assert 0.0 <= phi_from_energy(-40.0).phi < 0.01


# -- deterministic part S -------------------------------------------------------

def column_action(op, site):
    col = op.matrix[:, op.sites.index(site)].toarray().ravel()
    return {tuple(op.sites.site(i)): v for i, v in enumerate(col) if v != 0}


def test_s_action_at_origin():
    box = BoxSpec(2, 2)  # (0,0) away from every wall
    act0 = column_action(build_s(0.0, box), Site(0, 0))
    assert set(act0) == {(1, 0)}
    assert act0[(1, 0)] == pytest.approx(1.0)

    act_half = column_action(build_s(math.pi / 2, box), Site(0, 0))
    assert act_half[(0, -1)] == pytest.approx(1j)
    assert abs(act_half.get((1, 0), 0.0)) < 1e-15

    phi = 0.8
    act = column_action(build_s(phi, box), Site(0, 0))
    assert act[(1, 0)] == pytest.approx(math.cos(phi))
    assert act[(0, -1)] == pytest.approx(1j * math.sin(phi))


def test_wall_redirect_on_top_row():
    # clockwise exit on the top row gets folded into the ccw hop, weight 1
    box = BoxSpec(1, 1)  # window [-2,1] x [0,3]
    act = column_action(build_s(0.8, box), Site(1, 3))
    assert set(act) == {(0, 3)}
    assert act[(0, 3)] == pytest.approx(1.0)


def test_wall_term_explicit():
    assert wall_term(0.0, BoxSpec(2, 1)).nnz == 0
    T = wall_term(0.4, BoxSpec(2, 1))
    assert T.nnz == 2 * (2 * 2) + 2 * (2 * 1)  # 12 entries for L=(2,1)
    assert np.unique(np.round(T.data, 15)).size == 1
    assert T.data[0] == pytest.approx(1.0 - math.cos(0.4))


@pytest.mark.parametrize("phi", [0.01, 0.1, 0.5, 1.0, math.pi / 2])
def test_wall_term_norm_bound(phi):
    for L in [(1, 1), (2, 1), (2, 2)]:
        T = wall_term(phi, BoxSpec(*L))
        assert op_norm(T) <= 2 * abs(1 - math.cos(phi)) + 1e-12


def test_walls_equal_chopped_s_plus_wall_term():
    # independent assembly: chop the wall-free operator to the window and
    # add the explicit wall sum
    box = BoxSpec(2, 1)
    big = BoxSpec(6, 6, mode=TORUS)
    for phi in (0.0, 0.37, 1.1):
        s_big = build_s(phi, big)
        chop = np.zeros((box.nsites, box.nsites), dtype=complex)
        for i, si in enumerate(box.index_map()):
            for j, sj in enumerate(box.index_map()):
                chop[i, j] = s_big.matrix[big.index_of(si), big.index_of(sj)]
        walls = build_s(phi, box).matrix.toarray()
        assert np.array_equal(walls, chop + wall_term(phi, box).toarray())


def test_s_unitary_all_modes():
    rng = np.random.default_rng(5)
    for _ in range(10):
        L1, L2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        phi = float(rng.uniform(0, math.pi))
        assert unitarity_defect(build_s(phi, BoxSpec(L1, L2)).matrix) <= 1e-12
        assert unitarity_defect(build_s(phi, BoxSpec(L1, L2, mode=TORUS)).matrix) <= 1e-12
        strip = BoxSpec(L1=1, L2=L2, mode="strip", length=4 * L1 + 2)
        assert unitarity_defect(build_s(phi, strip).matrix) <= 1e-12


def test_strip_walls_only_top_and_bottom():
    # wall redirects (weight-1 columns) appear exactly on the outer rows
    strip = BoxSpec(L1=1, L2=1, mode="strip", length=8)
    op = build_s(0.5, strip)
    (y0, y1) = strip.y_range
    for j, site in enumerate(op.sites):
        col = op.matrix[:, j]
        if col.nnz == 1:
            assert site.n in (y0, y1)
        else:
            assert col.nnz == 2


# -- random operator U ----------------------------------------------------------

def test_u_equals_s_for_trivial_disorder():
    box = BoxSpec(2, 2)
    s_op = build_s(0.5, box)
    field = sample_disorder(0, box)
    trivial = type(field)(seed=None, box=box, phases=np.ones(box.nsites, complex))
    u = build_u(trivial, s_op)
    assert (u.matrix != s_op.matrix).nnz == 0


def test_u_unitary_random_cases():
    rng = np.random.default_rng(17)
    for _ in range(10):
        L1, L2 = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        phi = float(rng.uniform(0, math.pi / 2))
        seed = int(rng.integers(0, 2 ** 32))
        for mode in (BOX, TORUS):
            op = build_operator(phi, BoxSpec(L1, L2, mode=mode), seed)
            assert unitarity_defect(op.matrix) <= 1e-10


@pytest.mark.parametrize("phi", [0.01, 0.1, 0.5])
def test_u_phi_continuity_bound(phi):
    box = BoxSpec(2, 2)
    field = sample_disorder(31, box)
    u_phi = build_u(field, build_s(phi, box)).to_dense()
    u_0 = build_u(field, build_s(0.0, box)).to_dense()
    assert op_norm(u_phi - u_0) <= 4 * abs(phi)


def test_band_structure_exhaustive():
    box = BoxSpec(2, 2)
    op = build_operator(0.7, box, 3)
    dense = op.to_dense()
    for i, a in enumerate(box.index_map()):
        for j, b in enumerate(box.index_map()):
            if max(abs(a.m - b.m), abs(a.n - b.n)) > 1:
                assert dense[i, j] == 0
    cols = np.diff(op.matrix.indptr)
    assert cols.max() <= 2


def test_translation_covariance_on_torus():
    torus = BoxSpec(2, 2, mode=TORUS)
    field = sample_disorder(41, torus)
    op = build_u(field, build_s(0.6, torus))
    nu = (1, 0)
    shifted = field.translate(nu)
    op_shifted = build_u(shifted, build_s(0.6, torus))
    # conjugation by the shift-by-2*nu permutation
    n = torus.nsites
    perm = np.zeros((n, n))
    for i, s in enumerate(torus.index_map()):
        target = torus.wrap(Site(s.m - 2 * nu[0], s.n - 2 * nu[1]))
        perm[torus.index_of(target), i] = 1.0
    lhs = perm @ op.to_dense() @ perm.T
    assert np.array_equal(lhs, op_shifted.to_dense())


# -- decoupling -----------------------------------------------------------------

def decoupling_parts(phi, L1, L2, seed):
    inner = BoxSpec(L1, L2)
    ambient = BoxSpec(L1 + 2, L2 + 2, mode=TORUS)
    field = sample_disorder(seed, ambient)
    full = build_u(field, build_s(phi, ambient))
    dec, v = build_decoupled(field, phi, inner, ambient)
    return full, dec, v


def test_decoupling_identity_exact():
    full, dec, v = decoupling_parts(0.3, 2, 2, 8)
    diff = (full.matrix - dec.matrix - v.matrix)
    assert diff.nnz == 0 or np.abs(diff.data).max() <= 1e-14


def test_coupling_vanishes_at_phi_zero():
    _, _, v = decoupling_parts(0.0, 2, 2, 8)
    assert v.nnz == 0


def test_coupling_size_linear_and_entries_small():
    phi = 0.05
    for L in (1, 2, 4):
        _, _, v = decoupling_parts(phi, L, L, 13)
        assert v.nnz == 16 * (L + L)
        assert v.max_entry() <= 4 * phi


def test_coupling_supported_at_the_wall():
    full, dec, v = decoupling_parts(0.4, 2, 2, 21)
    inner = v.inner
    wall = inner.boundary()
    outside_ring = {s for s in v.ambient.sites()
                    if not inner.contains(s) and
                    any(inner.contains(t) for t in
                        [(s.m + dm, s.n + dn) for dm in (-1, 0, 1)
                         for dn in (-1, 0, 1)])}
    support = wall | outside_ring
    coo = v.matrix.tocoo()
    for r, c in zip(coo.row, coo.col):
        assert v.sites.site(r) in support
        assert v.sites.site(c) in support
    # interior projections annihilate V on both sides
    interior = inner.interior()
    idx = [v.ambient.index_of(s) for s in interior]
    dense = v.matrix.toarray()
    assert np.abs(dense[idx, :]).max() == 0
    assert np.abs(dense[:, idx]).max() == 0


def test_decoupling_identity_at_dimension_1024():
    inner = BoxSpec(6, 6)
    ambient = BoxSpec(8, 8, mode=TORUS)  # 32 x 32 = 1024 sites
    field = sample_disorder(2, ambient)
    full = build_u(field, build_s(0.2, ambient))
    dec, v = build_decoupled(field, 0.2, inner, ambient)
    diff = full.matrix - dec.matrix - v.matrix
    assert diff.nnz == 0 or np.abs(diff.data).max() <= 1e-14
    assert v.nnz == 16 * 12


def test_decoupled_and_complement_unitary():
    inner = BoxSpec(2, 1)
    ambient = BoxSpec(3, 2, mode=TORUS)
    field = sample_disorder(5, ambient)
    comp = build_u(field, build_complement_s(0.9, inner, ambient))
    assert comp.dim == ambient.nsites - inner.nsites
    assert unitarity_defect(comp.matrix) <= 1e-10
    dec, _ = build_decoupled(field, 0.9, inner, ambient)
    assert unitarity_defect(dec.matrix) <= 1e-10


def test_decoupling_margin_enforced():
    inner = BoxSpec(2, 2)
    ambient = BoxSpec(2, 2, mode=TORUS)
    field = sample_disorder(1, ambient)
    with pytest.raises(GeometryError):
        build_decoupled(field, 0.1, inner, ambient)


def test_u_requires_covering_disorder():
    small = BoxSpec(1, 1)
    big = BoxSpec(2, 2)
    field = sample_disorder(2, small)
    with pytest.raises(GeometryError):
        build_u(field, build_s(0.1, big))


# -- serialization ----------------------------------------------------------------

def test_sparse_triplet_roundtrip(tmp_path):
    op = build_operator(0.37, BoxSpec(2, 1), 99)
    path = tmp_path / "op.txt"
    save_operator(op, path)
    mat, header = load_operator(path)
    assert header["dimension"] == op.dim
    assert header["phi"] == 0.37
    assert header["boundary"] == "walls"
    assert header["seed"] == 99
    assert header["geometry"] == op.geometry
    assert (mat != op.matrix).nnz == 0
