import cmath
import math

import numpy as np
import pytest
import scipy.sparse

from ccnet.lattice import BoxSpec, GeometryError, Site, block_of, block_sites, same_block
from ccnet.operators import (NetworkOperator, build_operator, build_s, build_u,
                             sample_disorder)
from ccnet.resolvent import (ResolventSolver, SpectralParameter,
                             contraction_check, correlator, correlator_row,
                             fit_decay, fractional_moment_mc, resolvent_element)
from ccnet.spectral import diagonalize

Z = 1.2 * cmath.exp(0.7j)


def identity_operator(box):
    mat = scipy.sparse.identity(box.nsites, dtype=np.complex128, format="csc")
    return NetworkOperator(geometry=box, phi=0.0, boundary="walls",
                           matrix=mat, sites=box.index_map())


def test_spectral_parameter():
    zp = SpectralParameter(rho=1.1, theta=0.5)
    assert abs(zp.z) == pytest.approx(1.1)
    assert zp.circle_distance == pytest.approx(0.1)
    with pytest.raises(ValueError):
        SpectralParameter(rho=1.0, theta=0.0)
    back = SpectralParameter.from_complex(zp.z)
    assert back.rho == pytest.approx(1.1)


def test_resolvent_of_identity():
    box = BoxSpec(1, 1)
    op = identity_operator(box)
    for mu in [Site(0, 0), Site(1, 2)]:
        assert resolvent_element(op, 2.0, mu, mu) == pytest.approx(-1.0)
    assert resolvent_element(op, 2.0, Site(0, 0), Site(1, 0)) == 0.0


def test_phi0_resolvent_blocks():
    box = BoxSpec(1, 1)
    field = sample_disorder(31, box)
    op = build_u(field, build_s(0.0, box))
    sol = ResolventSolver(op, Z)
    col = sol.column(Site(0, 0))
    # vanishes off the block of nu
    for s in box.sites():
        if not same_block(s, Site(0, 0)):
            assert abs(col[box.index_of(s)]) <= 1e-12
    # geometric series within the block: R = (U^3 + z U^2 + z^2 U + z^3)/(d - z^4)
    blk = block_of(Site(0, 0))
    idx = [box.index_of(s) for s in block_sites(blk)]
    ub = op.to_dense()[np.ix_(idx, idx)]
    d = np.prod([field.phase(s) for s in block_sites(blk)])
    rb = (np.linalg.matrix_power(ub, 3) + Z * np.linalg.matrix_power(ub, 2)
          + Z ** 2 * ub + Z ** 3 * np.eye(4)) / (d - Z ** 4)
    got = np.array([col[i] for i in idx])
    assert np.abs(rb[:, 0] - got).max() <= 1e-10


def test_solver_residual_certified():
    op = build_operator(0.4, BoxSpec(2, 2), 5)
    sol = ResolventSolver(op, 1.0 + 1e-6)
    col = sol.column(Site(0, 0))
    assert np.isfinite(col).all()


def full_resolvent(op, z):
    return np.linalg.inv(op.to_dense() - z * np.eye(op.dim))


def test_resolvent_identity():
    box = BoxSpec(2, 2)
    for seed in range(3):
        field = sample_disorder(seed, box)
        u0 = build_u(field, build_s(0.0, box))
        up = build_u(field, build_s(0.3, box))
        r0 = full_resolvent(u0, Z)
        rp = full_resolvent(up, Z)
        residue = rp - r0 + rp @ (up.to_dense() - u0.to_dense()) @ r0
        assert np.abs(residue).max() <= 1e-9


def test_first_order_bound_far_pairs():
    # |R(phi)_{mu nu}| <= c |phi| / (dist(z, sigma(0)) dist(z, sigma(phi)))
    # for |mu-nu|_inf >= 2 and mu !~ nu; c = 16 covers the finite site sum
    box = BoxSpec(2, 2)
    phi = 0.05
    worst = 0.0
    for seed in range(5):
        field = sample_disorder(seed, box)
        u0 = build_u(field, build_s(0.0, box))
        up = build_u(field, build_s(phi, box))
        d0 = diagonalize(u0).distance(Z)
        dp = diagonalize(up).distance(Z)
        rp = full_resolvent(up, Z)
        for mu in [Site(0, 0)]:
            for nu in [Site(2, 2), Site(-2, 2), Site(3, 3), Site(-4, 0)]:
                assert not same_block(mu, nu)
                lhs = abs(rp[box.index_of(mu), box.index_of(nu)])
                worst = max(worst, lhs * d0 * dp / phi)
    assert worst <= 16.0, f"realized constant {worst:.3f} exceeds the site-sum bound"


def test_fractional_moment_vanishes_off_block_at_phi0():
    box = BoxSpec(2, 2)
    pairs = [(Site(0, 0), Site(3, 3)), (Site(0, 0), Site(-3, 2))]
    records = fractional_moment_mc(0.0, Z, 0.5, pairs, box, 100, 2)
    for rec in records:
        assert rec.estimate <= 1e-6


def test_fractional_moment_finite_near_circle():
    box = BoxSpec(2, 2)
    z = (1 + 1e-6) * cmath.exp(0.3j)
    records = fractional_moment_mc(0.3, z, 0.5, [(Site(0, 0), Site(2, 2))],
                                   box, 100, 7)
    rec = records[0]
    assert math.isfinite(rec.estimate) and rec.estimate >= 0
    assert rec.trials + rec.dropped == 100


def test_fractional_moment_shrinks_with_phi():
    # far pairs: two decades in phi buy at least one decade in the moment
    box = BoxSpec(3, 3)
    z = 1.1 * cmath.exp(0.5j)
    pair = [(Site(0, 0), Site(4, 4))]
    est = {phi: fractional_moment_mc(phi, z, 0.5, pair, box, 100, 99)[0].estimate
           for phi in (1e-2, 1e-4)}
    assert est[1e-4] * 10 < est[1e-2]


def test_fractional_moment_validates_input():
    box = BoxSpec(1, 1)
    with pytest.raises(ValueError):
        fractional_moment_mc(0.1, Z, 1.5, [((0, 0), (1, 1))], box, 100, 0)
    with pytest.raises(ValueError):
        fractional_moment_mc(0.1, Z, 0.5, [((0, 0), (1, 1))], box, 10, 0)


def test_correlator_properties():
    op = build_operator(0.4, BoxSpec(2, 2), 11)
    q = correlator(op)
    assert np.abs(np.diag(q) - 1.0).max() <= 1e-10
    assert np.abs(q - q.T).max() <= 1e-12
    assert q.min() >= 0.0 and q.max() <= 1.0 + 1e-10
    row = correlator_row(diagonalize(op), Site(0, 0))
    assert np.abs(row - q[op.sites.index(Site(0, 0))]).max() <= 1e-12


def test_correlator_row_on_compressed_index_set():
    # complement restrictions index a site subset; the row lookup must use
    # the operator's own map, not the ambient window's
    from ccnet.operators import build_complement_s, build_u
    inner = BoxSpec(1, 1)
    ambient = BoxSpec(3, 3, mode="torus")
    op = build_u(sample_disorder(6, ambient),
                 build_complement_s(0.4, inner, ambient))
    probe = Site(4, 4)  # outside the inner box
    assert probe in op.sites
    row = correlator_row(op, probe)
    q = correlator(op)
    assert np.abs(row - q[op.sites.index(probe)]).max() <= 1e-12


def test_correlator_blocks_at_phi0():
    box = BoxSpec(2, 2)
    field = sample_disorder(3, box)
    q = correlator(build_u(field, build_s(0.0, box)))
    imap = box.index_map()
    for a in box.sites():
        for b in box.sites():
            if not same_block(a, b):
                assert q[imap.index(a), imap.index(b)] <= 1e-12


def test_correlator_dominates_matrix_powers():
    op = build_operator(0.8, BoxSpec(1, 1), 13)
    q = correlator(op)
    un = np.eye(op.dim, dtype=complex)
    ud = op.to_dense()
    for _ in range(101):
        assert (np.abs(un) <= q + 1e-10).all()
        un = ud @ un


def test_fit_decay_recovers_planted_exponent():
    fit = fit_decay([(d, math.exp(-0.7 * d), 30) for d in range(1, 11)])
    assert fit.g == pytest.approx(0.7, abs=0.01)
    assert fit.r_squared > 0.999
    assert fit.ci_low <= 0.7 <= fit.ci_high
    assert fit.to_dict().keys() == {"g", "c", "r2", "ci_low", "ci_high"}


def test_fit_decay_validates():
    with pytest.raises(ValueError):
        fit_decay([(d, 1.0, 30) for d in (1, 2, 3)])  # too few bins
    with pytest.raises(ValueError):
        fit_decay([(d, 1.0, 5) for d in (1, 2, 3, 4)])  # thin bins
    with pytest.warns(UserWarning):
        with pytest.raises(ValueError):
            fit_decay([(d, 0.0, 30) for d in (1, 2, 3, 4)])  # all-zero bins


def test_contraction_phi0_ratio_zero():
    box = BoxSpec(1, 1)
    ambient = BoxSpec(4, 4, mode="torus")
    nu = Site(6, 8)
    rep = contraction_check(0.0, box, nu, 0.5, Z, 100, 9, ambient=ambient)
    assert rep.lhs == 0.0
    assert rep.q_hat == 0.0


def test_contraction_rejects_bad_nu():
    box = BoxSpec(1, 1)
    ambient = BoxSpec(4, 4, mode="torus")
    with pytest.raises(GeometryError):
        contraction_check(0.1, box, Site(0, 0), 0.5, Z, 100, 0, ambient=ambient)
    with pytest.raises(GeometryError):
        # adjacent to the box wall: not interior to the complement
        contraction_check(0.1, box, Site(2, 2), 0.5, Z, 100, 0, ambient=ambient)
