import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from sflab.dirac import Region
from sflab.gauge import ContinuumLine
from sflab.interpolator import (CombinedFamily, build_interpolator, check_dw_commutator, check_props,
                                combined_operator, integral_unity_residual, overlap_sum,
                                partition_of_unity_residual, rho, rho_1d, smooth_mode, staple_path,
                                staple_scan)
from sflab.lattice import build_geometry, norm_l2
from sflab.spectral import EndpointKernelError

BAND = Region("band", 0.25, 0.75)


def pair(n=4, ratio=4, d=2, spinor=1, bc=None, transport=None):
    coarse = build_geometry(d, n, bc, spinor)
    return build_interpolator(coarse, coarse.with_extent(n * ratio), transport)


def test_rho_examples():
    a = 0.125
    assert rho_1d(a, 0.0) == pytest.approx(1 / a)
    assert rho_1d(a, a) == pytest.approx(0.0)
    assert rho_1d(a, a / 2) == pytest.approx(1 / (2 * a))
    assert rho_1d(a, 1 - a / 2) == pytest.approx(1 / (2 * a))  # periodic
    assert rho(a, [[a / 2, 0.0]])[0] == pytest.approx(1 / (2 * a) / a)


def test_constant_field_interpolates_to_constant():
    p = pair()
    out = p.iota @ np.full(16, 2.5)
    np.testing.assert_allclose(out, 2.5, atol=1e-14)


def test_delta_gives_hat_profile():
    p = pair(4, 4, d=2)
    phi = np.zeros(16)
    phi[0] = 1.0
    out = (p.iota @ phi).real
    x = p.fine.coords() / p.fine.N
    want = p.coarse.a**2 * rho(p.coarse.a, x)
    np.testing.assert_allclose(out, want, atol=1e-14)


@pytest.mark.parametrize("transport,bc", [
    (None, None),
    (ContinuumLine((0.7, -0.4)), (0.0, math.pi)),
    (ContinuumLine((0.0, 0.0), flux=1), (0.0, 0.0)),
])
def test_adjoint_identity(transport, bc, rng):
    p = pair(4, 4, 2, 2, bc, transport)
    phi = rng.normal(size=p.coarse.dim) + 1j * rng.normal(size=p.coarse.dim)
    psi = rng.normal(size=p.fine.dim) + 1j * rng.normal(size=p.fine.dim)
    lhs = p.fine.a**2 * np.vdot(p.iota @ phi, psi)
    rhs = p.coarse.a**2 * np.vdot(phi, p.iota_adj @ psi)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_norms_equal_and_bounded():
    norms = []
    for n in (4, 8, 16):
        p = pair(n, 4)
        assert abs(p.norm() - p.adjoint_norm()) <= 1e-10
        norms.append(p.norm())
    assert max(norms) <= 1.0 + 1e-12


@pytest.mark.parametrize("d,n", [(1, 8), (2, 4), (2, 8), (3, 4)])
def test_partition_of_unity(d, n):
    p = pair(n, 4, d)
    assert partition_of_unity_residual(p) <= 1e-12
    assert integral_unity_residual(p) <= 1e-3


def test_overlap_sum_identity():
    # axes neighbourhood: 1 only in d = 1, (2/3)^2 + 4 (1/6)(2/3) = 8/9 in d = 2
    assert overlap_sum(0.125, 1) == pytest.approx(1.0, abs=1e-3)
    assert overlap_sum(0.125, 2) == pytest.approx(8 / 9, abs=1e-3)
    for d in (1, 2, 3):
        assert overlap_sum(0.125, d, neighborhood="full") == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        overlap_sum(0.125, 2, neighborhood="ring")


def test_build_interpolator_preconditions():
    c = build_geometry(2, 4)
    with pytest.raises(ValueError, match="multiple"):
        build_interpolator(c, c)
    with pytest.raises(ValueError):
        build_interpolator(c, c.with_extent(10))
    with pytest.raises(ValueError):
        build_interpolator(c, build_geometry(1, 16))
    with pytest.raises(ValueError):
        build_interpolator(c, build_geometry(2, 16, (0.0, math.pi)))
    with pytest.raises(ValueError):
        build_interpolator(c, c.with_extent(16), transport="wilson")
    with pytest.raises(ValueError):
        check_props((4,), ratio=1)


def test_smooth_mode_is_smooth_under_boundary_phase():
    geom = build_geometry(2, 16, (0.0, math.pi), 2)
    psi = smooth_mode(geom)
    assert norm_l2(psi, geom) == pytest.approx(1.0)


def test_check_props_rates():
    rep = check_props((4, 8, 16), 4, d=2, trials=4)
    assert rep.slope_r1 >= 0.8
    assert rep.slope_r1_worst >= 0.8
    assert rep.r2_monotone
    assert rep.pou_residual <= 1e-12
    assert all(r.norm_iota <= 1 + 1e-12 for r in rep.rows)
    assert rep.table().startswith("a,norm_iota")


def test_check_props_holonomy_transport():
    rep = check_props((4, 8, 16), 4, d=2, trials=4, transport=ContinuumLine((0.5, -0.3)))
    assert rep.slope_r1 >= 0.8 and rep.r2_monotone


def test_commutator():
    rep = check_dw_commutator(BAND, (4, 8, 16), 4, d=2, trials=2)
    assert max(rep.r[-1.0]) == 0.0
    assert rep.slopes[0.0] >= 0.45 and rep.slopes[1.0] >= 0.45
    torus = check_dw_commutator(Region("torus"), (4, 8), 4, d=2, trials=2)
    assert all(max(v) <= 1e-14 for v in torus.r.values())


def test_staple_path():
    pts = staple_path(20)
    assert len(pts) == 20
    assert pts[0] == (-1.0, 0.0) and pts[-1] == (1.0, 0.0)
    assert all(s == 1.0 for t, s in pts if -1 < t < 1)
    with pytest.raises(ValueError):
        staple_path(1)


def test_combined_operator_blocks():
    p = pair(4, 2, 2, 2, transport=ContinuumLine((0.0, 0.0), flux=1))
    fam = CombinedFamily(p, 1.0, BAND)
    for t in (-1.0, 0.3):
        D0 = fam(t, 0.0).toarray()
        want = np.sort(np.concatenate([sla.eigh(fam.fine(t).toarray(), eigvals_only=True),
                                       -sla.eigh(fam.coarse(t).toarray(), eigvals_only=True)]))
        np.testing.assert_allclose(sla.eigh(D0, eigvals_only=True), want, atol=1e-12)
    D = combined_operator(p, None, 1.0, 0.2, 0.7, BAND).toarray()
    assert np.abs(D - D.conj().T).max() <= 1e-13
    with pytest.raises(ValueError):
        fam(0.0, 1.5)


def test_staple_scan_small():
    p = pair(4, 2, 2, 2, bc=(0.0, math.pi), transport=ContinuumLine((0.0, 0.0), flux=1))
    rep = staple_scan(CombinedFamily(p, 1.0, BAND), samples=6)
    assert len(rep.min_abs_eig) == 6 and rep.minimum > 0
    assert rep.table().splitlines()[0] == "t,s,min_abs_eig"


def test_staple_scan_endpoint_kernel():
    # free field on the fine N=4 lattice: m = 2/a_f = 8 matches the Wilson mass at momentum (pi, 0)
    p = pair(2, 2, 2, 2)
    fam = CombinedFamily(p, 8.0, Region("torus"))
    with pytest.raises(EndpointKernelError):
        staple_scan(fam, samples=4)
