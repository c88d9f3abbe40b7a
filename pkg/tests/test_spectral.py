import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import assume, given, settings, strategies as st

from sflab.continuum import DwSetup
from sflab.dirac import OperatorMatrix, Region
from sflab.spectral import (AffineFamily, EndpointKernelError, KernelError, RefinementExhausted,
                            SingularEndpointError, Spectrum, SpectralError, SpectralFlowResult,
                            eigs_hermitian, eta_invariant, flow_from_etas, mod2_flow,
                            spectral_flow_eta, spectral_flow_tracked)


def scalar_family(t):
    return np.array([[t]])


def diag_family(t):
    return np.diag([t, -t])


def random_affine(seed, n=6):
    rng = np.random.default_rng(seed)

    def herm():
        x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return (x + x.conj().T) / 2

    return AffineFamily(herm(), herm())


def endpoints_gapped(fam, gap=1e-3):
    return all(np.min(np.abs(np.linalg.eigvalsh(fam(t).toarray()))) > gap for t in (-1.0, 1.0))


# --------------------------------------------------------------------------
# eigensolves and eta


def test_eigs_examples():
    np.testing.assert_array_equal(eigs_hermitian(np.diag([3.0, -1.0, 0.0])), [-1, 0, 3])
    np.testing.assert_allclose(eigs_hermitian(np.array([[0.0, 1.0], [1.0, 0.0]])), [-1, 1])
    w, v = eigs_hermitian(np.diag([2.0, 1.0]), vectors=True)
    assert w.tolist() == [1.0, 2.0] and v.shape == (2, 2)


def test_eigs_free_wilson_fourier():
    from sflab.acceptance import free_wilson_oracle
    setup = DwSetup(4, 0, Region("torus"), 1.0, gauge="trivial")
    h = setup.family()(-1.0)  # D^W + m gamma
    np.testing.assert_allclose(eigs_hermitian(h), free_wilson_oracle(4, (0, 0), -1.0), atol=1e-10)


def test_eigs_guards():
    with pytest.raises(ValueError):
        eigs_hermitian(OperatorMatrix(np.eye(3)), dense_cap=2)
    with pytest.raises(ValueError):
        eigs_hermitian(OperatorMatrix(np.array([[0, 1], [0, 0]], dtype=float)))
    with pytest.raises(ValueError):
        eigs_hermitian(np.eye(3), vectors=True, iterative=True)


def test_eta_examples():
    assert eta_invariant(np.diag([1.0, 2.0, -3.0])) == 1
    assert eta_invariant(np.diag([5.0, -5.0])) == 0
    with pytest.raises(KernelError):
        eta_invariant(np.diag([1.0, 0.0]))


def test_eta_of_dw_minus_endpoint_vanishes():
    fam = DwSetup(8, 1, Region("torus"), 1.0).family()
    assert eta_invariant(fam(-1.0)) == 0


def test_spectrum_helpers():
    s = Spectrum(np.array([-1.0, 0.5, 2.0]), radius=3.0)
    assert s.distance(0.0) == 0.5
    assert s.distance(2.9) == pytest.approx(0.1)
    assert s.count_between(1.0, -2.0) == 2
    assert s.scale == 2.0


def test_affine_family():
    fam = AffineFamily(np.diag([1.0, -2.0]), np.diag([3.0, 2.0]))
    assert fam.dim == 2
    assert fam.lipschitz == pytest.approx(2.0)
    np.testing.assert_allclose(fam(0.0).toarray(), np.diag([2.0, 0.0]))
    np.testing.assert_allclose(fam.reversed()(1.0).toarray(), np.diag([1.0, -2.0]))
    with pytest.raises(ValueError):
        fam(1.5)
    with pytest.raises(ValueError):
        AffineFamily(np.eye(2), np.eye(3))


# --------------------------------------------------------------------------
# spectral flow


def test_scalar_family_both_conventions():
    up = spectral_flow_tracked(scalar_family, convention="upward")
    down = spectral_flow_tracked(scalar_family)
    assert up.net == 1 and down.net == -1
    assert spectral_flow_eta(scalar_family, convention="upward") == 1
    assert spectral_flow_eta(scalar_family) == -1
    assert sum(1 for s, d in zip(up.sgn, up.d) if s and d) == 1
    assert up.levels[0] == 0.0 and up.levels[-1] == 0.0


def test_cancelling_pair():
    assert spectral_flow_tracked(diag_family).net == 0
    assert spectral_flow_eta(diag_family) == 0


def test_constant_family_has_no_flow():
    h = np.diag([1.0, -2.0, 0.5])
    assert spectral_flow_tracked(AffineFamily(h, h)).net == 0
    assert spectral_flow_eta(lambda t: h) == 0


def test_unknown_convention():
    with pytest.raises(ValueError):
        spectral_flow_tracked(scalar_family, convention="sideways")


def test_endpoint_kernel():
    with pytest.raises(EndpointKernelError):
        spectral_flow_tracked(lambda t: np.array([[t + 1.0]]))
    with pytest.raises(EndpointKernelError):
        spectral_flow_eta(lambda t: np.array([[t - 1.0]]))


def test_odd_eta_difference_rejected():
    with pytest.raises(SpectralError):
        flow_from_etas(0, 1)
    assert flow_from_etas(0, -2) == 1
    assert flow_from_etas(0, -2, "upward") == -1


def test_refinement_exhausted():
    # the crossing sits 1e-9 from t = -1, where the level must be 0; 20 bisections cannot isolate it
    fam = AffineFamily(np.array([[-1e-9]]), np.array([[2.0 - 1e-9]]))
    with pytest.raises(RefinementExhausted, match="could not certify"):
        spectral_flow_tracked(fam, grid=4, max_depth=20)
    assert spectral_flow_tracked(AffineFamily(np.array([[-1e-3]]), np.array([[2.0]]))).net == -1


def test_result_invariant_and_json():
    res = spectral_flow_tracked(random_affine(3))
    assert res.net == sum(s * d for s, d in zip(res.sgn, res.d))
    assert len(res.t_points) == len(res.levels) + 1
    assert res.t_points[0] == -1.0 and res.t_points[-1] == 1.0
    assert all(a < b for a, b in zip(res.t_points, res.t_points[1:]))
    assert res.min_certificate > 0
    back = SpectralFlowResult.from_json(res.to_json())
    assert back.net == res.net and back.table() == res.table()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 8))
def test_tracked_equals_eta_random(seed, n):
    fam = random_affine(seed, n)
    assume(endpoints_gapped(fam))
    assert spectral_flow_tracked(fam).net == spectral_flow_eta(fam)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_reversed_path_negates(seed):
    fam = random_affine(seed)
    assume(endpoints_gapped(fam))
    assert spectral_flow_tracked(fam.reversed()).net == -spectral_flow_tracked(fam).net


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_grid_refinement_stable(seed):
    fam = random_affine(seed, 5)
    assume(endpoints_gapped(fam))
    nets = {spectral_flow_tracked(fam, grid=g).net for g in (2, 4, 8, 16, 32)}
    assert len(nets) == 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_chebyshev_fallback_matches_certificate(seed):
    fam = random_affine(seed, 4)
    assume(endpoints_gapped(fam))
    # a plain callable has no Lipschitz constant and uses node sampling
    assert spectral_flow_tracked(lambda t: fam(t)).net == spectral_flow_tracked(fam).net


def test_dw_torus_q1():
    fam = DwSetup(16, 1, Region("torus"), 1.0).family()
    res = spectral_flow_tracked(fam, window=10.0)
    assert res.net == 1 == spectral_flow_eta(fam)
    assert res.eta_minus == 0 and res.eta_plus == -2
    assert len(res.trajectories) == len(res.trajectory_t) == res.solves


def test_serial_and_parallel_identical():
    fam = DwSetup(8, 1, Region("band", 0.25, 0.75), 1.0, (0.0, math.pi)).family()
    a = spectral_flow_tracked(fam, window=10.0, jobs=1)
    b = spectral_flow_tracked(fam, window=10.0, jobs=3)
    assert a.to_json() == b.to_json()


def test_iterative_backend_agrees():
    fam = DwSetup(8, 1, Region("torus"), 1.0).family()
    dense = spectral_flow_tracked(fam, window=10.0).net
    it = spectral_flow_tracked(fam, window=10.0, iterative=True, k=24)
    assert it.net == dense
    assert it.eta_minus is None  # windowed spectra carry no eta


# --------------------------------------------------------------------------
# mod-two flow


def test_mod2_scalar():
    r = mod2_flow(lambda t: np.array([[t + 0.1]]), grid=8)
    assert r.parity == 1 and r.tracked_parity == 1 and r.v_parity == 1
    assert r.consistent


@pytest.mark.parametrize("bc,want", [(0.0, 1), (math.pi, 0)])
def test_mod2_free_d1(bc, want):
    from sflab.acceptance import mod2_setup
    r = mod2_flow(mod2_setup(bc), grid=32)
    assert r.parity == r.tracked_parity == r.v_parity == want
    assert r.v_residual < 1e-10
    assert r.det_sign_minus == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_mod2_routes_agree_random(seed, n):
    rng = np.random.default_rng(seed)
    A0, A1 = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    fam = AffineFamily(A0, A1, hermitian=False)
    assume(min(np.linalg.svd(A, compute_uv=False).min() for A in (A0, A1)) > 1e-3)
    r = mod2_flow(fam, grid=64)
    assert r.v_parity is not None and r.parity == r.v_parity
    assert r.parity == (1 - np.sign(np.linalg.det(A0) * np.linalg.det(A1))) // 2


def test_mod2_singular_endpoint():
    with pytest.raises(SingularEndpointError):
        mod2_flow(lambda t: np.array([[t - 1.0]]))


def test_mod2_json():
    r = mod2_flow(lambda t: sp.csr_matrix(np.array([[t + 0.1]])), grid=4)
    assert '"parity": 1' in r.to_json()
