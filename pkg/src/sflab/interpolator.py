"""Finite-element interpolation from a coarse lattice to a fine one.

The fine lattice stands in for the continuum.  With hat functions
``rho_a`` of height ``1/a`` the interpolator is

    (iota phi)(x) = a^d sum_z rho_a(x - z) T_{x,z} phi(z),

evaluated at fine sites, and its adjoint for the weighted inner products
``<u, v>_a = a^d sum u^* v`` is ``iota^* = (a_f / a)^d iota^dagger``.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dirac import (MassFamilyParams, OperatorMatrix, Region, clifford_rep, domain_wall_profile,
                    dw_family, forward_difference_matrix, kappa_t, wilson_dirac)
from .gauge import ContinuumLine, GaugeField
from .lattice import LatticeGeometry, build_geometry, norm_l2
from .spectral import EndpointKernelError, ZERO_TOL


def rho_1d(a: float, t):
    """Periodic hat ``(1/a) max(0, 1 - t/a, 1 - (1-t)/a)`` with period 1."""
    t = np.mod(t, 1.0)
    return np.maximum(0.0, np.maximum(1 - t / a, 1 - (1 - t) / a)) / a


def rho(a: float, x) -> np.ndarray:
    """Tensor-product cut-off on the torus; ``x`` has shape ``(..., d)``."""
    return np.prod(rho_1d(a, np.asarray(x, dtype=np.float64)), axis=-1)


@dataclass(frozen=True)
class InterpolatorPair:
    coarse: LatticeGeometry
    fine: LatticeGeometry
    transport: ContinuumLine
    iota: sp.csr_matrix = field(repr=False)
    iota_adj: sp.csr_matrix = field(repr=False)

    @property
    def ratio(self) -> int:
        return self.fine.N // self.coarse.N

    @property
    def d(self) -> int:
        return self.coarse.d

    def orthonormal(self) -> sp.csr_matrix:
        """Matrix of iota between orthonormal coordinates ``a^(d/2) v``.

        Its conjugate transpose is the matrix of ``iota^*`` in the same coordinates.
        """
        return sp.csr_matrix(self.iota * (self.fine.a / self.coarse.a) ** (self.d / 2))

    def coarse_gauge(self) -> GaugeField:
        return self.transport.lattice_gauge(self.coarse)

    def fine_gauge(self) -> GaugeField:
        return self.transport.lattice_gauge(self.fine)

    def norm(self) -> float:
        """``||iota||`` from ``L^2`` of the coarse lattice to ``L^2`` of the fine one."""
        m = self.orthonormal()
        return float(np.sqrt(sla.eigh((m.conj().T @ m).toarray(), eigvals_only=True)[-1]))

    def adjoint_norm(self) -> float:
        m = self.orthonormal().conj().T
        return float(np.sqrt(sla.eigh((m @ m.conj().T).toarray(), eigvals_only=True)[-1]))


def build_interpolator(coarse: LatticeGeometry, fine: LatticeGeometry,
                       transport: ContinuumLine | None = None) -> InterpolatorPair:
    if coarse.d != fine.d or coarse.spinor_dim != fine.spinor_dim:
        raise ValueError("coarse and fine geometries must share d and spinor_dim")
    if not np.allclose(coarse.bc_phase, fine.bc_phase):
        raise ValueError("coarse and fine geometries must share boundary phases")
    if fine.N % coarse.N or fine.N // coarse.N < 2:
        raise ValueError(f"fine N = {fine.N} must be an integer multiple >= 2 of coarse N = {coarse.N}")
    d = coarse.d
    if transport is None:
        transport = ContinuumLine((0.0,) * d)
    if not isinstance(transport, ContinuumLine) or len(transport.alpha) != d:
        raise ValueError("transport must be a constant-connection ContinuumLine of matching dimension")
    ratio = fine.N // coarse.N
    xf = fine.coords()
    base, offset = xf // ratio, (xf % ratio) / ratio
    x_pos = xf / fine.N
    rows, cols, vals = [], [], []
    for corner in itertools.product((0, 1), repeat=d):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, offset, 1 - offset), axis=1)
        keep = w > 0
        zc = np.mod(base[keep] + c, coarse.N)
        phase = transport.transport(x_pos[keep], zc / coarse.N, coarse.bc_phase)
        rows.append(np.flatnonzero(keep))
        cols.append(np.ravel_multi_index(zc.T, coarse.shape))
        vals.append(w[keep] * np.exp(1j * phase))
    scalar = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(fine.volume, coarse.volume))
    if not np.any(scalar.data.imag):
        scalar = sp.csr_matrix(scalar.real)
    iota = sp.kron(scalar, sp.identity(coarse.spinor_dim), format="csr")
    adj = sp.csr_matrix(iota.conj().T * (fine.a / coarse.a) ** d)
    return InterpolatorPair(coarse, fine, transport, iota, adj)


# --------------------------------------------------------------------------
# identities


def partition_of_unity_residual(pair: InterpolatorPair) -> float:
    """``max_x |a^d sum_z rho_a(x - z) - 1|`` over fine sites."""
    s = pair.coarse.spinor_dim
    w = abs(pair.iota[::s, ::s])
    return float(np.max(np.abs(np.asarray(w.sum(axis=1)).ravel() - 1)))


def integral_unity_residual(pair: InterpolatorPair) -> float:
    """``max_z |a_f^d sum_x rho_a(x - z) - 1|``: the quadrature form of the integral identity."""
    s = pair.coarse.spinor_dim
    w = abs(pair.iota_adj[::s, ::s])
    return float(np.max(np.abs(np.asarray(w.sum(axis=1)).ravel() - 1)))


def overlap_sum(a: float, d: int, ratio: int = 16, neighborhood: str = "axes") -> float:
    """``a^d sum_{e in B} int rho_a(x) rho_a(x - a e) dx`` by fine-lattice quadrature.

    ``neighborhood="axes"`` takes ``B = {0, +-e_k}``; ``"full"`` takes every
    ``e`` in ``{-1, 0, 1}^d``.  Only the full neighbourhood sums to 1 for
    d >= 2 (the axes version gives ``(2/3)^d + 2d (2/3)^(d-1) / 6``).
    """
    n = int(round(1 / a))
    nf = n * ratio
    h = 1.0 / nf
    x1 = np.arange(nf) * h
    r0 = rho_1d(a, x1)
    shifted = {s: rho_1d(a, x1 - s * a) for s in (-1, 0, 1)}
    # one-dimensional quadratures; the d-dimensional integrals factorize
    q = {s: float(h * np.sum(r0 * shifted[s])) for s in (-1, 0, 1)}
    if neighborhood == "axes":
        es = [np.zeros(d, dtype=int)]
        for k in range(d):
            for sgn in (1, -1):
                e = np.zeros(d, dtype=int)
                e[k] = sgn
                es.append(e)
    elif neighborhood == "full":
        es = [np.array(e) for e in itertools.product((-1, 0, 1), repeat=d)]
    else:
        raise ValueError(f"unknown neighborhood {neighborhood!r}")
    return float(a**d * sum(np.prod([q[int(s)] for s in e]) for e in es))


# --------------------------------------------------------------------------
# convergence checks


def _slope(a, r) -> float | None:
    a, r = np.asarray(a, dtype=float), np.asarray(r, dtype=float)
    ok = r > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(a[ok]), np.log(r[ok]), 1)[0])


def _inner(u, v, geom: LatticeGeometry) -> complex:
    return complex(geom.a**geom.d * np.vdot(u, v))


def smooth_mode(geom: LatticeGeometry, k=None, spinor=None) -> np.ndarray:
    """Plane wave ``exp(i sum_j (bc_j + 2 pi k_j) x_j)`` times a constant spinor.

    Covariantly smooth for backgrounds without flux: the seam phase is
    absorbed into the momentum.
    """
    k = np.zeros(geom.d) if k is None else np.asarray(k, dtype=float)
    mom = np.asarray(geom.bc_phase) + 2 * np.pi * k
    scalar = np.exp(1j * (geom.coords() / geom.N) @ mom)
    if spinor is None:
        spinor = np.zeros(geom.spinor_dim)
        spinor[0] = 1.0
    return np.kron(scalar, np.asarray(spinor, dtype=complex))


def band_limited_field(geom: LatticeGeometry, rng: np.random.Generator, kmax: int = 2) -> np.ndarray:
    """Random combination of plane waves with ``|k_j| <= kmax``; same function for every N."""
    ks = np.array(list(itertools.product(range(-kmax, kmax + 1), repeat=geom.d)))
    coef = rng.normal(size=(len(ks), geom.spinor_dim)) + 1j * rng.normal(size=(len(ks), geom.spinor_dim))
    mom = 2 * np.pi * ks + np.asarray(geom.bc_phase)
    waves = np.exp(1j * (geom.coords() / geom.N) @ mom.T)
    return (waves @ coef).ravel()


def _l21_gram(gauge: GaugeField, m0: float) -> np.ndarray:
    geom = gauge.geometry
    G = sp.identity(geom.dim, format="csr", dtype=complex)
    for j in range(geom.d):
        f = forward_difference_matrix(gauge, j).mat
        G = G + (f.conj().T @ f) / m0**2
    return G.toarray()


def _l21(v, gauge: GaugeField, m0: float) -> float:
    geom = gauge.geometry
    total = np.vdot(v, v).real
    for j in range(geom.d):
        dv = forward_difference_matrix(gauge, j).mat @ v
        total += np.vdot(dv, dv).real / m0**2
    return float(np.sqrt(geom.a**geom.d * total))


@dataclass
class PropsRow:
    a: float
    norm_iota: float
    norm_iota_adj: float
    r1: float
    r1_worst: float | None
    r2: float | None
    r3: float | None


@dataclass
class PropsReport:
    rows: list[PropsRow]
    slope_r1: float | None
    slope_r1_worst: float | None
    slope_r2: float | None
    slope_r3: float | None
    r2_monotone: bool
    pou_residual: float

    def table(self) -> str:
        head = "a,norm_iota,norm_iota_adj,r1,r1_worst,r2,r3"
        lines = [head] + [",".join(repr(getattr(r, f)) for f in head.split(",")) for r in self.rows]
        lines.append(f"# slopes r1={self.slope_r1} r1_worst={self.slope_r1_worst} "
                     f"r2={self.slope_r2} r3={self.slope_r3}")
        return "\n".join(lines)


def check_props(coarse_Ns=(4, 8, 16, 32), ratio: int = 4, d: int = 2, trials: int = 8,
                seed: int = 0, transport: ContinuumLine | None = None, m0: float = 1.0,
                bc_phase=None, worst_case_cap: int = 2048, fine_N: int | None = None) -> PropsReport:
    """Rates of ``iota^* iota -> 1``, ``iota iota^* -> 1`` and the Wilson-operator pairing.

    r1 is the largest ``||iota^* iota phi - phi||^2 / ||phi||^2_{L^2_1}`` over
    random coarse fields; ``r1_worst`` is the exact supremum over all coarse
    fields (a generalized eigenvalue) when the coarse dimension allows it.
    With ``fine_N`` set, every coarse lattice is paired with that one fine
    lattice, which isolates the a-dependence of r3 from the fine-lattice bias.
    """
    if ratio < 2:
        raise ValueError("ratio must be at least 2")
    spin = 2 ** (d // 2) if d % 2 == 0 else 1
    rng = np.random.default_rng(seed)
    rows = []
    pou = 0.0
    if transport is not None and transport.flux:
        raise ValueError("smooth test fields are defined for flux-free transports")
    for n in coarse_Ns:
        coarse = build_geometry(d, n, bc_phase, spinor_dim=spin)
        fine = coarse.with_extent(fine_N or n * ratio)
        pair = build_interpolator(coarse, fine, transport)
        pou = max(pou, partition_of_unity_residual(pair))
        gc = pair.coarse_gauge()
        B = pair.iota_adj @ pair.iota - sp.identity(coarse.dim)
        r1 = 0.0
        for _ in range(trials):
            phi = rng.normal(size=coarse.dim) + 1j * rng.normal(size=coarse.dim)
            r1 = max(r1, norm_l2(B @ phi, coarse) ** 2 / _l21(phi, gc, m0) ** 2)
        r1_worst = None
        if coarse.dim <= worst_case_cap:
            BB = (B.conj().T @ B).toarray()
            r1_worst = float(sla.eigh(BB, _l21_gram(gc, m0), eigvals_only=True)[-1])
        psi = smooth_mode(fine, [1] + [0] * (d - 1))
        r2 = norm_l2(pair.iota @ (pair.iota_adj @ psi) - psi, fine)
        r3 = None
        if d % 2 == 0:
            rep = clifford_rep(d)
            spinor = np.ones(spin) / np.sqrt(spin)
            psi_p = smooth_mode(fine, [1] + [0] * (d - 1), spinor)
            dc = wilson_dirac(gc, rep).mat
            df = wilson_dirac(pair.fine_gauge(), rep).mat
            lhs = _inner(pair.iota_adj @ psi_p, dc.conj().T @ (pair.iota_adj @ psi), coarse)
            rhs = _inner(psi_p, df.conj().T @ psi, fine)
            r3 = abs(lhs - rhs)
        rows.append(PropsRow(coarse.a, pair.norm(), pair.adjoint_norm(), r1, r1_worst, r2, r3))
    a = [r.a for r in rows]
    r2s = [r.r2 for r in rows]
    worst = [r.r1_worst for r in rows]
    return PropsReport(
        rows,
        _slope(a, [r.r1 for r in rows]),
        _slope(a, worst) if all(w is not None for w in worst) else None,
        _slope(a, r2s),
        _slope(a, [r.r3 for r in rows]) if d % 2 == 0 else None,
        all(x > y for x, y in zip(r2s, r2s[1:])),
        pou,
    )


@dataclass
class CommutatorReport:
    a: list[float]
    r: dict[float, list[float]]
    slopes: dict[float, float | None]

    def table(self) -> str:
        ts = sorted(self.r)
        lines = ["a," + ",".join(f"r(t={t:g})" for t in ts)]
        for i, a in enumerate(self.a):
            lines.append(f"{a!r}," + ",".join(repr(self.r[t][i]) for t in ts))
        lines.append("# slopes " + " ".join(f"t={t:g}:{self.slopes[t]}" for t in ts))
        return "\n".join(lines)


def check_dw_commutator(region: Region, coarse_Ns=(4, 8, 16, 32), ratio: int = 4, d: int = 2,
                        trials: int = 4, seed: int = 0, ts=(-1.0, 0.0, 1.0), m0: float = 1.0,
                        kmax: int = 2) -> CommutatorReport:
    """``||kappa_t iota phi - iota(kappa_t phi)|| / ||phi||_{L^2_1}`` against a.

    Trial fields are random band-limited functions, identical as continuum
    functions across the lattices, so the rate measures the wall itself.
    """
    a_list = []
    r = {float(t): [] for t in ts}
    for n in coarse_Ns:
        coarse = build_geometry(d, n)
        fine = coarse.with_extent(n * ratio)
        pair = build_interpolator(coarse, fine)
        wc = domain_wall_profile(coarse, region)
        wf = domain_wall_profile(fine, region)
        gc = pair.coarse_gauge()
        rng = np.random.default_rng(seed)
        fields = [band_limited_field(coarse, rng, kmax) for _ in range(trials)]
        a_list.append(coarse.a)
        for t in ts:
            kc, kf = kappa_t(wc, t), kappa_t(wf, t)
            worst = 0.0
            for phi in fields:
                diff = kf * (pair.iota @ phi) - pair.iota @ (kc * phi)
                worst = max(worst, norm_l2(diff, fine) / _l21(phi, gc, m0))
            r[float(t)].append(worst)
    return CommutatorReport(a_list, r, {t: _slope(a_list, v) for t, v in r.items()})


# --------------------------------------------------------------------------
# combined operator


class CombinedFamily:
    """``D^cmb(t, s) = [[h_fine(t), s iota], [s iota^*, -h_coarse(t)]]`` (orthonormal coordinates)."""

    def __init__(self, pair: InterpolatorPair, m: float, region: Region, rep=None):
        if pair.d % 2:
            raise ValueError("the combined operator is built in the complex even-d mode")
        rep = rep or clifford_rep(pair.d)
        if rep.dim != pair.coarse.spinor_dim:
            raise ValueError("spinor dimension of the pair does not match the Clifford rep")
        self.pair = pair
        self.fine = dw_family(pair.fine_gauge(), rep,
                              MassFamilyParams(m, domain_wall_profile(pair.fine, region)))
        self.coarse = dw_family(pair.coarse_gauge(), rep,
                                MassFamilyParams(m, domain_wall_profile(pair.coarse, region)))
        self.link = pair.orthonormal()

    def __call__(self, t: float, s: float) -> OperatorMatrix:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"s = {s} outside [0, 1]")
        off = s * self.link
        m = sp.bmat([[self.fine(t), off], [off.conj().T, -self.coarse(t)]], format="csr")
        return OperatorMatrix(m, hermitian=True)


def combined_operator(pair: InterpolatorPair, rep, m: float, t: float, s: float,
                      wall: Region) -> OperatorMatrix:
    return CombinedFamily(pair, m, wall, rep)(t, s)


def staple_path(samples: int = 20) -> list[tuple[float, float]]:
    """Equally spaced points on (-1,0) -> (-1,1) -> (1,1) -> (1,0) in (t, s), by arc length."""
    if samples < 2:
        raise ValueError("need at least two samples")
    pts = []
    for u in np.linspace(0.0, 4.0, samples):
        if u <= 1.0:
            pts.append((-1.0, float(u)))
        elif u <= 3.0:
            pts.append((float(u - 2.0), 1.0))
        else:
            pts.append((1.0, float(4.0 - u)))
    return pts


@dataclass
class StapleReport:
    points: list[tuple[float, float]]
    min_abs_eig: list[float]

    @property
    def minimum(self) -> float:
        return float(min(self.min_abs_eig))

    def table(self) -> str:
        lines = ["t,s,min_abs_eig"]
        lines += [f"{t!r},{s!r},{e!r}" for (t, s), e in zip(self.points, self.min_abs_eig)]
        return "\n".join(lines)


def staple_scan(family: CombinedFamily, samples: int = 20, jobs: int | None = None,
                zero_tol: float = ZERO_TOL) -> StapleReport:
    """Smallest ``|eigenvalue|`` of the combined operator along the staple path."""
    for t in (-1.0, 1.0):
        w = sla.eigh(family.fine(t).toarray(), eigvals_only=True)
        if np.min(np.abs(w)) <= zero_tol * max(1.0, np.max(np.abs(w))):
            raise EndpointKernelError(f"fine h({t:+g}) has a kernel")
    pts = staple_path(samples)

    def solve(p):
        w = sla.eigh(family(*p).toarray(), eigvals_only=True)
        return float(np.min(np.abs(w)))

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vals = list(pool.map(solve, pts))
    else:
        vals = [solve(p) for p in pts]
    return StapleReport(pts, vals)
