"""Hermitian eigensolves, eta invariants, spectral flow and mod-two spectral flow.

Spectral flow follows the partition construction: points
``-1 = t_0 < ... < t_n = 1`` carry levels ``lambda_1 .. lambda_n`` with
``lambda_1 = lambda_n = 0`` and ``lambda_k`` certified to avoid the spectrum
of ``h(t)`` on ``[t_{k-1}, t_k]``.  With ``d_k`` the number of eigenvalues of
``h(t_k)`` strictly between ``lambda_k`` and ``lambda_{k+1}``,

    sf = sum_k sgn_k d_k.

Orientation: the default ``convention="downward"`` uses
``sgn_k = sign(lambda_{k+1} - lambda_k)``, which counts eigenvalues crossing
from positive to negative as +1 and gives ``sf = -(eta(h_1) - eta(h_-1)) / 2``
(so the domain-wall flow is the index of X_+).  ``convention="upward"`` uses
``sgn_k = sign(lambda_k - lambda_{k+1})`` and flips every sign.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CAP = 10_000
ZERO_TOL = 1e-10
CHEBYSHEV_NODES = 8


class SpectralError(RuntimeError):
    pass


class EndpointKernelError(SpectralError):
    pass


class KernelError(SpectralError):
    pass


class RefinementExhausted(SpectralError):
    pass


class SingularEndpointError(SpectralError):
    pass


def _as_sparse(M):
    m = getattr(M, "mat", M)
    return m


def _as_dense(M) -> np.ndarray:
    m = _as_sparse(M)
    return m.toarray() if sp.issparse(m) else np.asarray(m)


class AffineFamily:
    """``h(t) = (1-t)/2 h(-1) + (1+t)/2 h(1)`` for t in [-1, 1].

    ``lipschitz`` bounds ``|dh/dt|``; for Hermitian families it is used to
    certify spectral gaps between samples (Weyl's inequality).
    """

    def __init__(self, h_minus, h_plus, hermitian: bool = True):
        self.h_minus = sp.csr_matrix(_as_sparse(h_minus))
        self.h_plus = sp.csr_matrix(_as_sparse(h_plus))
        if self.h_minus.shape != self.h_plus.shape:
            raise ValueError("endpoint operators differ in shape")
        self.hermitian = hermitian
        slope = (self.h_plus - self.h_minus) / 2
        # max absolute row sum bounds the spectral norm of a Hermitian matrix
        self.lipschitz = float(abs(slope).sum(axis=1).max()) if slope.nnz else 0.0

    @property
    def dim(self) -> int:
        return self.h_minus.shape[0]

    def __call__(self, t: float) -> sp.csr_matrix:
        if not -1.0 <= t <= 1.0:
            raise ValueError(f"t = {t} outside [-1, 1]")
        return sp.csr_matrix((1 - t) / 2 * self.h_minus + (1 + t) / 2 * self.h_plus)

    def reversed(self) -> "AffineFamily":
        return AffineFamily(self.h_plus, self.h_minus, self.hermitian)


# --------------------------------------------------------------------------
# eigensolves


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues known exactly inside ``|x| < radius`` (all of them if inf)."""

    values: np.ndarray
    radius: float = np.inf

    def distance(self, lam: float) -> float:
        near = np.min(np.abs(self.values - lam)) if self.values.size else np.inf
        return float(min(near, self.radius - abs(lam)))

    def count_between(self, lo: float, hi: float) -> int:
        lo, hi = min(lo, hi), max(lo, hi)
        return int(np.count_nonzero((self.values > lo) & (self.values < hi)))

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def eigs_hermitian(M, vectors: bool = False, dense_cap: int = DENSE_CAP, iterative: bool = False,
                   k: int = 40, seed: int = 0):
    """Ascending eigenvalues (and optionally eigenvectors) of a Hermitian operator.

    Dense LAPACK is the reference path.  With ``iterative=True`` the ``k``
    eigenvalues nearest zero are found by shift-invert Lanczos instead
    (experimental; eigenvalues only).
    """
    if getattr(M, "hermitian", True) is False:
        raise ValueError("eigs_hermitian needs an operator flagged Hermitian")
    m = _as_sparse(M)
    n = m.shape[0]
    if iterative:
        if vectors:
            raise ValueError("the iterative backend returns eigenvalues only")
        return _windowed(m, k).values
    if n > dense_cap:
        raise ValueError(f"dimension {n} exceeds dense cap {dense_cap}; enable the iterative backend")
    A = _as_dense(m)
    if not vectors:
        return sla.eigh(A, eigvals_only=True)
    w, v = sla.eigh(A)
    rng = np.random.default_rng(seed)
    norm = max(np.max(np.abs(w)), 1.0)
    for i in rng.choice(n, size=min(5, n), replace=False):
        res = np.linalg.norm(A @ v[:, i] - w[i] * v[:, i])
        if res > 1e-9 * norm:
            raise SpectralError(f"eigenpair residual {res:.3e} exceeds tolerance")
    return w, v


def _windowed(m, k: int) -> Spectrum:
    n = m.shape[0]
    if k >= n - 1:
        return Spectrum(sla.eigh(_as_dense(m), eigvals_only=True))
    vals = spla.eigsh(sp.csc_matrix(m), k=k, sigma=0.0, which="LM", return_eigenvectors=False)
    vals = np.sort(vals.real)
    # every eigenvalue missed by shift-invert lies at least this far from 0
    return Spectrum(vals, float(np.max(np.abs(vals))))


def _spectrum(M, iterative: bool = False, k: int = 40) -> Spectrum:
    if iterative:
        return _windowed(_as_sparse(M), k)
    return Spectrum(sla.eigh(_as_dense(M), eigvals_only=True))


def _zero_tol(spectra: Sequence[Spectrum], zero_tol: float) -> float:
    return zero_tol * max([1.0] + [s.scale for s in spectra])


def eta_invariant(M, zero_tol: float = ZERO_TOL) -> int:
    """``#(positive eigenvalues) - #(negative eigenvalues)`` of a Hermitian matrix."""
    w = eigs_hermitian(M)
    tol = zero_tol * max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    if np.any(np.abs(w) <= tol):
        raise KernelError(f"kernel at evaluation point: |lambda|_min = {np.min(np.abs(w)):.3e}")
    return int(np.count_nonzero(w > 0) - np.count_nonzero(w < 0))


def _map(fn, items, jobs: int | None):
    items = list(items)
    if jobs and jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _orientation(convention: str) -> int:
    if convention == "downward":
        return 1
    if convention == "upward":
        return -1
    raise ValueError(f"unknown spectral flow convention {convention!r}")


# --------------------------------------------------------------------------
# spectral flow


@dataclass
class SpectralFlowResult:
    t_points: list[float]
    levels: list[float]
    sgn: list[int]
    d: list[int]
    net: int
    convention: str
    min_certificate: float
    solves: int
    eta_minus: int | None = None
    eta_plus: int | None = None
    trajectory_t: list[float] = field(default_factory=list, repr=False)
    trajectories: list[list[float]] = field(default_factory=list, repr=False)

    def table(self) -> list[tuple[float, float, int, int]]:
        """Rows ``(t_k, lambda_k, sgn_k, d_k)`` for 0 < k < n."""
        return [(self.t_points[k], self.levels[k - 1], self.sgn[k - 1], self.d[k - 1])
                for k in range(1, len(self.levels))]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SpectralFlowResult":
        return cls(**json.loads(text))


def _certificate(lam, nodes: Sequence[Spectrum], steps: Sequence[float], slopes: Sequence[float]) -> float:
    """Lower bound on ``dist(lam, spec h(t))`` over a segment sampled at ``nodes``.

    On each piece of length ``dt`` between consecutive nodes the distance is
    ``slope``-Lipschitz (Weyl), so it cannot dip below ``(d_u + d_v - slope dt) / 2``.
    """
    dist = [s.distance(lam) for s in nodes]
    return min(max((du + dv - L * dt) / 2, du - L * dt, dv - L * dt)
               for du, dv, dt, L in zip(dist, dist[1:], steps, slopes))


def _rowsum_norm(M) -> float:
    m = _as_sparse(M)
    if sp.issparse(m):
        return float(abs(m).sum(axis=1).max()) if m.nnz else 0.0
    m = np.asarray(m)
    return float(np.abs(m).sum(axis=1).max()) if m.size else 0.0


def _candidates(sa: Spectrum, sb: Spectrum, window: float) -> np.ndarray:
    pts = np.concatenate([sa.values, sb.values])
    if not np.isfinite(window):
        window = 1.0 + 2.0 * float(np.max(np.abs(pts), initial=0.0))
    pts = np.sort(pts[np.abs(pts) < window])
    edges = np.concatenate([[-window], pts, [window]])
    mids = (edges[:-1] + edges[1:]) / 2
    return np.concatenate([[0.0], mids])


def spectral_flow_tracked(family: Callable[[float], object], grid: int = 16, zero_tol: float = ZERO_TOL,
                          max_depth: int = 20, window: float | None = None, jobs: int | None = None,
                          convention: str = "downward", iterative: bool = False, k: int = 40,
                          lipschitz: float | None = None, n_window: int = 40) -> SpectralFlowResult:
    """Spectral flow of a Hermitian family on [-1, 1] by the partition construction.

    Levels are certified on each segment: with a Lipschitz constant L for
    ``t -> h(t)`` (taken from ``family.lipschitz`` when present) the bound
    ``dist(lambda, spec h(t)) >= (delta_a + delta_b - L dt) / 2`` is rigorous;
    without one the spectrum is sampled at Chebyshev nodes and the same bound
    is applied between consecutive nodes, with the slope measured from
    ``|h(v) - h(u)|`` and doubled.  Segments whose best level is not
    certified above ``10 * zero_tol`` are bisected.
    """
    sign = _orientation(convention)
    if lipschitz is None:
        lipschitz = getattr(family, "lipschitz", None)
    spectra: dict[float, Spectrum] = {}

    def solve(ts):
        ts = [t for t in ts if t not in spectra]
        for t, s in zip(ts, _map(lambda t: _spectrum(family(t), iterative, k), ts, jobs)):
            spectra[t] = s

    init = [float(x) for x in np.linspace(-1.0, 1.0, grid + 1)]
    solve(init)
    tol = _zero_tol([spectra[-1.0], spectra[1.0]], zero_tol)
    for end in (-1.0, 1.0):
        if spectra[end].distance(0.0) <= tol:
            raise EndpointKernelError(f"h({end:+g}) has an eigenvalue within {tol:.1e} of zero")
    certify_floor = 10 * tol

    def window_at(t):
        vals = np.sort(np.abs(spectra[t].values))
        lam = vals[n_window - 1] if vals.size >= n_window else np.inf
        lam = min(lam, spectra[t].radius)
        return lam if window is None else min(lam, window)

    def interior_nodes(ta, tb):
        x = np.cos((2 * np.arange(CHEBYSHEV_NODES) + 1) * np.pi / (2 * CHEBYSHEV_NODES))
        return sorted(float(ta + (tb - ta) * (1 + c) / 2) for c in x)

    slopes: dict[tuple[float, float], float] = {}

    def sampled_slope(u, v):
        # measured |h(v) - h(u)| / (v - u), doubled to cover curvature between nodes
        if (u, v) not in slopes:
            slopes[(u, v)] = 2.0 * _rowsum_norm(_as_sparse(family(v)) - _as_sparse(family(u))) / (v - u)
        return slopes[(u, v)]

    def pieces(ta, tb):
        if lipschitz is not None:
            return [spectra[ta], spectra[tb]], [tb - ta], [lipschitz]
        ts_ = [ta] + interior_nodes(ta, tb) + [tb]
        steps = [v - u for u, v in zip(ts_, ts_[1:])]
        return [spectra[t] for t in ts_], steps, [sampled_slope(u, v) for u, v in zip(ts_, ts_[1:])]

    segments = [(init[i], init[i + 1], 0) for i in range(grid)]
    while True:
        levels, certs, failed = [], [], []
        n = len(segments)
        if lipschitz is None:
            solve([t for ta, tb, _ in segments for t in interior_nodes(ta, tb)])
        for i, (ta, tb, depth) in enumerate(segments):
            sa, sb = spectra[ta], spectra[tb]
            nodes, steps, piece_slopes = pieces(ta, tb)
            if i == 0 or i == n - 1:
                cands = np.array([0.0])
            else:
                cands = _candidates(sa, sb, min(window_at(ta), window_at(tb)))
            bounds = [_certificate(c, nodes, steps, piece_slopes) for c in cands]
            best = int(np.argmax(bounds))
            levels.append(float(cands[best]))
            certs.append(float(bounds[best]))
            if bounds[best] <= certify_floor:
                failed.append(i)
        if not failed:
            break
        new_segments, mids = [], []
        for i, (ta, tb, depth) in enumerate(segments):
            if i in failed:
                if depth >= max_depth:
                    raise RefinementExhausted(
                        f"could not certify a level on [{ta:.6g}, {tb:.6g}] after {depth} bisections; "
                        f"narrowest certificate {certs[i]:.3e}")
                mid = (ta + tb) / 2
                mids.append(mid)
                new_segments += [(ta, mid, depth + 1), (mid, tb, depth + 1)]
            else:
                new_segments.append((ta, tb, depth))
        solve(mids)
        segments = new_segments

    t_points = [segments[0][0]] + [tb for _, tb, _ in segments]
    sgn, dk = [], []
    for k_ in range(1, len(levels)):
        lam_k, lam_next = levels[k_ - 1], levels[k_]
        if lam_k == lam_next:
            sgn.append(0)
            dk.append(0)
            continue
        sgn.append(sign * (1 if lam_next > lam_k else -1))
        dk.append(spectra[t_points[k_]].count_between(lam_k, lam_next))
    net = int(sum(s * x for s, x in zip(sgn, dk)))
    # the final grid must keep every level off the spectrum at its segment ends
    for i, lam in enumerate(levels):
        for t in (t_points[i], t_points[i + 1]):
            if spectra[t].distance(lam) <= tol:
                raise SpectralError(f"level {lam} touches the spectrum at t={t}")

    ts = sorted(spectra)
    traj = []
    for t in ts:
        v = spectra[t].values
        near = v[np.argsort(np.abs(v))[:n_window]]
        traj.append(np.sort(near).tolist())
    etas = [int(np.sign(spectra[t].values).sum()) if np.isinf(spectra[t].radius) else None
            for t in (-1.0, 1.0)]
    return SpectralFlowResult(t_points, levels, sgn, dk, net, convention, float(min(certs)),
                              len(spectra), etas[0], etas[1], ts, traj)


def spectral_flow_eta(family: Callable[[float], object], zero_tol: float = ZERO_TOL,
                      convention: str = "downward") -> int:
    """Flow from the endpoint eta invariants (finite-dimensional identity)."""
    try:
        eta_minus = eta_invariant(family(-1.0), zero_tol)
        eta_plus = eta_invariant(family(1.0), zero_tol)
    except KernelError as exc:
        raise EndpointKernelError(str(exc)) from exc
    return flow_from_etas(eta_minus, eta_plus, convention)


def flow_from_etas(eta_minus: int, eta_plus: int, convention: str = "downward") -> int:
    sign = _orientation(convention)
    diff = eta_plus - eta_minus
    if diff % 2:
        raise SpectralError(f"odd eta difference {diff}: eigensolver failure")
    return -sign * (diff // 2)


# --------------------------------------------------------------------------
# mod-two spectral flow


@dataclass
class Mod2FlowResult:
    parity: int
    det_sign_minus: int
    det_sign_plus: int
    logabsdet_minus: float
    logabsdet_plus: float
    sign_changes: int
    tracked_parity: int
    v_det_sign: int | None
    v_parity: int | None
    v_residual: float | None
    v_note: str = ""
    grid_t: list[float] = field(default_factory=list, repr=False)
    grid_signs: list[int] = field(default_factory=list, repr=False)

    @property
    def consistent(self) -> bool:
        ok = self.parity == self.tracked_parity
        if self.v_parity is not None:
            ok = ok and self.parity == self.v_parity
        return ok

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


def _det_sign(A: np.ndarray) -> tuple[int, float]:
    """Sign and log|det| from a pivoted LU factorization; sign 0 if exactly singular."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    diag = np.diag(lu).real
    if np.any(diag == 0):
        return 0, -np.inf
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    sgn = (-1) ** swaps * np.prod(np.sign(diag))
    return int(sgn), float(np.sum(np.log(np.abs(diag))))


def _congruence_factor(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``H = R^T eps R`` for ``H = [[0, A], [A^T, 0]]`` from the SVD of A.

    Eigenvectors are ``(u_i, +-w_i)/sqrt(2)`` with eigenvalues ``+-s_i``;
    ``eps`` lists the signs of the ordered eigenvalues.
    """
    U, s, Wt = np.linalg.svd(A)
    W = Wt.T
    Q = np.block([[U, U], [W, -W]]) / np.sqrt(2)
    lam = np.concatenate([s, -s])
    R = np.sqrt(np.abs(lam))[:, None] * Q.T
    return R, np.sign(lam)


def mod2_flow(family: Callable[[float], object], grid: int = 32, min_singular: float = 1e-10,
              v_oracle: bool = True) -> Mod2FlowResult:
    """Mod-two spectral flow of ``H(t) = [[0, A(t)], [A(t)^T, 0]]`` for real A(t).

    The parity is read from the determinant signs of A at the endpoints; the
    sign of ``det A(t)`` is also followed on a grid, and the V matrix with
    ``H(1) = V^T H(-1) V`` is built from congruence factors as a third route.
    """
    A_minus = _as_dense(family(-1.0))
    A_plus = _as_dense(family(1.0))
    for name, A in (("A(-1)", A_minus), ("A(+1)", A_plus)):
        if np.iscomplexobj(A):
            if np.any(A.imag):
                raise ValueError(f"{name} is not real")
        smin = np.linalg.svd(A, compute_uv=False).min()
        if smin <= min_singular:
            raise SingularEndpointError(f"{name} is singular: smallest singular value {smin:.3e}")
    A_minus, A_plus = A_minus.real, A_plus.real
    s_minus, l_minus = _det_sign(A_minus)
    s_plus, l_plus = _det_sign(A_plus)
    parity = (1 - s_minus * s_plus) // 2

    ts = [float(x) for x in np.linspace(-1.0, 1.0, grid + 1)]
    signs = [s_minus] + [_det_sign(_as_dense(family(t)).real)[0] for t in ts[1:-1]] + [s_plus]
    # exactly singular samples carry no sign and are stepped over
    nonzero = [x for x in signs if x]
    changes = sum(1 for x, y in zip(nonzero, nonzero[1:]) if x != y)

    v_sign = v_parity = v_res = None
    note = ""
    if v_oracle:
        n = A_minus.shape[0]
        H_minus = np.block([[np.zeros((n, n)), A_minus], [A_minus.T, np.zeros((n, n))]])
        H_plus = np.block([[np.zeros((n, n)), A_plus], [A_plus.T, np.zeros((n, n))]])
        inertia = [int(np.count_nonzero(sla.eigh(H, eigvals_only=True) > 0)) for H in (H_minus, H_plus)]
        if inertia[0] != inertia[1]:
            note = f"inertia mismatch {inertia}; V oracle skipped"
        else:
            R_minus, eps_minus = _congruence_factor(A_minus)
            R_plus, eps_plus = _congruence_factor(A_plus)
            if not np.array_equal(eps_minus, eps_plus):
                note = "sign patterns differ; V oracle skipped"
            else:
                V = np.linalg.solve(R_minus, R_plus)
                v_res = float(np.max(np.abs(V.T @ H_minus @ V - H_plus)))
                sgn, _ = np.linalg.slogdet(V)
                v_sign = int(sgn)
                v_parity = (1 - v_sign) // 2
    return Mod2FlowResult(parity, s_minus, s_plus, l_minus, l_plus, changes, changes % 2,
                          v_sign, v_parity, v_res, note, ts, signs)
