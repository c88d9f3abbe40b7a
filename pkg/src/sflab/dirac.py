"""Lattice Dirac operators on U(1) backgrounds and the domain-wall mass families.

Conventions
-----------
* Complex even-d mode: ``sigma(e_j) = 1j * gamma_j`` with Hermitian
  Jordan-Wigner gamma matrices, so ``sigma(e_j)^2 = -1`` and every
  ``sigma(e_j)`` is anti-Hermitian.  The grading is
  ``gamma = (-1j)^(d/2) sigma(e_1) ... sigma(e_d)``; for d = 2 this is
  ``-sigma_z``.  With this orientation the index of the Dirac operator on a
  charge-Q background is +Q.
* Real odd-d mode: ``sigma(eps_j)`` real symmetric, squares to +1, no grading.
* Matrices act on flat fields with the site index slowest and the spinor
  index fastest, i.e. ``kron(site_operator, spinor_matrix)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .gauge import GaugeField
from .lattice import LatticeGeometry
from .spectral import AffineFamily

HERMITIAN_TOL = 1e-13

_PX = np.array([[0, 1], [1, 0]], dtype=complex)
_PY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class OperatorMatrix:
    """Sparse operator on a field space; ``hermitian`` is checked on construction."""

    mat: sp.csr_matrix = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.mat)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        if self.hermitian:
            diff = m - m.conj().T
            err = abs(diff).max() if diff.nnz else 0.0
            if err > HERMITIAN_TOL * max(1.0, abs(m).max()):
                raise ValueError(f"operator flagged Hermitian but |M - M^dag|_max = {err:.3e}")
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.mat.data) or not np.any(self.mat.data.imag)

    def toarray(self) -> np.ndarray:
        return self.mat.toarray()

    def __matmul__(self, other):
        return self.mat @ other


def dump_operator(op: OperatorMatrix, path) -> None:
    """Debug dump: dimension line, then ``row col re im`` triplets."""
    coo = op.mat.tocoo()
    lines = [str(op.dim)]
    for r, c, v in zip(coo.row, coo.col, coo.data):
        v = complex(v)
        lines.append(f"{r} {c} {v.real:.17g} {v.imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_operator_dump(path) -> OperatorMatrix:
    rows = Path(path).read_text().split("\n")
    n = int(rows[0])
    data = np.array([[float(x) for x in r.split()] for r in rows[1:] if r.strip()]).reshape(-1, 4)
    vals = data[:, 2] + 1j * data[:, 3]
    m = sp.csr_matrix((vals, (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))
    return OperatorMatrix(m)


# --------------------------------------------------------------------------
# Clifford representations


@dataclass(frozen=True)
class CliffordRep:
    d: int
    mode: str
    sigma: tuple[np.ndarray, ...] = field(repr=False)
    gamma: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.sigma[0].shape[0]


def _kron_all(mats):
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def clifford_rep(d: int, mode: Literal["complex-even", "real-odd"] = "complex-even") -> CliffordRep:
    if mode == "complex-even":
        if d < 2 or d % 2:
            raise ValueError(f"complex-even mode needs even d, got {d}")
        k = d // 2
        herm = []
        for j in range(k):
            for p in (_PX, _PY):
                herm.append(_kron_all([_PZ] * j + [p] + [_I2] * (k - j - 1)))
        sigma = tuple(1j * g for g in herm)
        prod = _kron_all([_I2] * k)
        for s in sigma:
            prod = prod @ s
        gamma = (-1j) ** k * prod
        return CliffordRep(d, mode, sigma, gamma)
    if mode == "real-odd":
        if d % 2 == 0:
            raise ValueError(f"real-odd mode needs odd d, got {d}")
        if d == 1:
            sigma = (np.ones((1, 1)),)
        elif d == 3:
            px, pz = _PX.real, _PZ.real
            pypy = np.kron(_PY, _PY).real
            sigma = (np.kron(px, np.eye(2)), np.kron(pz, np.eye(2)), pypy)
        else:
            raise ValueError("real-odd representations are provided for d = 1 and d = 3")
        return CliffordRep(d, mode, tuple(np.asarray(s, dtype=float) for s in sigma), None)
    raise ValueError(f"unknown Clifford mode {mode!r}")


# --------------------------------------------------------------------------
# difference operators


def _forward_scalar(gauge: GaugeField, j: int) -> sp.csr_matrix:
    geom = gauge.geometry
    n = geom.volume
    rows = np.arange(n)
    U = gauge.links(j)
    if gauge.is_real():
        U = U.real
    off = sp.csr_matrix((U / geom.a, (rows, geom.shift(j))), shape=(n, n))
    return off - sp.identity(n, format="csr") / geom.a


def _spin(op: sp.spmatrix, spinor_matrix) -> sp.csr_matrix:
    return sp.kron(op, sp.csr_matrix(spinor_matrix), format="csr")


def forward_difference_matrix(gauge: GaugeField, j: int) -> OperatorMatrix:
    """``(d^f_j u)(z) = [U_j(z) u(z + a e_j) - u(z)] / a`` on spinor fields."""
    s = gauge.geometry.spinor_dim
    return OperatorMatrix(_spin(_forward_scalar(gauge, j), np.eye(s)))


def backward_difference_matrix(gauge: GaugeField, j: int) -> OperatorMatrix:
    """``(d^b_j u)(z) = [u(z) - U_j(z - a e_j)^-1 u(z - a e_j)] / a``."""
    f = forward_difference_matrix(gauge, j).mat
    return OperatorMatrix(-f.conj().T)


def central_difference_matrix(gauge: GaugeField, j: int) -> OperatorMatrix:
    f = forward_difference_matrix(gauge, j).mat
    return OperatorMatrix((f - f.conj().T) / 2)


def _scalar_pieces(gauge: GaugeField):
    geom = gauge.geometry
    fwd = [_forward_scalar(gauge, j) for j in range(geom.d)]
    central = [(f - f.conj().T) / 2 for f in fwd]
    lap = sum(f @ f.conj().T for f in fwd) * (geom.a / 2)
    return central, sp.csr_matrix(lap)


def _check_rep(gauge: GaugeField, rep: CliffordRep):
    if rep.d != gauge.geometry.d:
        raise ValueError(f"Clifford rep is for d={rep.d}, gauge has d={gauge.geometry.d}")


def naive_dirac(gauge: GaugeField, rep: CliffordRep) -> OperatorMatrix:
    """``sum_j sigma(e_j) d_j`` with the central covariant difference."""
    _check_rep(gauge, rep)
    central, _ = _scalar_pieces(gauge)
    m = sum(_spin(c, s) for c, s in zip(central, rep.sigma))
    return OperatorMatrix(m, hermitian=rep.mode == "complex-even")


def wilson_term(gauge: GaugeField, rep: CliffordRep | None = None) -> OperatorMatrix:
    """``W = (a/2) sum_j d^f_j (d^f_j)^*``; positive semidefinite."""
    _, lap = _scalar_pieces(gauge)
    s = rep.dim if rep is not None else gauge.geometry.spinor_dim
    return OperatorMatrix(_spin(lap, np.eye(s)), hermitian=True)


def wilson_dirac(gauge: GaugeField, rep: CliffordRep) -> OperatorMatrix:
    """``D^W = D^naive + gamma W`` (complex even-d mode)."""
    if rep.mode != "complex-even":
        raise ValueError("wilson_dirac needs the complex-even representation")
    _check_rep(gauge, rep)
    central, lap = _scalar_pieces(gauge)
    m = sum(_spin(c, s) for c, s in zip(central, rep.sigma)) + _spin(lap, rep.gamma)
    return OperatorMatrix(m, hermitian=True)


def wilson_dirac_real(gauge: GaugeField, rep: CliffordRep) -> OperatorMatrix:
    """Real Wilson operator ``sum_j sigma(eps_j) d_j + W`` for odd d."""
    if rep.mode != "real-odd":
        raise ValueError("wilson_dirac_real needs the real-odd representation")
    _check_rep(gauge, rep)
    if not gauge.is_real():
        raise ValueError("complex link present: real mode needs links in {+1, -1}")
    central, lap = _scalar_pieces(gauge)
    m = sum(_spin(c, s) for c, s in zip(central, rep.sigma)) + _spin(lap, np.eye(rep.dim))
    m = sp.csr_matrix(m)
    return OperatorMatrix(sp.csr_matrix(m.real) if np.iscomplexobj(m.data) else m)


# --------------------------------------------------------------------------
# domain walls


@dataclass(frozen=True)
class Region:
    """Analytic description of X_+.

    ``kind`` is ``"torus"`` (X_+ is everything), ``"band"``
    (``lo <= x_1 < hi``) or ``"disk"`` (closed disk of ``radius`` about
    ``center``).  ``complement`` swaps the roles of X_+ and X_-.
    """

    kind: str = "torus"
    lo: float = 0.25
    hi: float = 0.75
    center: tuple[float, ...] = (0.5, 0.5)
    radius: float = 0.25
    complement: bool = False

    def __post_init__(self):
        if self.kind not in ("torus", "band", "disk"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind == "band" and not 0 <= self.lo < self.hi <= 1:
            raise ValueError(f"band needs 0 <= lo < hi <= 1, got [{self.lo}, {self.hi})")
        if self.kind == "disk" and self.radius <= 0:
            raise ValueError("disk radius must be positive")
        if self.kind == "torus" and self.complement:
            raise ValueError("the complement of the whole torus is empty")

    def contains_sites(self, coords: np.ndarray, N: int) -> np.ndarray:
        """Membership of integer sites ``coords`` (shape (n, d)) on an N-lattice."""
        if self.kind == "torus":
            inside = np.ones(len(coords), dtype=bool)
        elif self.kind == "band":
            lo = Fraction(self.lo).limit_denominator(10**9)
            hi = Fraction(self.hi).limit_denominator(10**9)
            z = coords[:, 0].astype(np.int64)
            # exact rational comparison lo <= z/N < hi
            inside = (z * lo.denominator >= lo.numerator * N) & (z * hi.denominator < hi.numerator * N)
        else:
            c = np.asarray(self.center, dtype=np.float64)
            delta = coords / N - c
            delta -= np.round(delta)
            inside = np.sum(delta**2, axis=1) <= self.radius**2
        return ~inside if self.complement else inside

    def on_edge_sites(self, coords: np.ndarray, N: int) -> np.ndarray:
        """Sites lying exactly on the wall Y."""
        if self.kind == "torus":
            return np.zeros(len(coords), dtype=bool)
        if self.kind == "band":
            z = coords[:, 0].astype(np.int64)
            out = np.zeros(len(coords), dtype=bool)
            for edge in (self.lo, self.hi):
                e = Fraction(edge).limit_denominator(10**9)
                out |= np.mod(z * e.denominator - e.numerator * N, N * e.denominator) == 0
            return out
        delta = coords / N - np.asarray(self.center, dtype=np.float64)
        delta -= np.round(delta)
        return np.abs(np.sum(delta**2, axis=1) - self.radius**2) < 1e-12

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "center": list(self.center),
                "radius": self.radius, "complement": self.complement}


@dataclass(frozen=True)
class DomainWall:
    region: Region
    geometry: LatticeGeometry
    kappa: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.array(self.kappa, dtype=np.float64)
        if k.shape != (self.geometry.volume,) or not np.all(np.abs(k) <= 1):
            raise ValueError("kappa must lie in [-1, 1] at every site")
        off_wall = ~self.region.on_edge_sites(self.geometry.coords(), self.geometry.N)
        if not np.all(np.abs(k[off_wall]) == 1):
            raise ValueError("kappa must be +-1 away from the wall")
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)


def domain_wall_profile(geom: LatticeGeometry, region: Region,
                        edge_value: float | None = None) -> DomainWall:
    """kappa = +1 on sites of X_+ and -1 elsewhere.

    Band membership is half-open, ``lo <= z_1 a < hi``: a site exactly on the
    lower edge counts as inside, one exactly on the upper edge as outside.
    ``edge_value`` overrides kappa on sites lying exactly on the wall.
    """
    if region.kind == "disk" and len(region.center) != geom.d:
        raise ValueError("disk center must have d components")
    inside = region.contains_sites(geom.coords(), geom.N)
    if region.kind != "torus" and (inside.all() or not inside.any()):
        raise ValueError(f"degenerate {region.kind} region on N={geom.N}: X_+ is empty or everything")
    kappa = np.where(inside, 1.0, -1.0)
    if edge_value is not None:
        if not -1.0 <= edge_value <= 1.0:
            raise ValueError("edge_value must lie in [-1, 1]")
        kappa[region.on_edge_sites(geom.coords(), geom.N)] = edge_value
    return DomainWall(region, geom, kappa)


def kappa_t(wall: DomainWall, t: float) -> np.ndarray:
    """``kappa_t = (1+t)/2 kappa - (1-t)/2``."""
    if not -1.0 <= t <= 1.0:
        raise ValueError(f"t = {t} outside [-1, 1]")
    return (1 + t) / 2 * wall.kappa - (1 - t) / 2


@dataclass(frozen=True)
class MassFamilyParams:
    m: float
    wall: DomainWall

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got {self.m}")


def dw_operator(gauge: GaugeField, rep: CliffordRep, params: MassFamilyParams, t: float,
                dirac: OperatorMatrix | None = None) -> OperatorMatrix:
    """``h(t) = D^W - m diag(kappa_t) gamma``."""
    k = kappa_t(params.wall, t)
    if dirac is None:
        dirac = wilson_dirac(gauge, rep)
    mass = _spin(sp.diags(k), rep.gamma) * params.m
    return OperatorMatrix(dirac.mat - mass, hermitian=True)


def dw_family(gauge: GaugeField, rep: CliffordRep, params: MassFamilyParams) -> AffineFamily:
    """The selfadjoint family t -> h(t), assembled from its endpoints."""
    dw = wilson_dirac(gauge, rep)
    h_minus = dw_operator(gauge, rep, params, -1.0, dw).mat
    h_plus = dw_operator(gauge, rep, params, 1.0, dw).mat
    return AffineFamily(h_minus, h_plus, hermitian=True)


def dw_operator_real(gauge: GaugeField, rep: CliffordRep, params: MassFamilyParams, t: float,
                     dirac: OperatorMatrix | None = None) -> OperatorMatrix:
    """``A(t) = D^W - m diag(kappa_t)`` in the real odd-d mode."""
    k = kappa_t(params.wall, t)
    if dirac is None:
        dirac = wilson_dirac_real(gauge, rep)
    return OperatorMatrix(dirac.mat - params.m * _spin(sp.diags(k), np.eye(rep.dim)))


def dw_family_real(gauge: GaugeField, rep: CliffordRep, params: MassFamilyParams) -> AffineFamily:
    dw = wilson_dirac_real(gauge, rep)
    a_minus = dw_operator_real(gauge, rep, params, -1.0, dw).mat
    a_plus = dw_operator_real(gauge, rep, params, 1.0, dw).mat
    return AffineFamily(a_minus, a_plus, hermitian=False)


def doubled_hermitian(A) -> OperatorMatrix:
    """``H = [[0, A], [A^T, 0]]`` for a real operator A."""
    m = A.mat if isinstance(A, OperatorMatrix) else sp.csr_matrix(A)
    if np.iscomplexobj(m.data) and np.any(m.data.imag):
        raise ValueError("doubled_hermitian expects a real operator")
    m = sp.csr_matrix(m.real) if np.iscomplexobj(m.data) else m
    return OperatorMatrix(sp.bmat([[None, m], [m.T, None]], format="csr"), hermitian=True)


def elliptic_estimate(gauge: GaugeField, rep: CliffordRep, samples: int = 100,
                      seed: int = 0) -> float:
    """Largest observed ``[sum_j |d^f_j phi|^2 - 2 |D^W phi|^2] / |phi|^2``.

    Reported only; a finite value uniform in a is the expected behaviour.
    """
    geom = gauge.geometry
    rng = np.random.default_rng(seed)
    dw = wilson_dirac(gauge, rep).mat
    fwd = [_spin(_forward_scalar(gauge, j), np.eye(rep.dim)) for j in range(geom.d)]
    n = rep.dim * geom.volume
    worst = -np.inf
    for _ in range(samples):
        phi = rng.normal(size=n) + 1j * rng.normal(size=n)
        grad = sum(np.vdot(f @ phi, f @ phi).real for f in fwd)
        dphi = dw @ phi
        worst = max(worst, (grad - 2 * np.vdot(dphi, dphi).real) / np.vdot(phi, phi).real)
    return float(worst)
