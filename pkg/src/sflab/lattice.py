"""Hypercubic torus geometry, site indexing and the lattice L2 / L2_1 norms.

Sites of the torus ``(aZ/Z)^d`` with ``a = 1/N`` are stored as integer
coordinates ``z in Z_N^d``.  Flat site indices are row-major in
``(z_1, ..., z_d)`` (``z_1`` slowest) and spinor components run fastest, so a
field component ``(site, s)`` lives at ``site * spinor_dim + s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class LatticeGeometry:
    """Torus with ``N`` sites per direction in ``d`` dimensions.

    ``bc_phase[j]`` is the phase (radians) picked up by every link that
    crosses the seam ``z_j = N-1 -> 0``; 0 is periodic, pi antiperiodic.
    """

    d: int
    N: int
    bc_phase: tuple[float, ...]
    spinor_dim: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension d must be >= 1, got {self.d}")
        if self.N < 2:
            raise ValueError(f"extent N must be >= 2, got {self.N}")
        if self.spinor_dim < 1:
            raise ValueError("spinor_dim must be positive")
        if len(self.bc_phase) != self.d:
            raise ValueError(f"need {self.d} boundary phases, got {len(self.bc_phase)}")
        object.__setattr__(self, "bc_phase", tuple(float(p) for p in self.bc_phase))

    @property
    def a(self) -> float:
        return 1.0 / self.N

    @property
    def a_exact(self) -> Fraction:
        return Fraction(1, self.N)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def volume(self) -> int:
        """Number of lattice sites, ``N^d``."""
        return self.N**self.d

    @property
    def dim(self) -> int:
        """Dimension of the space of spinor-valued fields."""
        return self.spinor_dim * self.volume

    def coords(self) -> np.ndarray:
        """Integer coordinates of all sites, shape ``(N^d, d)`` in index order."""
        grids = np.indices(self.shape).reshape(self.d, -1)
        return grids.T.copy()

    def shift(self, j: int, step: int = 1) -> np.ndarray:
        """Index of ``z + step*e_j`` for every site ``z`` (wrapped)."""
        c = self.coords()
        c[:, j] = (c[:, j] + step) % self.N
        return np.ravel_multi_index(c.T, self.shape)

    def crosses_seam(self, j: int) -> np.ndarray:
        """Boolean mask of sites whose forward link in direction j wraps."""
        return self.coords()[:, j] == self.N - 1

    def with_spinor(self, spinor_dim: int) -> "LatticeGeometry":
        return LatticeGeometry(self.d, self.N, self.bc_phase, spinor_dim)

    def with_extent(self, N: int) -> "LatticeGeometry":
        return LatticeGeometry(self.d, N, self.bc_phase, self.spinor_dim)


def build_geometry(d: int, N: int, bc_phase: Sequence[float] | None = None,
                   spinor_dim: int = 1) -> LatticeGeometry:
    if bc_phase is None:
        bc_phase = (0.0,) * d
    return LatticeGeometry(int(d), int(N), tuple(bc_phase), int(spinor_dim))


def site_index(geom: LatticeGeometry, coords: Sequence[int]) -> int:
    c = np.mod(np.asarray(coords, dtype=np.int64), geom.N)
    if c.shape != (geom.d,):
        raise ValueError(f"expected {geom.d} coordinates, got shape {c.shape}")
    return int(np.ravel_multi_index(tuple(c), geom.shape))


def site_coords(geom: LatticeGeometry, index: int) -> tuple[int, ...]:
    if not 0 <= index < geom.volume:
        raise IndexError(f"site index {index} out of range [0, {geom.volume})")
    return tuple(int(x) for x in np.unravel_index(index, geom.shape))


@dataclass(frozen=True)
class LatticeField:
    """Spinor-valued field on a geometry (flat vector, spinor index fastest)."""

    geometry: LatticeGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.geometry.dim,):
            raise ValueError(f"field length {v.shape} does not match geometry dim {self.geometry.dim}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    def site_values(self) -> np.ndarray:
        return self.values.reshape(self.geometry.volume, self.geometry.spinor_dim)


@dataclass(frozen=True)
class NormParams:
    m0: float = 1.0

    def __post_init__(self):
        if self.m0 == 0:
            raise ValueError("m0 must be non-zero")


def _values(field, geom: LatticeGeometry) -> np.ndarray:
    v = field.values if isinstance(field, LatticeField) else np.asarray(field)
    if v.shape != (geom.dim,):
        raise ValueError(f"field length {v.shape} does not match geometry dim {geom.dim}")
    return v


def norm_l2(field, geom: LatticeGeometry) -> float:
    """``(a^d sum_z |v(z)|^2)^(1/2)``."""
    v = _values(field, geom)
    return float(np.sqrt(geom.a**geom.d * np.vdot(v, v).real))


def norm_l21(field, geom: LatticeGeometry, gauge=None, params: NormParams = NormParams()) -> float:
    """Lattice Sobolev norm built from the gauge-covariant forward differences."""
    from .dirac import forward_difference_matrix
    from .gauge import trivial_gauge

    v = _values(field, geom)
    if gauge is None:
        gauge = trivial_gauge(geom)
    vol = geom.a**geom.d
    total = vol * np.vdot(v, v).real
    for j in range(geom.d):
        dv = forward_difference_matrix(gauge, j).mat @ v
        total += vol / params.m0**2 * np.vdot(dv, dv).real
    return float(np.sqrt(total))
