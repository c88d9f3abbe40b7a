"""U(1) link variables on the torus: standard backgrounds, plaquettes, charge.

Links are stored as phases ``theta[site, j]``; the link from ``z`` to
``z + a e_j`` is ``exp(1j * theta)``.  Boundary phases live on the geometry,
never in the gauge field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .lattice import LatticeGeometry

RNG_TAG = "numpy.random.Generator(PCG64)"
CHARGE_TOL = 1e-8


class RoughFieldError(ValueError):
    """Raised when the geometric charge is not well defined."""


@dataclass(frozen=True)
class GaugeField:
    geometry: LatticeGeometry
    link_phase: np.ndarray = field(repr=False)
    seed: int | None = None
    generator: str = "deterministic"

    def __post_init__(self):
        th = np.array(self.link_phase, dtype=np.float64)
        expected = (self.geometry.volume, self.geometry.d)
        if th.shape != expected:
            raise ValueError(f"link_phase has shape {th.shape}, expected {expected}")
        if not np.all(np.isfinite(th)):
            raise ValueError("link phases must be finite")
        th.setflags(write=False)
        object.__setattr__(self, "link_phase", th)

    def links(self, j: int, include_bc: bool = True) -> np.ndarray:
        """Complex link values in direction j, optionally with the seam phase."""
        th = self.link_phase[:, j]
        if include_bc:
            th = th + np.where(self.geometry.crosses_seam(j), self.geometry.bc_phase[j], 0.0)
        return np.exp(1j * th)

    def is_real(self, atol: float = 1e-14) -> bool:
        """True when every link including seam phases is +-1."""
        return all(np.allclose(self.links(j).imag, 0.0, atol=atol) for j in range(self.geometry.d))


@dataclass(frozen=True)
class ContinuumLine:
    """Connection whose straight-line transports have a closed form.

    ``alpha[j]`` is a constant connection coefficient in direction j
    (holonomy ``exp(i alpha_j)`` around the torus).  ``flux`` adds, for
    d = 2, the constant-curvature connection ``A_1 = -2 pi flux x_2`` with
    transition ``exp(2 pi i flux x_1)`` across the ``x_2`` seam; its lattice
    restriction is :func:`uniform_flux_u1`.
    """

    alpha: tuple[float, ...]
    flux: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))
        if not all(np.isfinite(self.alpha)):
            raise ValueError("connection coefficients must be finite")
        if self.flux and len(self.alpha) != 2:
            raise ValueError("flux backgrounds are two-dimensional")

    def transport(self, x: np.ndarray, z: np.ndarray, bc_phase: Sequence[float]) -> np.ndarray:
        """Phase of ``T_{x,z}`` along the minimal segment from z to x.

        ``x`` and ``z`` are arrays of shape ``(n, d)`` of physical positions
        in ``[0, 1)``; the segment has components shorter than 1/2.
        """
        delta = x - z
        delta -= np.round(delta)
        xt = z + delta
        wraps = np.floor(xt).astype(np.int64)
        phase = -(delta @ np.asarray(self.alpha))
        if self.flux:
            phase += 2 * np.pi * self.flux * delta[:, 0] * (z[:, 1] + delta[:, 1] / 2)
            phase -= wraps[:, 1] * 2 * np.pi * self.flux * np.mod(xt[:, 0], 1.0)
        phase -= wraps @ np.asarray(bc_phase, dtype=np.float64)
        return phase

    def lattice_gauge(self, geom: LatticeGeometry) -> GaugeField:
        """Links obtained by restricting the transports to lattice edges."""
        th = wilson_line_gauge(geom, self.alpha).link_phase.copy()
        if self.flux:
            th += uniform_flux_u1(geom, self.flux).link_phase
        return GaugeField(geom, th, generator="continuum-line")


def trivial_gauge(geom: LatticeGeometry) -> GaugeField:
    return GaugeField(geom, np.zeros((geom.volume, geom.d)))


def uniform_flux_u1(geom: LatticeGeometry, Q: int) -> GaugeField:
    """Constant-curvature background with every plaquette equal to 2 pi Q / N^2."""
    if geom.d != 2:
        raise ValueError("uniform flux background requires d = 2")
    N = geom.N
    if 2 * abs(Q) >= N * N:
        raise ValueError(f"|Q| = {abs(Q)} leaves the principal branch for N = {N}")
    n1, n2 = geom.coords().T
    th = np.zeros((geom.volume, 2))
    th[:, 0] = -2 * np.pi * Q * n2 / N**2
    th[:, 1] = np.where(n2 == N - 1, 2 * np.pi * Q * n1 / N, 0.0)
    return GaugeField(geom, th, generator=f"uniform-flux(Q={Q})")


def localized_flux_u1(geom: LatticeGeometry, Q: int, columns: Sequence[int]) -> GaugeField:
    """Flux ``2 pi Q`` spread evenly over the plaquette columns ``columns``.

    Plaquettes whose first coordinate is outside ``columns`` carry zero
    phase, so the Wilson lines along direction 2 are trivial on every row
    left of the first column and right of the last one.
    """
    if geom.d != 2:
        raise ValueError("localized flux background requires d = 2")
    N = geom.N
    cols = np.unique(np.mod(np.asarray(columns, dtype=np.int64), N))
    if cols.size == 0:
        raise ValueError("need at least one flux column")
    w = np.zeros(N)
    w[cols] = 1.0 / cols.size
    if 2 * abs(Q) * w.max() >= N:
        raise ValueError("plaquette phase leaves the principal branch")
    start = int(cols[0])
    # cumulative weight measured from the first column so rows before it see W = 0
    order = np.roll(np.arange(N), -start)
    cum = np.zeros(N)
    cum[order] = np.concatenate([[0.0], np.cumsum(w[order])[:-1]])
    n1, n2 = geom.coords().T
    th = np.zeros((geom.volume, 2))
    th[:, 0] = -2 * np.pi * Q * w[n1] * n2 / N
    th[:, 1] = np.where(n2 == N - 1, 2 * np.pi * Q * cum[n1], 0.0)
    return GaugeField(geom, th, generator=f"localized-flux(Q={Q})")


def wilson_line_gauge(geom: LatticeGeometry, alpha: Sequence[float]) -> GaugeField:
    """Flat background with holonomy ``exp(i alpha_j)`` around direction j."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (geom.d,):
        raise ValueError(f"need {geom.d} holonomy angles")
    th = np.tile(alpha / geom.N, (geom.volume, 1))
    return GaugeField(geom, th, generator="wilson-line")


def random_gauge_transform(gauge: GaugeField, seed: int) -> tuple[GaugeField, np.ndarray]:
    """Apply ``U_j(z) -> g(z) U_j(z) g(z + a e_j)^-1`` with random site phases.

    Returns the transformed field and the site phases ``g = exp(1j * phi)``.
    """
    geom = gauge.geometry
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2 * np.pi, geom.volume)
    th = gauge.link_phase.copy()
    for j in range(geom.d):
        th[:, j] += phi - phi[geom.shift(j)]
    out = GaugeField(geom, th, seed=seed, generator=RNG_TAG)
    return out, np.exp(1j * phi)


def random_smooth_gauge(geom: LatticeGeometry, Q: int = 0, seed: int = 0,
                        noise: float = 0.05, alpha: Sequence[float] | None = None) -> GaugeField:
    """Gauge transform of a flux / holonomy background plus small link noise."""
    if noise > 0.05:
        raise ValueError("link noise above 0.05 rad is not supported")
    if geom.d == 2 and Q:
        base = uniform_flux_u1(geom, Q).link_phase
    else:
        if Q:
            raise ValueError("flux backgrounds require d = 2")
        base = np.zeros((geom.volume, geom.d))
    if alpha is not None:
        base = base + wilson_line_gauge(geom, alpha).link_phase
    rng = np.random.default_rng(seed)
    th = base + rng.uniform(-noise, noise, base.shape)
    out, _ = random_gauge_transform(GaugeField(geom, th), int(rng.integers(2**31)))
    return GaugeField(geom, out.link_phase, seed=seed, generator=RNG_TAG)


def _wrap(theta):
    """Principal branch (-pi, pi]."""
    w = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def plaquette_phases(gauge: GaugeField, i: int = 0, j: int = 1) -> np.ndarray:
    """Principal-branch plaquette angles in the (i, j) plane at every site."""
    if i == j:
        raise ValueError("plaquette needs two distinct directions")
    geom = gauge.geometry
    th = gauge.link_phase
    raw = th[:, i] + th[geom.shift(i), j] - th[geom.shift(j), i] - th[:, j]
    return _wrap(raw)


def plaquette_phase(gauge: GaugeField, site: int, i: int, j: int) -> float:
    return float(plaquette_phases(gauge, i, j)[site])


def topological_charge(gauge: GaugeField) -> int:
    """Geometric charge ``(1/2 pi) sum_plaquettes arg P`` of a d = 2 field."""
    if gauge.geometry.d != 2:
        raise ValueError("topological charge is defined here for d = 2")
    p = plaquette_phases(gauge, 0, 1)
    if np.any(np.pi - np.abs(p) < CHARGE_TOL):
        raise RoughFieldError("rough field: plaquette at the branch cut")
    q = p.sum() / (2 * np.pi)
    if abs(q - round(q)) > CHARGE_TOL:
        raise RoughFieldError(f"rough field: charge {q!r} is not near an integer")
    return int(round(q))


def save_gauge(gauge: GaugeField, path) -> None:
    geom = gauge.geometry
    doc = {
        "d": geom.d,
        "N": geom.N,
        "bc_phase": list(geom.bc_phase),
        "link_phase": gauge.link_phase.ravel().tolist(),
        "seed": gauge.seed,
        "generator": gauge.generator,
    }
    # json writes floats with repr, which round-trips doubles exactly
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_gauge(path, spinor_dim: int = 1) -> GaugeField:
    doc = json.loads(Path(path).read_text())
    geom = LatticeGeometry(doc["d"], doc["N"], tuple(doc["bc_phase"]), spinor_dim)
    th = np.asarray(doc["link_phase"], dtype=np.float64).reshape(geom.volume, geom.d)
    return GaugeField(geom, th, seed=doc.get("seed"), generator=doc.get("generator", "file"))
