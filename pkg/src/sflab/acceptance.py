"""Acceptance criteria as executable checks.

Each criterion returns a :class:`Verdict`; failures are verdicts, never
exceptions.  ``run_suite("core")`` runs the fast criteria and ``"full"`` all
eight.
"""

from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .continuum import (CALIBRATION, DwSetup, aps_prediction_band, as_index, calibrate_signs,
                        reference_setup)
from .dirac import (Region, clifford_rep, naive_dirac, wilson_dirac, wilson_term)
from .gauge import ContinuumLine, random_gauge_transform, random_smooth_gauge
from .interpolator import (CombinedFamily, build_interpolator, check_dw_commutator, check_props,
                           staple_scan)
from .lattice import build_geometry
from .spectral import eta_invariant, mod2_flow, spectral_flow_tracked

BAND = Region("band", 0.25, 0.75)


@dataclass
class Verdict:
    id: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.id}] {self.title}: {self.detail} ({self.seconds:.1f} s)"


def _track(setup: DwSetup, N: int | None = None, jobs: int | None = None, grid: int = 16):
    return spectral_flow_tracked(setup.family(N), grid=grid, window=10 * setup.m, jobs=jobs)


def criterion_1(jobs=None):
    """Closed torus: sf = Q for uniform flux Q in -2..2 at N=16, m=1."""
    parts, ok = [], True
    for Q in range(-2, 3):
        setup = DwSetup(16, Q, Region("torus"), 1.0)
        t0 = time.perf_counter()
        res = _track(setup, jobs=jobs)
        dt = time.perf_counter() - t0
        charge = as_index(setup.gauge_field())
        eta_sf = -res.eta_plus // 2 if res.eta_minus == 0 else None
        good = res.net == Q == charge == eta_sf and dt < 60
        ok &= good
        parts.append(f"Q={Q}:sf={res.net},eta={eta_sf},charge={charge},{dt:.1f}s")
    return ok, "; ".join(parts)


def eta_identity_suite() -> list[tuple[str, DwSetup]]:
    """Configurations over which the eta identity is checked."""
    pi = math.pi
    s = []
    for Q in range(-2, 3):
        s.append((f"torus Q={Q}", DwSetup(16, Q, Region("torus"), 1.0)))
    s.append(("torus Q=1 m=0.5", DwSetup(16, 1, Region("torus"), 0.5)))
    s.append(("torus Q=1 m=2", DwSetup(16, 1, Region("torus"), 2.0)))
    s.append(("band Q=1 periodic", DwSetup(16, 1, BAND, 1.0)))
    s.append(("band Q=2 periodic", DwSetup(16, 2, BAND, 1.0)))
    for Q in (0, 1, -1):
        s.append((f"band Q={Q} phase pi", DwSetup(16, Q, BAND, 1.0, (0.0, pi))))
    s.append(("complement band Q=1", DwSetup(16, 1, Region("band", 0.25, 0.75, complement=True), 1.0)))
    s.append(("disk Q=1", DwSetup(16, 1, Region("disk", radius=0.3), 1.0, (0.0, pi))))
    s.append(("localized band Q=1", DwSetup(16, 1, BAND, 1.0, (0.0, pi), gauge="localized")))
    s.append(("random torus Q=1", DwSetup(16, 1, Region("torus"), 1.0, gauge="random", seed=3,
                                          noise=0.05)))
    return s


def criterion_2(jobs=None):
    """sf_tracked = -eta(h(1))/2 and eta(h(-1)) = 0 over at least 12 configurations."""
    bad, n = [], 0
    for name, setup in eta_identity_suite():
        res = _track(setup, jobs=jobs)
        n += 1
        if not (res.eta_minus == 0 and res.eta_plus % 2 == 0 and res.net == -res.eta_plus // 2):
            bad.append(f"{name}: sf={res.net}, eta(1)={res.eta_plus}, eta(-1)={res.eta_minus}")
    return not bad and n >= 12, f"{n} configs" + (f"; mismatches: {bad}" if bad else ", all identities exact")


def criterion_3(jobs=None):
    """Band wall: sf identical at N=16 and N=32 for Q in {0,1,2}."""
    parts, ok = [], True
    for Q in (0, 1, 2):
        setup = DwSetup(16, Q, BAND, 1.0)
        t0 = time.perf_counter()
        s16 = _track(setup, 16, jobs).net
        t1 = time.perf_counter()
        s32 = _track(setup, 32, jobs).net
        dt = time.perf_counter() - t1
        ok &= s16 == s32 and dt < 600
        parts.append(f"Q={Q}:{s16}/{s32} (N=32 {dt:.0f}s)")
    return ok, "; ".join(parts)


def criterion_4(jobs=None):
    """APS prediction matches sf for band walls with transverse phase pi."""
    pi = math.pi
    ref = reference_setup()
    cal = calibrate_signs(_track(ref, jobs=jobs).net, ref.gauge_field(), ref.region)
    ok = cal == CALIBRATION
    parts = [f"calibration {cal}"]
    for Q in (0, 1, 2):
        setup = DwSetup(16, Q, BAND, 1.0, (0.0, pi))
        sf = _track(setup, jobs=jobs).net
        pred = aps_prediction_band(setup.gauge_field(), BAND)
        good = abs(sf - pred.predicted_index) < 0.5
        ok &= good
        parts.append(f"Q={Q}:sf={sf},pred={pred.predicted_index:.6f}")
    for Q in (1, 2):
        setup = DwSetup(16, Q, BAND, 1.0, (0.0, pi), gauge="localized")
        pred = aps_prediction_band(setup.gauge_field(), BAND)
        good = abs(pred.predicted_index - round(pred.predicted_index)) < 1e-3 and pred.rounded == Q
        ok &= good
        parts.append(f"localized Q={Q}:pred={pred.predicted_index:.6f}")
    return ok, "; ".join(parts)


def mod2_setup(bc: float, N: int = 16, m: float = 1.0):
    from .dirac import MassFamilyParams, domain_wall_profile, dw_family_real
    from .gauge import trivial_gauge
    geom = build_geometry(1, N, (bc,))
    wall = domain_wall_profile(geom, Region("torus"))
    return dw_family_real(trivial_gauge(geom), clifford_rep(1, "real-odd"), MassFamilyParams(m, wall))


def criterion_5(jobs=None):
    """Mod-two flow in d=1: parity 1 periodic, 0 antiperiodic, three routes agree."""
    t0 = time.perf_counter()
    out, ok = [], True
    for bc, want in ((0.0, 1), (math.pi, 0)):
        r = mod2_flow(mod2_setup(bc), grid=32)
        good = r.parity == want and r.tracked_parity == want and r.v_parity == want
        ok &= good
        out.append(f"bc={bc:.3f}:det={r.parity},tracked={r.tracked_parity},V={r.v_parity}")
    dt = time.perf_counter() - t0
    return ok and dt < 5, "; ".join(out) + f"; {dt:.2f}s"


def criterion_6(jobs=None):
    """Interpolator rates and partition of unity."""
    props = check_props((4, 8, 16, 32), 4, d=2, trials=8)
    comm = check_dw_commutator(BAND, (4, 8, 16, 32), 4, d=2)
    ok = (props.slope_r1 >= 0.8 and props.pou_residual <= 1e-12
          and comm.slopes[0.0] >= 0.45 and comm.slopes[1.0] >= 0.45)
    return ok, (f"r1 slope {props.slope_r1:.3f} (worst-case {props.slope_r1_worst:.3f}); "
                f"commutator slopes t=0 {comm.slopes[0.0]:.3f}, t=1 {comm.slopes[1.0]:.3f}; "
                f"partition residual {props.pou_residual:.1e}")


def criterion_7(jobs=None):
    """Combined operator invertible along the staple path (coarse 8, fine 32, Q=1 band)."""
    t0 = time.perf_counter()
    coarse = build_geometry(2, 8, None, 2)
    pair = build_interpolator(coarse, coarse.with_extent(32), ContinuumLine((0.0, 0.0), flux=1))
    rep = staple_scan(CombinedFamily(pair, 1.0, BAND), 20, jobs)
    dt = time.perf_counter() - t0
    return rep.minimum > 1e-3 and dt < 1200, f"min |eig| over 20 samples {rep.minimum:.4f}; {dt:.0f}s"


def free_wilson_oracle(N: int, bc=(0.0, 0.0), m: float = 0.0) -> np.ndarray:
    """Sorted spectrum of the free d=2 Wilson operator (minus m gamma) from momentum space."""
    a = 1.0 / N
    k = np.arange(N)
    p1 = (2 * np.pi * k + bc[0]) / N
    p2 = (2 * np.pi * k + bc[1]) / N
    P1, P2 = np.meshgrid(p1, p2, indexing="ij")
    s2 = (np.sin(P1) ** 2 + np.sin(P2) ** 2) / a**2
    w = (2 - np.cos(P1) - np.cos(P2)) / a - m
    e = np.sqrt(s2 + w**2).ravel()
    return np.sort(np.concatenate([e, -e]))


def property_checks(N: int, seed: int = 0) -> list[tuple[str, bool, float]]:
    rep = clifford_rep(2)
    geom = build_geometry(2, N, (0.0, math.pi), 2)
    g = random_smooth_gauge(geom, 1, seed, 0.05)
    out = []
    dw = wilson_dirac(g, rep).mat
    herm = abs(dw - dw.conj().T).max()
    out.append(("hermiticity", herm <= 1e-13, float(herm)))
    G = np.kron(np.eye(geom.volume), rep.gamma)
    dn = naive_dirac(g, rep).toarray()
    W = wilson_term(g, rep).toarray()
    anti = max(np.abs(G @ dn + dn @ G).max(), np.abs(G @ W - W @ G).max())
    out.append(("gamma anticommutation", anti <= 1e-13, float(anti)))
    g2, _ = random_gauge_transform(g, seed + 1)
    dev = np.max(np.abs(sla.eigh(dw.toarray(), eigvals_only=True)
                        - sla.eigh(wilson_dirac(g2, rep).toarray(), eigvals_only=True)))
    out.append(("gauge covariance", dev <= 1e-10, float(dev)))
    setup = DwSetup(N, 1, Region("torus"), 1.0, (0.0, math.pi), gauge="random", seed=seed, noise=0.05)
    fam = setup.family()
    nets = {spectral_flow_tracked(fam, grid=gr).net for gr in (4, 8, 16, 32)}
    out.append(("grid refinement", len(nets) == 1, float(len(nets) - 1)))
    from .gauge import trivial_gauge
    free = wilson_dirac(trivial_gauge(geom), rep).toarray()
    fo = np.max(np.abs(sla.eigh(free, eigvals_only=True) - free_wilson_oracle(N, (0.0, math.pi))))
    out.append(("Fourier oracle", fo <= 1e-10, float(fo)))
    return out


def criterion_8(jobs=None):
    """Property suite at N in {4, 8}."""
    ok, parts = True, []
    for N in (4, 8):
        for name, good, val in property_checks(N):
            ok &= good
            parts.append(f"N={N} {name} {'ok' if good else 'FAILED'} ({val:.1e})")
    return ok, "; ".join(parts)


CRITERIA: dict[int, tuple[str, Callable]] = {
    1: ("closed-torus index", criterion_1),
    2: ("eta identity", criterion_2),
    3: ("a-independence", criterion_3),
    4: ("APS prediction match", criterion_4),
    5: ("mod-two flow", criterion_5),
    6: ("interpolator rates", criterion_6),
    7: ("staple invertibility", criterion_7),
    8: ("property suite", criterion_8),
}
SUITES = {"core": [1, 2, 4, 5, 6, 8], "full": list(CRITERIA)}


def run_criterion(cid: int, jobs=None) -> Verdict:
    title, fn = CRITERIA[cid]
    t0 = time.perf_counter()
    try:
        passed, detail = fn(jobs)
    except Exception as exc:
        passed, detail = False, f"error: {exc!r} | {traceback.format_exc(limit=2).splitlines()[-1]}"
    return Verdict(cid, title, bool(passed), detail, time.perf_counter() - t0)


def run_suite(name: str, jobs=None, stream=print) -> list[Verdict]:
    if not name:
        raise ValueError("empty suite name")
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    verdicts = []
    for cid in SUITES[name]:
        v = run_criterion(cid, jobs)
        if stream:
            stream(v.line())
        verdicts.append(v)
    return verdicts


def verdicts_json(verdicts: list[Verdict]) -> str:
    return json.dumps([asdict(v) for v in verdicts], indent=1)
