"""Experiment runner: builds operators from a config, runs a mode, writes tables."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .continuum import (CALIBRATION, CALIBRATION_TAG, aps_prediction_band, holonomy_rows)
from .dirac import (MassFamilyParams, Region, clifford_rep, domain_wall_profile, dw_family,
                    dw_family_real, elliptic_estimate)
from .gauge import (RNG_TAG, ContinuumLine, GaugeField, RoughFieldError, load_gauge, localized_flux_u1,
                    random_smooth_gauge, save_gauge, topological_charge, trivial_gauge, uniform_flux_u1,
                    wilson_line_gauge)
from .interpolator import CombinedFamily, build_interpolator, check_dw_commutator, check_props, staple_scan
from .lattice import build_geometry
from .spectral import flow_from_etas, mod2_flow, spectral_flow_tracked

SF_COLUMNS = ["label", "config_hash", "d", "N", "Q", "m", "wall", "sf_tracked", "sf_eta", "eta_t1",
              "eta_tminus1", "identity_ok", "topological_charge", "aps_prediction", "aps_rounded",
              "proxy_sf", "segments", "solves", "min_certificate", "elliptic_c", "time_s"]


def default_jobs(requested: int | None = None) -> int:
    env = os.environ.get("SFLAB_JOBS")
    if env:
        return max(1, int(env))
    if requested:
        return max(1, requested)
    return os.cpu_count() or 1


@dataclass
class RunResult:
    config: ExperimentConfig
    tables: dict[str, tuple[list[str], list[dict]]]
    extras: dict = field(default_factory=dict)
    trajectories: list[tuple[str, list[float], list[list[float]]]] = field(default_factory=list)


# --------------------------------------------------------------------------
# builders


def build_region(cfg: ExperimentConfig) -> Region:
    if cfg.wall == "disk":
        center = cfg.wall_center or (0.5,) * cfg.d
        return Region("disk", center=tuple(center), radius=cfg.wall_radius, complement=cfg.wall_complement)
    return Region(cfg.wall, cfg.wall_lo, cfg.wall_hi, complement=cfg.wall_complement)


def build_gauge(cfg: ExperimentConfig, N: int | None = None) -> GaugeField:
    N = N or cfg.N
    geom = build_geometry(cfg.d, N, cfg.bc, cfg.spinor_dim)
    kind = cfg.gauge
    if kind == "file":
        g = load_gauge(cfg.gauge_file, cfg.spinor_dim)
        if g.geometry.N != N or g.geometry.d != cfg.d:
            raise ValueError("gauge file does not match the configured d and N")
        return g
    if kind == "trivial":
        if cfg.Q:
            raise ValueError("trivial gauge carries no flux")
        return trivial_gauge(geom)
    if kind == "uniform":
        return uniform_flux_u1(geom, cfg.Q) if cfg.Q or cfg.d == 2 else trivial_gauge(geom)
    if kind == "localized":
        region = build_region(cfg)
        r_lo, r_hi = holonomy_rows(region, N)
        return localized_flux_u1(geom, cfg.Q, list(range(r_lo, r_hi)))
    if kind == "holonomy":
        th = wilson_line_gauge(geom, cfg.alpha or (0.0,) * cfg.d).link_phase
        if cfg.Q:
            th = th + uniform_flux_u1(geom, cfg.Q).link_phase
        return GaugeField(geom, th, generator="flux+holonomy")
    return random_smooth_gauge(geom, cfg.Q, cfg.seed, cfg.noise, cfg.alpha)


def build_family(cfg: ExperimentConfig, N: int | None = None, m: float | None = None):
    gauge = build_gauge(cfg, N)
    geom = gauge.geometry
    wall = domain_wall_profile(geom, build_region(cfg), cfg.edge_kappa)
    params = MassFamilyParams(m if m is not None else cfg.m, wall)
    if cfg.d % 2 == 0:
        return dw_family(gauge, clifford_rep(cfg.d), params), gauge
    return dw_family_real(gauge, clifford_rep(cfg.d, "real-odd"), params), gauge


# --------------------------------------------------------------------------
# modes


def _sf_row(cfg: ExperimentConfig, N: int, m: float, jobs: int, want_traj: list | None = None) -> dict:
    if cfg.d % 2:
        raise ValueError("spectral flow of the complex family needs even d")
    t0 = time.perf_counter()
    fam, gauge = build_family(cfg, N, m)
    res = spectral_flow_tracked(fam, grid=cfg.t_grid, zero_tol=cfg.zero_tol, max_depth=cfg.max_depth,
                                window=cfg.tracker_window(m), jobs=jobs, convention=cfg.convention,
                                iterative=cfg.iterative)
    eta_m, eta_p = res.eta_minus, res.eta_plus
    sf_eta = flow_from_etas(eta_m, eta_p, cfg.convention) if eta_m is not None else None
    sign = 1 if cfg.convention == "downward" else -1
    ok = sf_eta is not None and res.net == sf_eta == -sign * eta_p // 2 and eta_m == 0
    charge = aps = aps_r = None
    if cfg.d == 2:
        try:
            charge = topological_charge(gauge)
        except RoughFieldError:
            charge = None
        if cfg.wall == "band":
            p = aps_prediction_band(gauge, build_region(cfg), CALIBRATION)
            aps, aps_r = p.predicted_index, p.rounded
    proxy = None
    if cfg.fine_N:
        fine_N = cfg.fine_N * N // cfg.N
        fam_f, _ = build_family(cfg, fine_N, m)
        proxy = spectral_flow_tracked(fam_f, grid=cfg.t_grid, zero_tol=cfg.zero_tol,
                                      max_depth=cfg.max_depth, window=cfg.tracker_window(m), jobs=jobs,
                                      convention=cfg.convention, iterative=cfg.iterative).net
    ell = elliptic_estimate(gauge, clifford_rep(cfg.d), samples=20, seed=cfg.seed)
    if want_traj is not None:
        want_traj.append((f"N={N},m={m!r}", res.trajectory_t, res.trajectories))
    return {"label": cfg.label, "config_hash": cfg.digest(), "d": cfg.d, "N": N, "Q": cfg.Q, "m": m,
            "wall": cfg.wall, "sf_tracked": res.net, "sf_eta": sf_eta, "eta_t1": eta_p, "eta_tminus1": eta_m,
            "identity_ok": ok, "topological_charge": charge, "aps_prediction": aps, "aps_rounded": aps_r,
            "proxy_sf": proxy, "segments": len(res.levels), "solves": res.solves,
            "min_certificate": res.min_certificate, "elliptic_c": ell,
            "time_s": round(time.perf_counter() - t0, 3)}


def plateau(ms, sfs) -> dict:
    """Longest run of consecutive masses with the same flow."""
    best = (0, 0)
    start = 0
    for i in range(1, len(sfs) + 1):
        if i == len(sfs) or sfs[i] != sfs[start]:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = i
    lo, hi = best
    return {"value": sfs[lo], "m_min": ms[lo], "m_max": ms[hi - 1], "length": hi - lo}


def run_sf(cfg, jobs):
    traj = []
    row = _sf_row(cfg, cfg.N, cfg.m, jobs, traj)
    return RunResult(cfg, {"sf": (SF_COLUMNS, [row])}, trajectories=traj)


def run_eta(cfg, jobs):
    from .spectral import eta_invariant
    t0 = time.perf_counter()
    fam, _ = build_family(cfg)
    eta_m, eta_p = eta_invariant(fam(-1.0), cfg.zero_tol), eta_invariant(fam(1.0), cfg.zero_tol)
    row = {"label": cfg.label, "config_hash": cfg.digest(), "N": cfg.N, "Q": cfg.Q, "m": cfg.m,
           "eta_tminus1": eta_m, "eta_t1": eta_p, "sf_eta": flow_from_etas(eta_m, eta_p, cfg.convention),
           "time_s": round(time.perf_counter() - t0, 3)}
    return RunResult(cfg, {"eta": (list(row), [row])})


def run_scan_a(cfg, jobs):
    traj = []
    rows = [_sf_row(cfg, N, cfg.m, jobs, traj) for N in cfg.N_list]
    sfs = [r["sf_tracked"] for r in rows]
    return RunResult(cfg, {"scan-a": (SF_COLUMNS, rows)}, {"a_independent": len(set(sfs)) == 1},
                     trajectories=traj)


def run_scan_m(cfg, jobs):
    rows = [_sf_row(cfg, cfg.N, m, jobs) for m in cfg.m_list]
    return RunResult(cfg, {"scan-m": (SF_COLUMNS, rows)},
                     {"plateau": plateau(list(cfg.m_list), [r["sf_tracked"] for r in rows])})


def run_mod2(cfg, jobs):
    t0 = time.perf_counter()
    fam, _ = build_family(cfg)
    res = mod2_flow(fam, grid=max(cfg.t_grid, 2))
    row = {"label": cfg.label, "config_hash": cfg.digest(), "d": cfg.d, "N": cfg.N,
           "bc_phase": ";".join(repr(b) for b in cfg.bc), "m": cfg.m, "parity": res.parity,
           "det_sign_minus": res.det_sign_minus, "det_sign_plus": res.det_sign_plus,
           "logabsdet_minus": res.logabsdet_minus, "logabsdet_plus": res.logabsdet_plus,
           "sign_changes": res.sign_changes, "tracked_parity": res.tracked_parity,
           "v_det_sign": res.v_det_sign, "v_parity": res.v_parity, "v_residual": res.v_residual,
           "consistent": res.consistent, "note": res.v_note, "time_s": round(time.perf_counter() - t0, 3)}
    return RunResult(cfg, {"mod2": (list(row), [row])})


def _transport(cfg) -> ContinuumLine:
    if cfg.gauge not in ("trivial", "uniform", "holonomy"):
        raise ValueError(f"gauge kind {cfg.gauge!r} has no closed-form transport for the interpolator")
    alpha = cfg.alpha if cfg.gauge == "holonomy" and cfg.alpha else (0.0,) * cfg.d
    return ContinuumLine(alpha, flux=cfg.Q if cfg.gauge != "trivial" else 0)


def run_interp(cfg, jobs):
    transport = _transport(cfg)
    props = check_props(cfg.coarse_N_list, cfg.fine_ratio, cfg.d, cfg.trials, cfg.seed,
                        transport if transport.flux or any(transport.alpha) else None, cfg.m0,
                        cfg.bc_phase)
    cols = ["a", "norm_iota", "norm_iota_adj", "r1", "r1_worst", "r2", "r3"]
    tables = {"interp": (cols, [{c: getattr(r, c) for c in cols} for r in props.rows])}
    extras = {"slope_r1": props.slope_r1, "slope_r1_worst": props.slope_r1_worst,
              "slope_r2": props.slope_r2, "slope_r3": props.slope_r3, "r2_monotone": props.r2_monotone,
              "partition_of_unity_residual": props.pou_residual}
    if cfg.wall != "torus" or cfg.wall_complement:
        comm = check_dw_commutator(build_region(cfg), cfg.coarse_N_list, cfg.fine_ratio, cfg.d,
                                   min(cfg.trials, 4), cfg.seed, m0=cfg.m0)
        ts = sorted(comm.r)
        rows = [{"a": a, **{f"r_t{t:+g}": comm.r[t][i] for t in ts}} for i, a in enumerate(comm.a)]
        tables["commutator"] = (["a"] + [f"r_t{t:+g}" for t in ts], rows)
        extras["commutator_slopes"] = {f"{t:+g}": comm.slopes[t] for t in ts}
    return RunResult(cfg, tables, extras)


def run_staple(cfg, jobs):
    if cfg.d != 2:
        raise ValueError("staple scans run in d = 2")
    coarse = build_geometry(2, cfg.N, cfg.bc, 2)
    fine = coarse.with_extent(cfg.fine_N or cfg.N * cfg.fine_ratio)
    pair = build_interpolator(coarse, fine, _transport(cfg))
    rep = staple_scan(CombinedFamily(pair, cfg.m, build_region(cfg)), cfg.samples, jobs, cfg.zero_tol)
    rows = [{"t": t, "s": s, "min_abs_eig": e} for (t, s), e in zip(rep.points, rep.min_abs_eig)]
    return RunResult(cfg, {"staple": (["t", "s", "min_abs_eig"], rows)},
                     {"minimum": rep.minimum, "coarse_N": cfg.N, "fine_N": fine.N})


def run_gauge_gen(cfg, jobs):
    g = build_gauge(cfg)
    charge = None
    if cfg.d == 2:
        try:
            charge = topological_charge(g)
        except RoughFieldError:
            pass
    row = {"label": cfg.label, "config_hash": cfg.digest(), "d": cfg.d, "N": cfg.N, "Q_requested": cfg.Q,
           "topological_charge": charge, "generator": g.generator, "seed": g.seed}
    return RunResult(cfg, {"gauge-gen": (list(row), [row])}, {"gauge": g})


MODES = {"sf": run_sf, "eta": run_eta, "scan-a": run_scan_a, "scan-m": run_scan_m, "mod2": run_mod2,
         "interp": run_interp, "staple": run_staple, "gauge-gen": run_gauge_gen}


def run(cfg: ExperimentConfig, jobs: int | None = None) -> RunResult:
    return MODES[cfg.mode](cfg, default_jobs(jobs))


# --------------------------------------------------------------------------
# output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_table(columns: list[str], rows: list[dict], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# sflab {__version__}\n# calibration {CALIBRATION_TAG}\n# config_hash {cfg.digest()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def metadata(result: RunResult) -> dict:
    cfg = result.config
    extras = {k: v for k, v in result.extras.items() if k != "gauge"}
    return {"tool": "sflab", "version": __version__, "config": cfg.to_dict(), "config_hash": cfg.digest(),
            "calibration": {"overall": CALIBRATION[0], "s_lo": CALIBRATION[1], "s_hi": CALIBRATION[2],
                            "tag": CALIBRATION_TAG},
            "rng": RNG_TAG, "seed": cfg.seed, "spectral_flow_convention": cfg.convention,
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__},
            "results": extras}


def write_outputs(result: RunResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    stem = cfg.label or cfg.mode
    written = []
    for name, (cols, rows) in result.tables.items():
        suffix = "" if name == cfg.mode else f"_{name}"
        p = out / f"{stem}{suffix}.csv"
        p.write_text(format_table(cols, rows, cfg))
        written.append(p)
    meta = out / f"{stem}.meta.json"
    meta.write_text(json.dumps(metadata(result), indent=1, default=_json_default) + "\n")
    written.append(meta)
    if result.trajectories:
        p = out / f"{stem}_trajectories.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "t", "index", "eigenvalue"])
        for tag, ts, eigs in result.trajectories:
            for t, vals in zip(ts, eigs):
                for i, v in enumerate(vals):
                    w.writerow([tag, repr(t), i, repr(v)])
        p.write_text(buf.getvalue())
        written.append(p)
    if "gauge" in result.extras:
        p = out / f"{stem}_gauge.json"
        save_gauge(result.extras["gauge"], p)
        written.append(p)
    return written


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    raise TypeError(f"not serializable: {type(o)}")
