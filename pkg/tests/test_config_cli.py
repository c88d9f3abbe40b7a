import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sflab import __version__
from sflab.cli import main
from sflab.config import ConfigError, ExperimentConfig, dump_config, parse_angle, parse_config
from sflab.gauge import load_gauge, topological_charge
from sflab.run import default_jobs, plateau

SCHEMA = Path(__file__).resolve().parents[1] / "src" / "sflab" / "data" / "csv_schema.json"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_rows(path):
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def header(path):
    return [l for l in Path(path).read_text().splitlines() if l.startswith("#")]


# --------------------------------------------------------------------------
# config parsing


@pytest.mark.parametrize("text,value", [
    ("pi", math.pi), ("-pi/2", -math.pi / 2), ("0.5*pi", math.pi / 2), ("2pi", 2 * math.pi),
    ("1.25", 1.25), ("pi/4", math.pi / 4),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value)


def test_parse_angle_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_angle("tau")


def test_parse_config_values():
    cfg = parse_config("""
# a band run
mode = scan-m
N = 8
bc_phase = 0, pi   # transverse antiperiodic
wall = band
m_list = 0.5, 1, 2
iterative = yes
window = none
""")
    assert cfg.mode == "scan-m" and cfg.N == 8
    assert cfg.bc_phase == (0.0, math.pi)
    assert cfg.m_list == (0.5, 1.0, 2.0)
    assert cfg.iterative is True and cfg.window is None
    assert cfg.spinor_dim == 2 and cfg.tracker_window() == 10.0


@pytest.mark.parametrize("text,match", [
    ("colour = red", "unknown config key"),
    ("N = many", "bad value"),
    ("m = -1", "mass must be positive"),
    ("mode = teleport", "unknown mode"),
    ("mode = scan-m", "m_list"),
    ("mode = scan-a", "N_list"),
    ("mode = mod2\nd = 2", "odd dimension"),
    ("bc_phase = 0", "bc_phase needs 2"),
    ("noise = 0.2", "noise"),
    ("gauge = file", "gauge_file"),
    ("fine_N = 20", "fine_N"),
    ("N = 1", "N must be"),
    ("edge_kappa = 2", "edge_kappa"),
    ("convention = sideways", "convention"),
    ("wall = hexagon", "wall kind"),
    ("iterative = maybe", "boolean"),
    ("N 16", "malformed"),
])
def test_parse_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["sf", "eta", "staple", "interp"]), st.integers(2, 64), st.integers(-3, 3),
       st.floats(0.01, 10), st.integers(0, 2**31), st.floats(-6, 6), st.booleans())
def test_dump_parse_round_trip(mode, N, Q, m, seed, phase, iterative):
    cfg = ExperimentConfig(mode=mode, N=N, Q=Q, m=m, seed=seed, bc_phase=(0.0, phase), iterative=iterative,
                           coarse_N_list=(4, 8))
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_digest_depends_on_content():
    a = ExperimentConfig()
    assert a.digest() == ExperimentConfig().digest()
    assert a.digest() != a.replace(seed=1).digest()
    assert len(a.digest()) == 12


def test_default_jobs_env(monkeypatch):
    monkeypatch.delenv("SFLAB_JOBS", raising=False)
    assert default_jobs(3) == 3
    monkeypatch.setenv("SFLAB_JOBS", "5")
    assert default_jobs(3) == 5


def test_plateau():
    assert plateau([1, 2, 3, 4, 5], [0, 1, 1, 1, 0]) == {"value": 1, "m_min": 2, "m_max": 4, "length": 3}


def test_schema_covers_sf_columns():
    from sflab.run import SF_COLUMNS
    schema = json.loads(SCHEMA.read_text())
    assert list(schema["tables"]["sf"]["columns"]) == SF_COLUMNS


# --------------------------------------------------------------------------
# CLI


def test_cli_sf_example(tmp_path, capsys):
    cfg = write(tmp_path, "label = torus_q1\nN = 16\nQ = 1\nwall = torus\nm = 1.0\n")
    assert main(["sf", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out"
    row = read_rows(out / "torus_q1.csv")[0]
    assert row["sf_tracked"] == "1" and row["sf_eta"] == "1" and row["eta_t1"] == "-2"
    assert row["eta_tminus1"] == "0" and row["identity_ok"] == "true" and row["topological_charge"] == "1"
    h = header(out / "torus_q1.csv")
    assert h[0] == f"# sflab {__version__}" and "overall=+1,s_lo=-1,s_hi=+1" in h[1]
    meta = json.loads((out / "torus_q1.meta.json").read_text())
    assert meta["calibration"]["tag"] == "overall=+1,s_lo=-1,s_hi=+1"
    assert meta["config"]["Q"] == 1 and meta["rng"].startswith("numpy")
    traj = read_rows(out / "torus_q1_trajectories.csv")
    assert traj and set(traj[0]) == {"run", "t", "index", "eigenvalue"}
    schema = json.loads(SCHEMA.read_text())
    assert set(row) == set(schema["tables"]["sf"]["columns"])


def test_cli_eta_minus_endpoint_vanishes(tmp_path):
    cfg = write(tmp_path, "mode = eta\nN = 8\nQ = 1\nm = 1\n")
    assert main(["eta", "--config", cfg, "--out", str(tmp_path)]) == 0
    row = read_rows(tmp_path / "eta.csv")[0]
    assert row["eta_tminus1"] == "0" and row["sf_eta"] == "1"


def test_cli_band_row_has_aps_prediction(tmp_path):
    cfg = write(tmp_path, "label = band\nN = 16\nQ = 1\nwall = band\nbc_phase = 0, pi\nm = 1\n")
    assert main(["sf", "--config", cfg, "--out", str(tmp_path)]) == 0
    row = read_rows(tmp_path / "band.csv")[0]
    assert row["sf_tracked"] == "1" and row["aps_rounded"] == "1"
    assert abs(float(row["aps_prediction"]) - 1) < 0.5


def test_cli_mod2(tmp_path):
    for bc, want in (("0", "1"), ("pi", "0")):
        cfg = write(tmp_path, f"mode = mod2\nlabel = m{want}\nd = 1\nN = 16\nbc_phase = {bc}\nt_grid = 32\n")
        assert main(["mod2", "--config", cfg, "--out", str(tmp_path)]) == 0
        row = read_rows(tmp_path / f"m{want}.csv")[0]
        assert row["parity"] == row["tracked_parity"] == row["v_parity"] == want
        assert row["consistent"] == "true"


def test_cli_scan_m_free_field(tmp_path):
    cfg = write(tmp_path, "mode = scan-m\nlabel = free\nN = 8\ngauge = trivial\nbc_phase = 0, pi\n"
                          "m_list = 0.5, 1, 2, 4, 7\n")
    assert main(["scan-m", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert {r["sf_tracked"] for r in read_rows(tmp_path / "free.csv")} == {"0"}
    meta = json.loads((tmp_path / "free.meta.json").read_text())
    assert meta["results"]["plateau"]["length"] == 5


@pytest.mark.slow
def test_cli_scan_a(tmp_path):
    cfg = write(tmp_path, "mode = scan-a\nlabel = sa\nN = 8\nN_list = 8, 16, 32\nQ = 1\n")
    assert main(["scan-a", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert [r["sf_tracked"] for r in read_rows(tmp_path / "sa.csv")] == ["1", "1", "1"]
    assert json.loads((tmp_path / "sa.meta.json").read_text())["results"]["a_independent"] is True


def test_cli_gauge_gen_and_file_gauge(tmp_path):
    cfg = write(tmp_path, "mode = gauge-gen\nlabel = g\nN = 8\nQ = 2\ngauge = random\nseed = 4\nnoise = 0.03\n")
    assert main(["gauge-gen", "--config", cfg, "--out", str(tmp_path)]) == 0
    g = load_gauge(tmp_path / "g_gauge.json", spinor_dim=2)
    assert topological_charge(g) == 2 and g.seed == 4
    cfg2 = write(tmp_path, f"label = fromfile\nN = 8\ngauge = file\ngauge_file = {tmp_path / 'g_gauge.json'}\n",
                 "f.cfg")
    assert main(["sf", "--config", cfg2, "--out", str(tmp_path)]) == 0
    assert read_rows(tmp_path / "fromfile.csv")[0]["sf_tracked"] == "2"


def test_cli_interp_and_staple(tmp_path):
    cfg = write(tmp_path, "mode = interp\nlabel = it\ngauge = trivial\nwall = band\ncoarse_N_list = 4, 8, 16\n"
                          "trials = 2\n")
    assert main(["interp", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert len(read_rows(tmp_path / "it.csv")) == 3
    assert len(read_rows(tmp_path / "it_commutator.csv")) == 3
    cfg = write(tmp_path, "mode = staple\nlabel = st\nN = 4\nfine_ratio = 2\nQ = 1\nwall = band\n"
                          "bc_phase = 0, pi\nsamples = 5\n", "s.cfg")
    assert main(["staple", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "st.csv")
    assert len(rows) == 5 and min(float(r["min_abs_eig"]) for r in rows) > 0


def _strip_time(path):
    rows = read_rows(path)
    for r in rows:
        r.pop("time_s", None)
    return header(path), rows


def test_reproducible_and_parallel_identical(tmp_path, monkeypatch):
    cfg = write(tmp_path, "label = rep\nN = 8\nQ = 1\nwall = band\nbc_phase = 0, pi\ngauge = random\n"
                          "noise = 0.05\nseed = 9\n")
    monkeypatch.delenv("SFLAB_JOBS", raising=False)
    assert main(["sf", "--config", cfg, "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert main(["sf", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "1"]) == 0
    monkeypatch.setenv("SFLAB_JOBS", "3")
    assert main(["sf", "--config", cfg, "--out", str(tmp_path / "c"), "--jobs", "1"]) == 0
    a, b, c = (_strip_time(tmp_path / x / "rep.csv") for x in "abc")
    assert a == b == c
    ta, tc = ((tmp_path / x / "rep_trajectories.csv").read_bytes() for x in "ac")
    assert ta == tc


def test_cli_seed_override(tmp_path):
    cfg = write(tmp_path, "mode = gauge-gen\nlabel = g\nN = 8\nQ = 1\ngauge = random\nseed = 1\nnoise = 0.05\n")
    assert main(["gauge-gen", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["gauge-gen", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    ga, gb = (load_gauge(tmp_path / x / "g_gauge.json") for x in "ab")
    assert (ga.seed, gb.seed) == (1, 2)
    assert not np.array_equal(ga.link_phase, gb.link_phase)


@pytest.mark.parametrize("argv", [[], ["sf"], ["teleport", "--config", "x"], ["acceptance"],
                                  ["acceptance", ""], ["acceptance", "nope"], ["sf", "extra", "--config", "x"],
                                  ["sf", "--jobs", "many", "--config", "x"]])
def test_cli_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_config_errors(tmp_path, capsys):
    assert main(["sf", "--config", str(tmp_path / "missing.cfg")]) == 3
    assert main(["sf", "--config", write(tmp_path, "bogus = 1\n")]) == 3
    assert main(["sf", "--config", write(tmp_path, "m = -1\n")]) == 3
    assert main(["sf", "--config", write(tmp_path, "mode = eta\n")]) == 3
    err = capsys.readouterr().err
    assert "config says mode = eta" in err and "sflab: config" in err


def test_cli_numerical_error(tmp_path, capsys):
    # free field, m = 2/a: h(1) has a Wilson zero mode at momentum (pi, 0)
    cfg = write(tmp_path, "N = 8\ngauge = trivial\nm = 16\n")
    assert main(["sf", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "EndpointKernelError" in err and "'m': 16.0" in err


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


# --------------------------------------------------------------------------
# acceptance runner


def test_run_suite_name_checks():
    from sflab.acceptance import run_suite
    with pytest.raises(ValueError):
        run_suite("")
    with pytest.raises(KeyError):
        run_suite("nightly")


def test_acceptance_detects_tampered_wilson_sign(monkeypatch):
    import sflab.dirac as dirac
    from sflab.acceptance import run_criterion
    original = dirac._scalar_pieces

    def tampered(gauge):
        central, lap = original(gauge)
        return central, -lap

    monkeypatch.setattr(dirac, "_scalar_pieces", tampered)
    verdict = run_criterion(1)
    assert not verdict.passed
    assert verdict.line().startswith("FAIL [1]")
