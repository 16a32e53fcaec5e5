import math
import textwrap

import numpy as np
import pytest

from powderdem.analysis import PileSnapshot
from powderdem.cli import derived_constants, main
from powderdem.config import ConfigError, RunConfig, parse_config, parse_length
from powderdem.io import SNAPSHOT_HEADER, read_report, read_snapshot, write_snapshot

BASE = """\
[material]
surface_energy = 0.1   # mJ/m^2

[psd]
d10 = 20 um
d50 = 34 um
d90 = 44 um
"""

# 0.3 mm cube: a pour of a few hundred particles, seconds of wall time
SMALL_RUN = BASE + """
[scenario]
preset = desk
cube_side = 0.3 mm
funnel_height = 0.25 mm
drop_gap = 0.15 mm
feed_rate = 1e4
hold_time = 0.005
settle_t_max = 0.005

[integrator]
t_end = 0.03
snapshot_interval = 0.01
seed = 3
"""


def test_parse_length_units():
    assert parse_length("34 um") == pytest.approx(34e-6)
    assert parse_length("34μm") == pytest.approx(34e-6)
    assert parse_length("0.4 mm") == pytest.approx(0.4e-3)
    assert parse_length("2e-5 m") == 2e-5
    assert parse_length("50 nm") == pytest.approx(50e-9)
    with pytest.raises(ValueError, match="unit suffix"):
        parse_length("34")
    with pytest.raises(ValueError):
        parse_length("34 inch")


def test_minimal_config():
    cfg = parse_config(BASE)
    assert cfg.material.surface_energy == pytest.approx(1e-4)
    assert cfg.gamma_mj == pytest.approx(0.1)
    assert cfg.psd.d_min == pytest.approx(20e-6) and cfg.psd.d_max == pytest.approx(44e-6)
    assert cfg.scenario.cube_side == pytest.approx(1e-3)
    assert cfg.dt is None and cfg.seed == 0


def test_full_config():
    cfg = parse_config(SMALL_RUN + "\n[output]\ndirectory = results\nformats = csv\n")
    assert cfg.scenario.cube_side == pytest.approx(0.3e-3)
    assert cfg.scenario.feed_rate == 1e4
    assert cfg.scenario.t_max == 0.03 and cfg.t_end == 0.03
    assert cfg.snapshot_interval == 0.01 and cfg.seed == 3
    assert str(cfg.output_dir) == "results"


def test_explicit_log_normal_psd():
    text = BASE.replace("d10 = 20 um\nd50 = 34 um\nd90 = 44 um",
                        "log_median = 32 um\nlog_sigma = 0.3\nd_min = 20 um\nd_max = 44 um")
    cfg = parse_config(text)
    assert math.exp(cfg.psd.log_median) == pytest.approx(32e-6)
    assert cfg.psd.log_sigma == 0.3


def _error(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "run.cfg")
    return exc.value


def test_missing_surface_energy_names_key():
    err = _error(BASE.replace("surface_energy = 0.1   # mJ/m^2", "friction = 0.4"))
    assert "surface_energy" in str(err)
    assert err.line == 1 and str(err).startswith("run.cfg:1:")


def test_errors_carry_line_numbers():
    assert _error(BASE.replace("d50 = 34 um", "d50 = 34")).line == 6
    assert _error(BASE + "\n[scenario]\ncube_sid = 1 mm\n").line == 10
    assert _error(BASE + "\n[solver]\nx = 1\n").line == 9
    assert _error(BASE.replace("surface_energy = 0.1", "surface_energy = -1")).line == 2
    assert _error(BASE + "\n[integrator]\ndt = 0\n").line == 10
    assert _error(BASE + "\n[scenario]\nopening_diameter = 40 um\n").line == 10
    assert _error("surface_energy = 0.1\n").line == 1
    assert _error(BASE.replace("[psd]", "[material]")).line is not None


def test_missing_section():
    err = _error("[material]\nsurface_energy = 0.1\n")
    assert "[psd]" in str(err)


def test_derived_constants_reference_values():
    c = derived_constants(parse_config(BASE))
    assert c["F_S0_N"] == pytest.approx(1.068e-8, rel=1e-3)
    assert c["g0_m"] == pytest.approx(7.28e-9, rel=2e-3)
    assert c["g_star_m"] == pytest.approx(7.28e-8, rel=2e-3)
    assert c["dt_crit_s"] == pytest.approx(3.853e-6, rel=1e-3)
    assert 11 <= c["F_gamma_over_F_G"] <= 15
    assert c["k_N_bound_adhesion_N_per_m"] == pytest.approx(0.0503, rel=1e-3)
    assert c["k_T_N_per_m"] == pytest.approx(0.05 * (1 - 0.342) / (1 - 0.171))


def _snapshot(n, seed=0):
    rng = np.random.default_rng(seed)
    return PileSnapshot(rng.normal(size=(n, 3)) * 1e-4, rng.uniform(1e-5, 2e-5, n), (0.0, 0.0), 1e-3, -0.3,
                        ids=rng.permutation(n) * 3, velocities=rng.normal(size=(n, 3)),
                        angular_velocities=rng.normal(size=(n, 3)) * 1e3)


def test_snapshot_round_trip_bit_identical(tmp_path):
    snap = _snapshot(50)
    path = tmp_path / "s.csv"
    write_snapshot(snap, path)
    back = read_snapshot(path, cube_side=1e-3, cube_top=-0.3)
    order = np.argsort(snap.ids)
    assert np.array_equal(back.ids, snap.ids[order])
    assert np.array_equal(back.positions, snap.positions[order])
    assert np.array_equal(back.radii, snap.radii[order])
    assert np.array_equal(back.velocities, snap.velocities[order])
    assert np.array_equal(back.angular_velocities, snap.angular_velocities[order])
    write_snapshot(back, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_bytes() == path.read_bytes()


def test_empty_snapshot_is_header_only(tmp_path):
    path = tmp_path / "e.csv"
    write_snapshot(_snapshot(0), path)
    assert path.read_text() == SNAPSHOT_HEADER + "\n"
    assert len(read_snapshot(path)) == 0


def test_bad_snapshot_header(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("x,y,z\n1,2,3\n")
    with pytest.raises(ValueError, match="b.csv:1:"):
        read_snapshot(path)


def test_derive_prints_constants(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(BASE)
    assert main(["derive", "--config", str(cfg)]) == 0
    out = dict(line.split(": ") for line in capsys.readouterr().out.splitlines())
    for key in ("d_N_Ns_per_m", "k_T_N_per_m", "d_R", "F_S0_N", "g0_m", "g_star_m", "dt_crit_s",
                "F_gamma_over_F_G", "k_N_bound_dynamic_N_per_m", "k_N_bound_adhesion_N_per_m"):
        assert math.isfinite(float(out[key]))


def test_config_error_exit_code(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(BASE.replace("surface_energy = 0.1   # mJ/m^2", ""))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "surface_energy" in capsys.readouterr().err
    assert main(["derive", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_calibrate_with_injected_values(capsys, tmp_path):
    args = ["calibrate", "--gamma-grid", "0,0.02,0.04,0.1", "--aor-values", "11,29,33,41", "--target-aor", "31",
            "--out", str(tmp_path)]
    assert main(args) == 0
    assert "fitted_gamma_mJ_m2: 0.03" in capsys.readouterr().out
    assert read_report(tmp_path / "calibration.txt")["fitted_gamma_mJ_m2"] == "0.03"
    assert main(["calibrate", "--gamma-grid", "0,0.1"]) == 2
    assert main(["calibrate", "--gamma-grid", "0,0.1", "--aor-values", "20,10", "--target-aor", "15"]) == 1


def test_run_and_measure(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL_RUN)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    report = read_report(out / "report.txt")
    assert report["seed"] == "3"
    assert float(report["inserted"]) > 100
    assert 11 <= float(report["F_gamma_over_F_G"]) <= 15
    assert "warning_0" in report  # k_N = 0.05 N/m is below the impact bound
    for key in ("k_N_bound_dynamic_N_per_m", "k_N_bound_adhesion_N_per_m", "d_N_Ns_per_m", "g_star_m"):
        assert key in report
    assert sorted(p.name for p in out.glob("snapshot_*.csv"))[:2] == ["snapshot_00000.csv", "snapshot_00001.csv"]
    final = read_snapshot(out / "final.csv", cube_side=0.3e-3, cube_top=float(report["cube_top_m"]))
    assert len(final) == int(report["remaining"])
    capsys.readouterr()
    if math.isfinite(float(report["aor_deg"])):
        args = ["measure-aor", "--snapshot", str(out / "final.csv"), "--cube-side", "3e-4",
                "--cube-top", report["cube_top_m"]]
        assert main(args) == 0
        measured = float(capsys.readouterr().out.splitlines()[0].split(": ")[1])
        assert measured == pytest.approx(float(report["aor_deg"]), abs=1e-4)
    else:
        assert "aor_error" in report


def test_repeated_runs_write_identical_snapshots(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL_RUN.replace("t_end = 0.03", "t_end = 0.005"))
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "final.csv").read_bytes() == (tmp_path / "b" / "final.csv").read_bytes()


def test_preset_and_seed_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(BASE)
    assert main(["derive", "--config", str(cfg), "--preset", "paper-a0-4", "--seed", "9"]) == 0
    assert RunConfig().scenario.cube_side == pytest.approx(1e-3)


@pytest.mark.slow
def test_desk_preset_run_reports_finite_aor(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(BASE.replace("surface_energy = 0.1", "surface_energy = 0.0") + "\n[integrator]\nseed = 1\n")
    assert main(["run", "--config", str(cfg), "--preset", "desk", "--out", str(tmp_path)]) == 0
    report = read_report(tmp_path / "report.txt")
    assert math.isfinite(float(report["aor_deg"]))
