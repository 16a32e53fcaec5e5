"""Command-line entry point: ``powderdem {run, calibrate, measure-aor, derive}``."""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
import time
from pathlib import Path

from .analysis import measure_pile_aor
from .calibration import calibrate_gamma
from .config import ConfigError, RunConfig, load_config
from .core import effective_pair, sphere_mass
from .forces import adhesion_cutoffs, adhesion_gravity_ratio, damping_constant, min_stiffness
from .integrator import SimulationError, critical_dt
from .io import read_snapshot, write_report, write_snapshot
from .scenario import FunnelConfig, run_funnel


def derived_constants(cfg: RunConfig) -> dict:
    """Model constants for a pair of mean-size particles, plus the step and stiffness bounds.

    Keys carry their SI unit. The stiffness bound uses the reference impact
    velocity and the largest radius of the size distribution.
    """
    mat, psd = cfg.material, cfg.psd
    d = psd.mean_diameter
    r = 0.5 * d
    m = sphere_mass(r, mat.density)
    m_eff, r_eff = effective_pair(m, m, r, r)
    dynamic, static = min_stiffness(mat.density, mat.reference_velocity, 0.5 * psd.d_max,
                                    mat.surface_energy, mat.penetration_bound, terms=True)
    out = {
        "mean_diameter_m": d,
        "k_N_N_per_m": mat.stiffness,
        "d_N_Ns_per_m": damping_constant(mat.restitution, mat.stiffness, m_eff),
        "k_T_N_per_m": mat.tangential_stiffness,
        "d_T_Ns_per_m": damping_constant(mat.restitution, mat.stiffness, m_eff),
        "d_R": mat.rolling_coefficient(r_eff),
    }
    if mat.adhesive:
        cut = adhesion_cutoffs(mat.surface_energy, mat.hamaker, r_eff, mat.adhesion_decline)
        out.update({"F_S0_N": cut.pull_off, "g0_m": cut.g0, "g_star_m": cut.g_star})
    else:
        out.update({"F_S0_N": 0.0, "g0_m": 0.0, "g_star_m": 0.0})
    out.update({
        "dt_crit_s": critical_dt(sphere_mass(0.5 * psd.d_min, mat.density), mat.stiffness),
        "F_gamma_over_F_G": adhesion_gravity_ratio(mat.surface_energy, r_eff, m, mat.gravity),
        "k_N_bound_dynamic_N_per_m": dynamic,
        "k_N_bound_adhesion_N_per_m": static,
    })
    return out


def stiffness_warnings(constants: dict) -> list:
    k = constants["k_N_N_per_m"]
    notes = []
    for key, label in (("k_N_bound_dynamic_N_per_m", "impact"), ("k_N_bound_adhesion_N_per_m", "adhesion")):
        if constants[key] > k:
            notes.append(f"k_N = {k:g} N/m is below the {label} bound {constants[key]:.4g} N/m; "
                         "relative penetration may exceed c_g")
    return notes


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.preset:
        changes["scenario"] = FunnelConfig.preset(args.preset)
        if cfg.t_end is not None:
            changes["scenario"] = changes["scenario"].replace(t_max=cfg.t_end)
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["output_dir"] = Path(args.out)
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    return cfg


def _float_list(text):
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_derive(args) -> int:
    cfg = _load(args)
    constants = derived_constants(cfg)
    for key, val in constants.items():
        print(f"{key}: {val:.10g}")
    for note in stiffness_warnings(constants):
        print(f"warning: {note}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    interval = cfg.snapshot_interval
    written = []
    next_t = [interval if interval else math.inf]

    def progress(scene):
        if scene.state.t >= next_t[0]:
            path = out / f"snapshot_{len(written):05d}.csv"
            write_snapshot(scene.state.snapshot(), path)
            written.append(path)
            next_t[0] += interval

    started = time.perf_counter()
    try:
        result = run_funnel(cfg.scenario, cfg.psd, cfg.material, seed=cfg.seed, dt=cfg.dt, progress=progress)
    except SimulationError as exc:
        if exc.snapshot is not None:
            write_snapshot(exc.snapshot, out / "abort_snapshot.csv")
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
        print(f"diagnostic snapshot: {out / 'abort_snapshot.csv'}", file=sys.stderr)
        return 3
    write_snapshot(result.snapshot, out / "final.csv")
    report = {"preset_scale": cfg.scenario.scale_label, "seed": cfg.seed,
              "surface_energy_mJ_m2": cfg.gamma_mj}
    try:
        aor = measure_pile_aor(result.snapshot)
        report["aor_deg"] = aor.angle
        report["aor_per_axis_deg"] = ", ".join(f"{r.angle:.4f}" for r in aor.per_axis)
    except ValueError as exc:
        report["aor_deg"] = float("nan")
        report["aor_error"] = str(exc)
    report.update(result.report())
    report["cube_top_m"] = result.snapshot.cube_top
    report["cube_side_m"] = result.snapshot.cube_side
    report["wall_time_s"] = time.perf_counter() - started
    constants = derived_constants(cfg)
    report.update(constants)
    for k, note in enumerate(stiffness_warnings(constants)):
        report[f"warning_{k}"] = note
        print(f"warning: {note}", file=sys.stderr)
    write_report(report, out / "report.txt")
    print(f"AOR: {report['aor_deg']:.2f} deg ({result.reason}); report: {out / 'report.txt'}")
    return 0


def cmd_calibrate(args) -> int:
    if args.target_aor is None:
        print("error: --target-aor is required", file=sys.stderr)
        return 2
    cfg = _load(args)
    grid = args.gamma_grid or [0.0, 0.02, 0.1, 0.4]

    def progress(gamma, seed, angle, result):
        print(f"gamma {gamma:g} mJ/m2 seed {seed}: AOR {angle:.2f} deg ({result.reason})", flush=True)

    result = calibrate_gamma(args.target_aor, grid, cfg.scenario, cfg.psd, cfg.material,
                             seeds=(cfg.seed,), aor_values=args.aor_values, progress=progress)
    report = result.report()
    for key, val in report.items():
        print(f"{key}: {val}")
    if result.extrapolated:
        print("warning: target AOR lies outside the simulated range; gamma was extrapolated", file=sys.stderr)
    if getattr(args, "out", None):
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_report(report, Path(args.out) / "calibration.txt")
    return 0


def cmd_measure(args) -> int:
    if not args.snapshot:
        print("error: --snapshot is required", file=sys.stderr)
        return 2
    side = args.cube_side
    if side is None:
        side = FunnelConfig.preset(args.preset or "desk").cube_side
    snap = read_snapshot(args.snapshot, cube_side=side, cube_top=args.cube_top)
    aor = measure_pile_aor(snap)
    print(f"aor_deg: {aor.angle:.6f}")
    for axis, res in zip("xy", aor.per_axis):
        print(f"aor_{axis}_deg: {res.angle:.6f} (left {res.left.angle:.4f}, right {res.right.angle:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--preset", choices=("desk", "paper-a0-4"), help="funnel scenario preset")

    parser = argparse.ArgumentParser(prog="powderdem", description="Cohesive powder DEM funnel tests.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate one funnel test").set_defaults(func=cmd_run)
    cal = sub.add_parser("calibrate", parents=[common], help="fit the surface energy to a target AOR")
    cal.add_argument("--gamma-grid", type=_float_list, help="surface energies in mJ/m^2, e.g. 0,0.02,0.1,0.4")
    cal.add_argument("--target-aor", type=float, help="target angle of repose in degrees")
    cal.add_argument("--aor-values", type=_float_list,
                     help="known AOR per grid point (degrees); skips the simulations")
    cal.set_defaults(func=cmd_calibrate)
    mea = sub.add_parser("measure-aor", parents=[common], help="measure the AOR of a stored snapshot")
    mea.add_argument("--snapshot", type=Path, help="snapshot CSV file")
    mea.add_argument("--cube-side", type=float, help="cube side in m (default: the preset's)")
    mea.add_argument("--cube-top", type=float, help="cube top height in m (default: lowest particle bottom)")
    mea.set_defaults(func=cmd_measure)
    sub.add_parser("derive", parents=[common], help="print derived model constants").set_defaults(func=cmd_derive)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
