"""Snapshot CSV files and key-value run reports."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .analysis import PileSnapshot

SNAPSHOT_HEADER = "id,x,y,z,vx,vy,vz,wx,wy,wz,r"


def _columns(snapshot):
    ids = np.asarray(snapshot.ids, np.int64)
    order = np.argsort(ids, kind="stable")
    pos = np.asarray(snapshot.positions, float)
    vel = getattr(snapshot, "velocities", None)
    omg = getattr(snapshot, "angular_velocities", None)
    n = len(ids)
    vel = np.zeros((n, 3)) if vel is None else np.asarray(vel, float)
    omg = np.zeros((n, 3)) if omg is None else np.asarray(omg, float)
    return ids[order], np.column_stack([pos, vel, omg, np.asarray(snapshot.radii, float)])[order]


def write_snapshot(snapshot, path) -> None:
    """Write one row per particle, ordered by id, with 17 significant digits.

    Accepts an integrator ``Snapshot`` or a :class:`PileSnapshot`.
    """
    ids, data = _columns(snapshot)
    lines = [SNAPSHOT_HEADER]
    for i, row in zip(ids, data):
        lines.append(f"{i}," + ",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path, cube_side=1e-3, cube_top=None, cube_center=(0.0, 0.0)) -> PileSnapshot:
    """Read a snapshot CSV into a :class:`PileSnapshot`.

    Without ``cube_top`` the cube surface is taken as the lowest particle
    bottom (z - r) among particles lying fully over the cube footprint;
    powder falling past the cube sides is outside it and ignored.
    """
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
    if header != SNAPSHOT_HEADER:
        raise ValueError(f"{path}:1: expected header {SNAPSHOT_HEADER!r}")
    with path.open() as fh:
        fh.readline()
        body = fh.read()
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2) if body.strip() else np.zeros((0, 11))
    if data.shape[1] != 11:
        raise ValueError(f"{path}: expected 11 columns, got {data.shape[1]}")
    ids = data[:, 0].astype(np.int64)
    pos, radii = data[:, 1:4], data[:, 10]
    if cube_top is None:
        cube_top = infer_cube_top(pos, radii, cube_side, cube_center)
    return PileSnapshot(pos, radii, cube_center, cube_side, cube_top, ids, data[:, 4:7], data[:, 7:10])


def infer_cube_top(positions, radii, cube_side, cube_center=(0.0, 0.0)) -> float:
    """Lowest particle bottom over the cube footprint (0 when the footprint is empty)."""
    positions = np.asarray(positions, float).reshape(-1, 3)
    radii = np.asarray(radii, float)
    rel = np.abs(positions[:, :2] - np.asarray(cube_center, float))
    over = np.all(rel <= 0.5 * cube_side - radii[:, None], axis=1)
    if not over.any():
        return 0.0
    return float((positions[over, 2] - radii[over]).min())


def write_report(report: dict, path) -> None:
    """``key: value`` lines in insertion order; floats with 10 significant digits."""
    lines = []
    for key, val in report.items():
        if isinstance(val, float):
            val = f"{val:.10g}"
        lines.append(f"{key}: {val}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if ": " in line:
            key, val = line.split(": ", 1)
            out[key] = val
    return out
