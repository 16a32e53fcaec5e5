"""Rigid triangulated walls with prescribed translation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .forces import ContactGeometry


class StaticMotion:
    def offset(self, t):
        return np.zeros(3)

    def velocity(self, t):
        return np.zeros(3)


@dataclass
class PiecewiseVelocity:
    """Translation with piecewise-constant velocity.

    Segments are appended as the run proceeds (e.g. by the cube-descent
    controller); the offset is the exact integral of the velocity history.
    """

    times: list = field(default_factory=lambda: [0.0])
    velocities: list = field(default_factory=lambda: [np.zeros(3)])

    def set_velocity(self, t, v):
        v = np.asarray(v, float)
        if t < self.times[-1]:
            raise ValueError("segments must be appended in time order")
        if np.array_equal(v, self.velocities[-1]):
            return
        self.times.append(float(t))
        self.velocities.append(v)

    def _segment(self, t):
        return max(0, np.searchsorted(self.times, t, side="right") - 1)

    def velocity(self, t):
        return self.velocities[self._segment(t)].copy()

    def offset(self, t):
        k = self._segment(t)
        off = np.zeros(3)
        for s in range(k):
            off += self.velocities[s] * (self.times[s + 1] - self.times[s])
        return off + self.velocities[k] * (t - self.times[k])


@dataclass
class Vibration:
    """Vertical sinusoidal offset ``amplitude * sin(2 pi f t)``."""

    amplitude: float = 0.0
    frequency: float = 0.0
    enabled: bool = False

    def offset(self, t):
        if not self.enabled:
            return np.zeros(3)
        return np.array([0.0, 0.0, self.amplitude * math.sin(2 * math.pi * self.frequency * t)])

    def velocity(self, t):
        if not self.enabled:
            return np.zeros(3)
        w = 2 * math.pi * self.frequency
        return np.array([0.0, 0.0, self.amplitude * w * math.cos(w * t)])


@dataclass
class WallMesh:
    """Rigid triangle mesh; ``triangles`` has shape (T, 3, 3) in the wall's rest frame."""

    triangles: np.ndarray
    motion: object = field(default_factory=StaticMotion)
    adhesion_enabled: bool = True
    id: int = 0
    name: str = ""

    def __post_init__(self):
        self.triangles = np.asarray(self.triangles, float).reshape(-1, 3, 3)
        if np.any(triangle_areas(self.triangles) <= 0):
            raise ValueError(f"wall {self.name or self.id}: degenerate triangle")

    def at(self, t):
        """Triangles in the world frame at time t."""
        return self.triangles + wall_motion(self, t)[0]


def triangle_areas(tris):
    tris = np.asarray(tris, float).reshape(-1, 3, 3)
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)


def wall_motion(mesh: WallMesh, t: float):
    """(offset, velocity) of the mesh at time t."""
    if t < 0:
        raise ValueError("time must be non-negative")
    return mesh.motion.offset(t), mesh.motion.velocity(t)


def closest_point(p, mesh: WallMesh, t=0.0):
    """Exhaustive closest point on the mesh; returns (point, distance, triangle, region)."""
    offset, _ = wall_motion(mesh, t)
    q = np.asarray(p, float) - offset
    best = (None, math.inf, -1, -1)
    for k, tri in enumerate(mesh.triangles.reshape(-1, 9)):
        x, y, z, region = kernels.closest_point_on_triangle(q[0], q[1], q[2], tri)
        d = math.dist((x, y, z), q)
        if d < best[1]:
            best = (np.array([x, y, z]) + offset, d, k, region)
    return best


def sphere_wall_contact(position, velocity, radius, mesh: WallMesh, t=0.0, reach=0.0):
    """Contact geometry of a sphere with the mesh, or None when out of range.

    One geometry per mesh: the globally closest surface point, so a sphere
    over a shared edge is reported once. ``reach`` is the adhesion cut-off
    gap (ignored when the mesh has adhesion disabled).
    """
    if not mesh.adhesion_enabled:
        reach = 0.0
    point, dist, _, _ = closest_point(position, mesh, t)
    if point is None or dist == 0.0:
        return None
    gap = dist - radius
    if gap > 0 and gap >= reach:
        return None
    return ContactGeometry.with_wall(position, velocity, radius, point, wall_motion(mesh, t)[1])


class WallSet:
    """Walls packed into flat arrays for the kernels; offsets refreshed per step."""

    def __init__(self, walls):
        self.walls = list(walls)
        for k, w in enumerate(self.walls):
            w.id = k
        tris = [w.triangles.reshape(-1, 9) for w in self.walls]
        self.tris = np.ascontiguousarray(np.concatenate(tris) if tris else np.zeros((0, 9)))
        t3 = self.tris.reshape(-1, 3, 3)
        self.tri_lo = np.ascontiguousarray(t3.min(axis=1)) if len(t3) else np.zeros((0, 3))
        self.tri_hi = np.ascontiguousarray(t3.max(axis=1)) if len(t3) else np.zeros((0, 3))
        counts = [len(t) for t in tris]
        self.start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        nw = len(self.walls)
        self.lo = np.zeros((nw, 3))
        self.hi = np.zeros((nw, 3))
        for k in range(nw):
            a, b = self.start[k], self.start[k + 1]
            self.lo[k] = self.tri_lo[a:b].min(axis=0)
            self.hi[k] = self.tri_hi[a:b].max(axis=0)
        self.offset = np.zeros((nw, 3))
        self.velocity = np.zeros((nw, 3))
        self.adhesive = np.array([w.adhesion_enabled for w in self.walls], np.bool_)

    def __len__(self):
        return len(self.walls)

    def update(self, t):
        for k, w in enumerate(self.walls):
            self.offset[k], self.velocity[k] = wall_motion(w, t)
        self.adhesive[:] = [w.adhesion_enabled for w in self.walls]

    def packed(self):
        return (self.tris, self.tri_lo, self.tri_hi, self.start, self.lo, self.hi,
                self.offset, self.velocity, self.adhesive)


# ---------------------------------------------------------------------------
# procedural meshes and file import
# ---------------------------------------------------------------------------


def funnel_mesh(opening_diameter, apex_angle_deg, height, z_opening=0.0, segments=48, center=(0.0, 0.0)):
    """Conical funnel wall: a frustum open at both ends, narrow end at ``z_opening``."""
    r0 = 0.5 * opening_diameter
    r1 = r0 + height * math.tan(math.radians(0.5 * apex_angle_deg))
    phi = np.linspace(0.0, 2 * math.pi, segments + 1)
    cx, cy = center
    lower = np.column_stack([cx + r0 * np.cos(phi), cy + r0 * np.sin(phi), np.full_like(phi, z_opening)])
    upper = np.column_stack([cx + r1 * np.cos(phi), cy + r1 * np.sin(phi), np.full_like(phi, z_opening + height)])
    tris = []
    for k in range(segments):
        tris.append([lower[k], lower[k + 1], upper[k + 1]])
        tris.append([lower[k], upper[k + 1], upper[k]])
    return np.array(tris)


def box_mesh(side, top_z, depth, center=(0.0, 0.0)):
    """Axis-aligned square block with its top face at ``top_z`` (12 triangles)."""
    h = 0.5 * side
    cx, cy = center
    x0, x1, y0, y1 = cx - h, cx + h, cy - h, cy + h
    z0, z1 = top_z - depth, top_z
    v = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ])
    faces = [
        (4, 5, 6), (4, 6, 7),  # top
        (0, 2, 1), (0, 3, 2),  # bottom
        (0, 1, 5), (0, 5, 4),
        (1, 2, 6), (1, 6, 5),
        (2, 3, 7), (2, 7, 6),
        (3, 0, 4), (3, 4, 7),
    ]
    return v[np.array(faces)]


def plane_mesh(half_width, z=0.0):
    """Large horizontal square made of two triangles."""
    a = half_width
    v = np.array([[-a, -a, z], [a, -a, z], [a, a, z], [-a, a, z]])
    return v[np.array([(0, 1, 2), (0, 2, 3)])]


def load_triangle_soup(path) -> np.ndarray:
    """Read an ASCII file with one triangle per line (nine floats, '#' comments)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = line.replace(",", " ").split()
        if len(vals) != 9:
            raise ValueError(f"{path}:{lineno}: expected 9 numbers, got {len(vals)}")
        rows.append([float(v) for v in vals])
    return np.array(rows).reshape(-1, 3, 3)


def save_triangle_soup(path, triangles):
    tris = np.asarray(triangles, float).reshape(-1, 9)
    Path(path).write_text("".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in tris))
