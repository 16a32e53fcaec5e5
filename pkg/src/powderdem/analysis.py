"""Pile post-processing: height profiles, angle of repose, packing fraction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class PileSnapshot:
    """Particle positions and radii at one instant, with the cube they rest on."""

    positions: np.ndarray
    radii: np.ndarray
    cube_center: tuple = (0.0, 0.0)
    cube_side: float = 1e-3
    cube_top: float = 0.0
    ids: np.ndarray | None = None
    velocities: np.ndarray | None = None
    angular_velocities: np.ndarray | None = None
    time: float = 0.0

    def __post_init__(self):
        def frozen(a, shape, dtype=float):
            a = np.array(a, dtype=dtype).reshape(shape)
            a.flags.writeable = False
            return a

        pos = frozen(self.positions, (-1, 3))
        n = len(pos)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "radii", frozen(self.radii, (n,)))
        object.__setattr__(self, "cube_center", tuple(float(v) for v in self.cube_center))
        ids = np.arange(n) if self.ids is None else self.ids
        object.__setattr__(self, "ids", frozen(ids, (n,), np.int64))
        for name in ("velocities", "angular_velocities"):
            v = getattr(self, name)
            object.__setattr__(self, name, frozen(np.zeros((n, 3)) if v is None else v, (n, 3)))

    def __len__(self):
        return len(self.radii)

    @property
    def mean_diameter(self) -> float:
        return float(2.0 * self.radii.mean())

    def translated(self, dx: float, dy: float) -> "PileSnapshot":
        shift = np.array([dx, dy, 0.0])
        return PileSnapshot(self.positions + shift, self.radii,
                            (self.cube_center[0] + dx, self.cube_center[1] + dy), self.cube_side,
                            self.cube_top, self.ids, self.velocities, self.angular_velocities, self.time)

    def mirrored(self, axis: int = 0) -> "PileSnapshot":
        """Reflect through the vertical plane through the cube centre normal to ``axis``."""
        pos = self.positions.copy()
        c = self.cube_center[axis]
        pos[:, axis] = 2 * c - pos[:, axis]
        return PileSnapshot(pos, self.radii, self.cube_center, self.cube_side, self.cube_top,
                            self.ids, self.velocities, self.angular_velocities, self.time)


@dataclass(frozen=True)
class HeightProfile:
    """Silhouette height h(x) over bins centred at ``x`` (relative to the cube centre)."""

    x: np.ndarray
    height: np.ndarray
    base: float = 0.0
    bin_width: float = 0.0
    filled: np.ndarray = field(default=None)


@dataclass(frozen=True)
class FlankFit:
    slope: float
    intercept: float
    residual: float
    bins: int

    @property
    def angle(self) -> float:
        return math.degrees(math.atan(abs(self.slope)))


@dataclass(frozen=True)
class AORResult:
    """Angle of repose: mean of the left and right flank angles (degrees)."""

    angle: float
    left: FlankFit | None
    right: FlankFit | None
    top_exclusion: float
    bottom_exclusion: float
    per_axis: tuple = ()


def project_pile(snapshot: PileSnapshot, axis: int = 0, bin_width: float | None = None) -> HeightProfile:
    """Maximum particle top (z + r) per lateral bin along ``axis`` over the cube footprint.

    Bins tile the cube side symmetrically about its centre; the default
    width is half the mean diameter.
    Empty bins between occupied ones are interpolated linearly; empty bins
    outside the occupied range are set to the bare cube surface.
    """
    if len(snapshot) == 0:
        raise ValueError("cannot project an empty snapshot")
    if axis not in (0, 1):
        raise ValueError("axis must be 0 (x) or 1 (y)")
    w = 0.5 * snapshot.mean_diameter if bin_width is None else float(bin_width)
    half = 0.5 * snapshot.cube_side
    nbins = max(1, int(math.ceil(snapshot.cube_side / w - 1e-9)))
    # bins are laid out symmetrically about the cube centre so that mirroring maps bins onto bins
    start = -0.5 * nbins * w
    rel = snapshot.positions[:, :2] - np.asarray(snapshot.cube_center)
    top = snapshot.positions[:, 2] + snapshot.radii
    inside = (np.abs(rel[:, 0]) <= half) & (np.abs(rel[:, 1]) <= half) & (
        snapshot.positions[:, 2] >= snapshot.cube_top)
    idx = np.floor((rel[inside, axis] - start) / w).astype(np.int64)
    idx = np.clip(idx, 0, nbins - 1)
    h = np.full(nbins, -np.inf)
    np.maximum.at(h, idx, top[inside])
    filled = np.isfinite(h)
    if not filled.any():
        raise ValueError("no particles above the cube footprint")
    x = start + (np.arange(nbins) + 0.5) * w
    k = np.nonzero(filled)[0]
    inner = np.arange(k[0], k[-1] + 1)
    h[inner] = np.interp(x[inner], x[filled], h[filled])
    h[: k[0]] = snapshot.cube_top
    h[k[-1] + 1:] = snapshot.cube_top
    return HeightProfile(x, h, snapshot.cube_top, w, filled)


def _fit(x, y):
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.sqrt(np.mean((a @ [slope, intercept] - y) ** 2)))
    return FlankFit(float(slope), float(intercept), resid, len(x))


def measure_aor(profile: HeightProfile, top_exclusion: float = 0.2, bottom_exclusion: float = 0.1,
                min_bins: int = 5) -> AORResult:
    """Fit a line to each flank of the profile and average the two angles.

    Heights are taken relative to the profile minimum. Only bins whose
    relative height lies between ``bottom_exclusion`` and
    ``1 - top_exclusion`` of the pile height are used, which leaves out the
    rounded impact zone at the top and the boundary layer at the bottom. A
    flat profile gives 0 degrees.
    """
    if not 0 <= bottom_exclusion < 1 - top_exclusion <= 1:
        raise ValueError("exclusions must leave a non-empty height band")
    x = np.asarray(profile.x, float)
    h = np.asarray(profile.height, float)
    base = h.min()
    height = h.max() - base
    scale = max(abs(h.max()), abs(base), 1e-300)
    if height <= 1e-12 * scale:
        return AORResult(0.0, None, None, top_exclusion, bottom_exclusion)
    rel = (h - base) / height
    peak = np.nonzero(h == h.max())[0]
    centre = 0.5 * (peak[0] + peak[-1])
    band = (rel >= bottom_exclusion) & (rel <= 1.0 - top_exclusion)
    idx = np.arange(len(h))
    fits = []
    for side in (idx < centre, idx > centre):
        sel = band & side
        if sel.sum() < min_bins:
            raise ValueError(
                f"flank has {int(sel.sum())} bins inside the fit band, need {min_bins}: pile too small"
            )
        fits.append(_fit(x[sel], h[sel]))
    left, right = fits
    return AORResult(0.5 * (left.angle + right.angle), left, right, top_exclusion, bottom_exclusion)


def measure_pile_aor(snapshot: PileSnapshot, top_exclusion=0.2, bottom_exclusion=0.1, min_bins=5,
                     bin_width=None) -> AORResult:
    """AOR averaged over the x and y projections (four flanks)."""
    results = [
        measure_aor(project_pile(snapshot, axis, bin_width), top_exclusion, bottom_exclusion, min_bins)
        for axis in (0, 1)
    ]
    angle = float(np.mean([r.angle for r in results]))
    first = results[0]
    return AORResult(angle, first.left, first.right, top_exclusion, bottom_exclusion, tuple(results))


# ---------------------------------------------------------------------------
# packing fraction
# ---------------------------------------------------------------------------


def _quadrant_area(x, y, r):
    """Signed area of the disk of radius r (centred at 0) within [0, x] x [0, y]."""
    sx = math.copysign(1.0, x)
    sy = math.copysign(1.0, y)
    x = min(abs(x), r)
    y = min(abs(y), r)
    if x * x + y * y <= r * r:
        return sx * sy * x * y
    xc = math.sqrt(r * r - y * y)

    def prim(t):
        return 0.5 * (t * math.sqrt(max(r * r - t * t, 0.0)) + r * r * math.asin(min(t / r, 1.0)))

    return sx * sy * (y * xc + prim(x) - prim(xc))


def disk_rectangle_area(cx, cy, r, x0, x1, y0, y1):
    """Exact area of a disk intersected with an axis-aligned rectangle."""
    if r <= 0 or x1 <= x0 or y1 <= y0:
        return 0.0
    a, b, c, d = x0 - cx, x1 - cx, y0 - cy, y1 - cy
    return (_quadrant_area(b, d, r) - _quadrant_area(a, d, r)
            - _quadrant_area(b, c, r) + _quadrant_area(a, c, r))


def sphere_box_volume(center, r, lo, hi):
    """Volume of a sphere inside an axis-aligned box (area of slices integrated over z)."""
    center = np.asarray(center, float)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if np.any(center + r <= lo) or np.any(center - r >= hi):
        return 0.0
    if np.all(center - r >= lo) and np.all(center + r <= hi):
        return 4.0 / 3.0 * math.pi * r**3
    z0 = max(lo[2], center[2] - r)
    z1 = min(hi[2], center[2] + r)

    def slice_area(z):
        rho2 = r * r - (z - center[2]) ** 2
        if rho2 <= 0:
            return 0.0
        return disk_rectangle_area(center[0], center[1], math.sqrt(rho2), lo[0], hi[0], lo[1], hi[1])

    value, _ = quad(slice_area, z0, z1, epsabs=0.0, epsrel=1e-10, limit=200)
    return value


def packing_fraction(snapshot: PileSnapshot, lo, hi) -> float:
    """Solid volume fraction inside the probe box ``[lo, hi]`` (0 for an empty box)."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    volume = float(np.prod(hi - lo))
    if volume <= 0 or len(snapshot) == 0:
        return 0.0
    solid = sum(sphere_box_volume(p, r, lo, hi) for p, r in zip(snapshot.positions, snapshot.radii))
    return solid / volume
