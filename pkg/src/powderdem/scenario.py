"""Funnel-and-cube pouring test used to build powder piles for AOR measurement.

Geometry (z up, cube centred on the funnel axis at x = y = 0)::

        feed zone   (disk just above the throat)
      \\    :    /   funnel cone, narrow end at z_open
       \\___:___/
            :        drop gap
        _________    cube top, initially at z = 0, lowered as the pile grows
       |         |

Particles are inserted at ``feed_rate`` in a disk above the throat and fall
through the opening onto the cube. The cube is driven down whenever the
pile top comes too close to the opening. Feeding stops once the pile
reaches all four cube edges and the amount of powder on the cube stops
growing; the scene is then left to settle.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .analysis import PileSnapshot
from .core import MaterialParams, SizeDistribution, sample_diameters, sphere_mass
from .integrator import SettlingCriterion, SimulationState, run
from .walls import PiecewiseVelocity, Vibration, WallMesh, box_mesh, funnel_mesh

#: cube side of the full-size experiment [m]
CUBE_SIDE_A0 = 10e-3


@dataclass(frozen=True)
class FunnelConfig:
    """Geometry, feed and termination settings of the funnel test.

    The defaults are the full-size simulation setup (cube a0/4); use
    :meth:`preset` for the reduced desk-scale variant.
    """

    opening_diameter: float = 0.4e-3
    cone_apex_angle: float = 60.0
    funnel_height: float = 1.0e-3
    cube_side: float = 2.5e-3
    drop_gap: float = 0.5e-3
    feed_rate: float = 5e4
    feed_speed: float = 0.05
    initial_particles: int = 0
    max_particles: int = 1_000_000
    vibration_amplitude: float = 0.0
    vibration_frequency: float = 0.0
    vibration_enabled: bool = False
    descent_speed: float = 5e-3
    descent_trigger: float = 0.5
    #: window over which stalled accumulation and clogging are judged [s]
    hold_time: float = 0.02
    #: feeding stops when on-cube growth per window falls below this share of the feed
    stall_fraction: float = 0.1
    #: controller period (feeding, cube descent, termination checks) [s]
    check_interval: float = 2e-4
    #: particles slower than this count as resting on the pile [m/s]
    rest_speed: float = 0.01
    t_max: float = 20.0
    settle_threshold: float = 1e-16
    settle_hold: float = 5e-3
    settle_t_max: float = 0.2

    def __post_init__(self):
        if not self.cube_side > 0:
            raise ValueError("cube side must be positive")
        if not self.opening_diameter > 0 or not 0 < self.cone_apex_angle < 180:
            raise ValueError("invalid funnel geometry")
        if self.feed_rate < 0 or self.initial_particles < 0:
            raise ValueError("feed rate and initial charge must be non-negative")
        if not 0 < self.descent_trigger < 1:
            raise ValueError("descent trigger must lie in (0, 1)")

    @classmethod
    def preset(cls, name: str) -> "FunnelConfig":
        """``"paper-a0-4"`` (full size, long running) or ``"desk"`` (1 mm cube, CI speed)."""
        if name == "paper-a0-4":
            return cls()
        if name == "desk":
            return cls(
                funnel_height=0.4e-3,
                cube_side=1e-3,
                drop_gap=0.25e-3,
                feed_rate=2e4,
                max_particles=20_000,
                t_max=1.5,
            )
        raise ValueError(f"unknown preset {name!r}; choose 'desk' or 'paper-a0-4'")

    def replace(self, **changes) -> "FunnelConfig":
        return dataclasses.replace(self, **changes)

    @property
    def scale_label(self) -> str:
        """Cube size relative to the full-size experiment, e.g. ``"a0/4"``."""
        ratio = CUBE_SIDE_A0 / self.cube_side
        if abs(ratio - round(ratio)) < 1e-9:
            k = int(round(ratio))
            return "a0" if k == 1 else f"a0/{k}"
        return f"{self.cube_side / CUBE_SIDE_A0:.4g} a0"

    def scaled(self, s: float) -> "FunnelConfig":
        """Geometrically similar setup under gravity: lengths x s, times and speeds x sqrt(s).

        Energies of individual particles scale as s^4 (mass s^3, speed^2 s).
        """
        r = math.sqrt(s)
        return self.replace(
            opening_diameter=self.opening_diameter * s,
            funnel_height=self.funnel_height * s,
            cube_side=self.cube_side * s,
            drop_gap=self.drop_gap * s,
            feed_rate=self.feed_rate / r,
            feed_speed=self.feed_speed * r,
            vibration_amplitude=self.vibration_amplitude * s,
            vibration_frequency=self.vibration_frequency / r,
            descent_speed=self.descent_speed * r,
            hold_time=self.hold_time * r,
            check_interval=self.check_interval * r,
            rest_speed=self.rest_speed * r,
            t_max=self.t_max * r,
            settle_threshold=self.settle_threshold * s**4,
            settle_hold=self.settle_hold * r,
            settle_t_max=self.settle_t_max * r,
        )

    # geometry helpers -------------------------------------------------------

    @property
    def z_opening(self) -> float:
        return self.drop_gap

    def funnel_radius(self, z: float) -> float:
        """Inner radius of the cone at height z (above the opening)."""
        return 0.5 * self.opening_diameter + (z - self.z_opening) * math.tan(math.radians(0.5 * self.cone_apex_angle))


class Scene:
    """A funnel test in progress: the simulation state plus its controllers."""

    def __init__(self, config: FunnelConfig, dist: SizeDistribution, material: MaterialParams,
                 seed: int = 0):
        self.config = config
        self.dist = dist
        self.material = material
        self.rng = np.random.default_rng(seed)
        c = config
        if not c.opening_diameter > dist.d_max:
            raise ValueError("the discharge opening must be wider than the largest particle")
        self.cube_motion = PiecewiseVelocity()
        self.vibration = Vibration(c.vibration_amplitude, c.vibration_frequency, c.vibration_enabled)
        self.funnel = WallMesh(
            funnel_mesh(c.opening_diameter, c.cone_apex_angle, c.funnel_height, c.z_opening),
            motion=self.vibration, adhesion_enabled=False, name="funnel",
        )
        self.cube = WallMesh(box_mesh(c.cube_side, 0.0, 0.25 * c.cube_side), motion=self.cube_motion,
                             adhesion_enabled=True, name="cube")
        d_max = dist.d_max
        # the pile can grow to about the cube side above the cube; leave room for the descent
        lo_z = -2.5 * c.cube_side - 4 * d_max
        half = 0.5 * c.cube_side + 4 * d_max
        top = c.z_opening + c.funnel_height + 8 * d_max
        funnel_r = c.funnel_radius(c.z_opening + c.funnel_height)
        half = max(half, funnel_r + 2 * d_max)
        self.state = SimulationState(
            material, [self.funnel, self.cube], box=((-half, -half, lo_z), (half, half, top)),
            max_radius=0.5 * d_max, min_mass=sphere_mass(0.5 * dist.d_min, material.density),
        )
        self.fed = 0
        self.feed_start = 0.0
        self.feeding = c.feed_rate > 0
        self._update_escape()

    # -- geometry in time ----------------------------------------------------

    def cube_top(self, t=None) -> float:
        t = self.state.t if t is None else t
        return float(self.cube_motion.offset(t)[2])

    def _update_escape(self):
        self.state.escape_z = self.cube_top() - 2.0 * self.dist.d_max

    def snapshot(self) -> PileSnapshot:
        s = self.state.snapshot()
        return PileSnapshot(s.positions, s.radii, (0.0, 0.0), self.config.cube_side, self.cube_top(),
                            ids=s.ids, velocities=s.velocities, angular_velocities=s.angular_velocities,
                            time=s.time)

    # -- particle insertion --------------------------------------------------

    def _insert(self, diameters, sampler, max_attempts, existing_window):
        """Rejection insertion; returns accepted (positions, radii)."""
        st = self.state
        lo, hi = existing_window
        near = (st.pos[:, 2] > lo) & (st.pos[:, 2] < hi) if len(st) else np.zeros(0, bool)
        others_p = list(st.pos[near])
        others_r = list(st.radius[near])
        acc_p, acc_r = [], []
        for d in diameters:
            r = 0.5 * d
            for _ in range(max_attempts):
                p = sampler(r)
                if p is None:
                    continue
                if others_p:
                    dist = np.linalg.norm(np.asarray(others_p) - p, axis=1)
                    if np.any(dist <= np.asarray(others_r) + r):
                        continue
                others_p.append(p)
                others_r.append(r)
                acc_p.append(p)
                acc_r.append(r)
                break
            else:
                break
        return np.array(acc_p).reshape(-1, 3), np.array(acc_r)

    def feed_zone(self):
        """(radius, z_low, z_high) of the insertion disk above the throat."""
        c = self.config
        d_max = self.dist.d_max
        radius = 0.5 * c.opening_diameter - 0.5 * d_max
        z0 = c.z_opening + d_max
        return radius, z0, z0 + 4 * d_max

    def _feed_sampler(self, r):
        radius, z0, z1 = self.feed_zone()
        rho = (radius - r) * math.sqrt(self.rng.random()) if radius > r else 0.0
        phi = 2 * math.pi * self.rng.random()
        z = z0 + r + (z1 - z0 - 2 * r) * self.rng.random()
        return np.array([rho * math.cos(phi), rho * math.sin(phi), z])

    def add_initial_charge(self, n, max_attempts=1000):
        """Loose random packing of ``n`` particles inside the cone above the throat."""
        if n <= 0:
            return 0
        c = self.config
        d = sample_diameters(self.dist, self.rng, n)
        z_lo = c.z_opening + self.dist.d_max
        z_hi = c.z_opening + c.funnel_height

        def sampler(r):
            z = z_lo + r + (z_hi - z_lo - 2 * r) * self.rng.random()
            # radial clearance from the cone wall measured normal to the wall
            rmax = c.funnel_radius(z) - r / math.cos(math.radians(0.5 * c.cone_apex_angle))
            if rmax <= 0:
                return None
            rho = rmax * math.sqrt(self.rng.random())
            phi = 2 * math.pi * self.rng.random()
            return np.array([rho * math.cos(phi), rho * math.sin(phi), z])

        pos, rad = self._insert(d, sampler, max_attempts, (-math.inf, math.inf))
        if len(rad) < n:
            raise RuntimeError(f"could only insert {len(rad)} of {n} particles: funnel too full")
        self.state.add_particles(pos, rad, masses=sphere_mass(rad, self.material.density))
        return n

    def feed(self, max_attempts=50):
        """Insert the particles due at the current time; returns how many were added."""
        c = self.config
        if not self.feeding or c.feed_rate <= 0:
            return 0
        due = int(math.floor(c.feed_rate * (self.state.t - self.feed_start))) - self.fed
        due = min(due, c.max_particles - self.state.diagnostics.inserted)
        if due <= 0:
            return 0
        _, z0, z1 = self.feed_zone()
        d_max = self.dist.d_max
        pos, rad = self._insert(sample_diameters(self.dist, self.rng, due), self._feed_sampler,
                                max_attempts, (z0 - d_max, z1 + d_max))
        k = len(rad)
        if k:
            v = np.zeros((k, 3))
            v[:, 2] = -c.feed_speed
            self.state.add_particles(pos, rad, velocities=v)
        # particles that found no room are dropped from the schedule rather than queued
        self.fed += due
        return k

    # -- monitoring ----------------------------------------------------------

    def _on_cube(self):
        st = self.state
        h = 0.5 * self.config.cube_side
        top = self.cube_top()
        return (
            (np.abs(st.pos[:, 0]) <= h) & (np.abs(st.pos[:, 1]) <= h)
            & (st.pos[:, 2] >= top - 0.1 * st.radius) & (st.pos[:, 2] < self.config.z_opening)
        )

    def resting(self):
        st = self.state
        return self._on_cube() & (np.linalg.norm(st.vel, axis=1) < self.config.rest_speed)

    def pile_top(self) -> float:
        """Highest resting particle surface on the cube (cube top if none)."""
        mask = self.resting()
        if not mask.any():
            return self.cube_top()
        st = self.state
        return float((st.pos[mask, 2] + st.radius[mask]).max())

    def coverage(self):
        """Which cube edges (+x, -x, +y, -y) the resting bottom layer has reached."""
        return footprint_coverage(self.state.pos[self.resting()], self.state.radius[self.resting()],
                                  self.config.cube_side, self.cube_top(), self.dist.median)

    def control_cube(self):
        """Lower the cube while the pile top is within the trigger distance of the opening."""
        c = self.config
        clearance = c.z_opening - self.pile_top()
        v = -c.descent_speed if clearance < (1.0 - c.descent_trigger) * c.drop_gap else 0.0
        self.cube_motion.set_velocity(self.state.t, [0.0, 0.0, v])

    def discharged(self) -> int:
        """Particles that have left the funnel (below the opening or escaped)."""
        st = self.state
        return int((st.pos[:, 2] < self.config.z_opening).sum()) + st.diagnostics.escaped


def footprint_coverage(positions, radii, cube_side, cube_top, d_ref):
    """Edge coverage of a pile: bottom-layer particles within ``d_ref`` of each cube edge."""
    positions = np.asarray(positions, float).reshape(-1, 3)
    radii = np.asarray(radii, float)
    h = 0.5 * cube_side
    bottom = (positions[:, 2] - radii < cube_top + 0.5 * d_ref) & (np.abs(positions[:, 0]) <= h) & (
        np.abs(positions[:, 1]) <= h)
    x, y = positions[bottom, 0], positions[bottom, 1]
    edge = h - d_ref
    return {"+x": bool((x > edge).any()), "-x": bool((x < -edge).any()),
            "+y": bool((y > edge).any()), "-y": bool((y < -edge).any())}


def build_funnel_scene(config: FunnelConfig, dist: SizeDistribution, material: MaterialParams,
                       seed: int = 0) -> Scene:
    """Funnel (adhesion off) over a cube (adhesion on), with the configured initial charge."""
    scene = Scene(config, dist, material, seed)
    scene.add_initial_charge(config.initial_particles)
    return scene


def feed_particles(scene: Scene) -> int:
    """Insert the particles due at the scene's current time."""
    return scene.feed()


@dataclass
class FunnelResult:
    snapshot: PileSnapshot
    reason: str
    time: float
    steps: int
    inserted: int
    escaped: int
    max_penetration: float
    max_particles_in_flight: int
    covered: dict

    def report(self) -> dict:
        return {
            "termination": self.reason,
            "simulated_time_s": self.time,
            "steps": self.steps,
            "inserted": self.inserted,
            "escaped": self.escaped,
            "remaining": len(self.snapshot),
            "max_penetration_m": self.max_penetration,
            "max_in_flight": self.max_particles_in_flight,
            "edges_covered": ",".join(k for k, v in self.covered.items() if v) or "none",
        }


def run_funnel(config: FunnelConfig, dist: SizeDistribution, material: MaterialParams, seed=0,
               dt=None, progress=None) -> FunnelResult:
    """Pour, stop on a covered and saturated pile, settle, and return the pile.

    Termination reasons: ``"covered"`` (all edges reached and accumulation
    stalled), ``"particle cap"``, ``"time cap"`` or ``"clogged"`` (nothing
    discharged over a hold window while powder sat in the funnel).
    ``progress(scene)`` is called after every controller period.
    """
    scene = build_funnel_scene(config, dist, material, seed)
    st = scene.state
    dt = st.critical_dt() if dt is None else dt
    c = config
    window_start = 0.0
    window_count = 0
    window_fed = 0
    window_discharged = 0
    max_flight = 0
    reason = "time cap"
    while st.t < c.t_max:
        scene.feed()
        scene.control_cube()
        scene._update_escape()
        run(st, st.t + c.check_interval, dt)
        if progress is not None:
            progress(scene)
        on_cube = scene._on_cube()
        max_flight = max(max_flight, int((st.pos[:, 2] < c.z_opening).sum() - on_cube.sum()))
        if st.t - window_start >= c.hold_time:
            count = int(on_cube.sum())
            fed = scene.fed - window_fed
            discharged = scene.discharged()
            in_funnel = int((st.pos[:, 2] >= c.z_opening).sum())
            if fed > 0 and in_funnel > 0 and discharged == window_discharged and st.t > c.hold_time:
                reason = "clogged"
                break
            if all(scene.coverage().values()) and count - window_count < c.stall_fraction * max(fed, 1):
                reason = "covered"
                break
            if st.diagnostics.inserted >= c.max_particles:
                reason = "particle cap"
                break
            window_start, window_count, window_fed, window_discharged = st.t, count, scene.fed, discharged
    # let the pile come to rest with the cube halted
    scene.feeding = False
    scene.cube_motion.set_velocity(st.t, [0.0, 0.0, 0.0])
    scene._update_escape()
    run(st, st.t + c.settle_t_max, dt, settle=SettlingCriterion(c.settle_threshold, c.settle_hold),
        check_every=50)
    return FunnelResult(
        scene.snapshot(), reason, st.t, st.step_count, st.diagnostics.inserted, st.diagnostics.escaped,
        st.diagnostics.max_penetration, max_flight, scene.coverage(),
    )
