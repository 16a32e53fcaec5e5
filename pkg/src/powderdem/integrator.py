"""Simulation state container and velocity-Verlet time stepping."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import MaterialParams, Particle, sphere_mass
from .neighbors import ContactTable, grid_dims
from .walls import WallSet


class SimulationError(RuntimeError):
    """Raised when the state becomes non-finite; carries a diagnostic snapshot."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


def critical_dt(m_min: float, k_n: float) -> float:
    """Largest stable time step of the penalty contact, ``0.2 sqrt(m_min / k_N)``."""
    if m_min <= 0 or k_n <= 0:
        raise ValueError("mass and stiffness must be positive")
    return 0.2 * math.sqrt(m_min / k_n)


@dataclass
class Diagnostics:
    kinetic_energy: float = 0.0
    max_penetration: float = 0.0
    escaped: int = 0
    inserted: int = 0
    steps: int = 0

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class Snapshot:
    """Immutable copy of the particle table at one instant."""

    time: float
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    angular_velocities: np.ndarray
    radii: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ids", "positions", "velocities", "angular_velocities", "radii"):
            a = np.array(getattr(self, name))
            a.flags.writeable = False
            setattr(self, name, a)

    def __len__(self):
        return len(self.ids)


class SimulationState:
    """Particles, contact histories and walls of one simulation.

    Parameters
    ----------
    material : MaterialParams
    walls : sequence of WallMesh
    box : (lo, hi)
        Grid domain. Particles leaving it are removed and counted as escaped.
    max_radius : float
        Largest radius that will ever be inserted; fixes the cell size.
    min_mass : float, optional
        Smallest particle mass expected; used for the step-size guard. When
        omitted the smallest mass present at each step is used.
    escape_z : float
        Particles whose centre drops below this height are removed too.
    """

    def __init__(self, material: MaterialParams, walls=(), box=((-1e-3,) * 3, (1e-3,) * 3),
                 max_radius=25e-6, min_mass=None, escape_z=-math.inf, slots=32):
        self.material = material
        self.law = kernels.law_constants(material)
        self.walls = WallSet(walls)
        self.box_lo = np.asarray(box[0], float)
        self.box_hi = np.asarray(box[1], float)
        self.max_radius = float(max_radius)
        self.cell_size = 2.0 * self.max_radius + material.gap_cutoff
        self.dims = grid_dims(self.box_lo, self.box_hi, self.cell_size)
        # per-cell workspaces of the pair search, kept clean between calls
        self._head = np.full(int(self.dims.prod()), -1, np.int64)
        self._count = np.zeros(int(self.dims.prod()), np.int64)
        self._pairs = np.empty((2, 1024), np.int64)
        self.escape_z = float(escape_z)
        self.min_mass = min_mass
        self.t = 0.0
        self.step_count = 0
        self.next_id = 0
        self.ids = np.zeros(0, np.int64)
        self.pos = np.zeros((0, 3))
        self.vel = np.zeros((0, 3))
        self.omega = np.zeros((0, 3))
        self.radius = np.zeros(0)
        self.mass = np.zeros(0)
        self.ext = np.zeros((0, 3))
        self.force = np.zeros((0, 3))
        self.torque = np.zeros((0, 3))
        self.table = ContactTable(0, slots, len(self.walls))
        self.diagnostics = Diagnostics()
        self._stale = True

    # -- particle management -------------------------------------------------

    def __len__(self):
        return len(self.ids)

    def add_particles(self, positions, radii, velocities=None, angular_velocities=None, masses=None):
        """Append particles; returns their new ids."""
        positions = np.asarray(positions, float).reshape(-1, 3)
        radii = np.asarray(radii, float).reshape(-1)
        k = len(radii)
        if len(positions) != k:
            raise ValueError("positions and radii differ in length")
        if k and (radii.min() <= 0 or radii.max() > self.max_radius):
            raise ValueError(f"radii must lie in (0, {self.max_radius}]")
        vel = np.zeros((k, 3)) if velocities is None else np.asarray(velocities, float).reshape(k, 3)
        omg = np.zeros((k, 3)) if angular_velocities is None else np.asarray(angular_velocities, float).reshape(k, 3)
        mass = sphere_mass(radii, self.material.density) if masses is None else np.asarray(masses, float)
        new_ids = np.arange(self.next_id, self.next_id + k, dtype=np.int64)
        self.next_id += k
        self.ids = np.concatenate([self.ids, new_ids])
        self.pos = np.concatenate([self.pos, positions])
        self.vel = np.concatenate([self.vel, vel])
        self.omega = np.concatenate([self.omega, omg])
        self.radius = np.concatenate([self.radius, radii])
        self.mass = np.concatenate([self.mass, mass])
        self.ext = np.concatenate([self.ext, np.zeros((k, 3))])
        self.force = np.concatenate([self.force, np.zeros((k, 3))])
        self.torque = np.concatenate([self.torque, np.zeros((k, 3))])
        self.table.resize(self.ids)
        self.diagnostics.inserted += k
        self._stale = True
        return new_ids

    def add(self, particle: Particle):
        return self.add_particles(particle.position, [particle.radius], particle.velocity,
                                  particle.angular_velocity, [particle.mass])[0]

    def remove(self, mask):
        """Remove the particles selected by a boolean mask; returns how many."""
        mask = np.asarray(mask, bool)
        if not mask.any():
            return 0
        keep = ~mask
        for name in ("ids", "pos", "vel", "omega", "radius", "mass", "ext", "force", "torque"):
            setattr(self, name, getattr(self, name)[keep])
        self.table.keep(keep)
        self._stale = True
        return int(mask.sum())

    def particles(self):
        return [
            Particle(int(i), p.copy(), v.copy(), w.copy(), float(r), float(m))
            for i, p, v, w, r, m in zip(self.ids, self.pos, self.vel, self.omega, self.radius, self.mass)
        ]

    def snapshot(self) -> Snapshot:
        order = np.argsort(self.ids, kind="stable")
        return Snapshot(self.t, self.ids[order], self.pos[order], self.vel[order],
                        self.omega[order], self.radius[order], self.diagnostics.as_dict())

    # -- derived quantities --------------------------------------------------

    def kinetic_energy(self) -> float:
        inertia = 0.4 * self.mass * self.radius**2
        return float(0.5 * (self.mass @ (self.vel**2).sum(axis=1)) + 0.5 * (inertia @ (self.omega**2).sum(axis=1)))

    def mean_kinetic_energy(self) -> float:
        return self.kinetic_energy() / len(self) if len(self) else 0.0

    def momentum(self) -> np.ndarray:
        return self.mass @ self.vel

    def critical_dt(self) -> float:
        m_min = self.min_mass if self.min_mass is not None else (self.mass.min() if len(self) else math.inf)
        if math.isinf(m_min):
            return math.inf
        return critical_dt(m_min, self.material.stiffness)

    # -- force evaluation ----------------------------------------------------

    def evaluate_forces(self, dt=0.0, brute_force=False):
        """Recompute forces and torques at the current state (no time advance).

        ``dt`` is the history increment used for the tangential gap update; the
        default 0 leaves stored histories unchanged apart from the Coulomb
        return mapping. Escaped particles are removed first.
        """
        self.walls.update(self.t)
        deepest, escaped, self._pairs = kernels.evaluate(
            len(self), self.pos, self.vel, self.omega, self.radius, self.mass, self.ext, self.ids,
            self.material.gravity, self.law, float(dt), self.box_lo, self.cell_size, self.dims,
            self._head, self._count, self._pairs, self.escape_z, bool(brute_force), self.table.hist_id, self.table.hist_gt,
            self.table.hist_seen, self.walls.packed(), self.table.wall_gt, self.table.wall_active,
            self.force, self.torque,
        )
        if escaped.any():
            self.diagnostics.escaped += self.remove(escaped)
            return self.evaluate_forces(dt, brute_force)
        self._note_penetration(deepest)
        self._stale = False
        return self.force, self.torque

    def _note_penetration(self, deepest):
        if deepest < 0:
            self.diagnostics.max_penetration = max(self.diagnostics.max_penetration, -deepest)


def step(state: SimulationState, dt: float) -> SimulationState:
    """Advance by one velocity-Verlet step of size ``dt``.

    Forces are evaluated once per step after the drift, with the walls at
    their end-of-step position and the half-kicked velocities feeding the
    dissipative terms. Tangential histories are integrated inside that
    evaluation. Raises ``ValueError`` for ``dt`` above the critical step and
    :class:`SimulationError` if the state becomes non-finite.
    """
    limit = state.critical_dt()
    if not 0 < dt <= limit:
        raise ValueError(f"time step {dt:.4g} s exceeds the critical step {limit:.4g} s")
    if state._stale:
        state.evaluate_forces(0.0)
    state.walls.update(state.t + dt)
    deepest, escaped, finite, state._pairs = kernels.verlet_step(
        len(state), state.pos, state.vel, state.omega, state.radius, state.mass, state.ext, state.ids,
        state.material.gravity, state.law, float(dt), state.box_lo, state.cell_size, state.dims,
        state._head, state._count, state._pairs, state.escape_z, state.table.hist_id, state.table.hist_gt, state.table.hist_seen,
        state.walls.packed(), state.table.wall_gt, state.table.wall_active, state.force, state.torque,
    )
    state.t += dt
    state.step_count += 1
    state.diagnostics.steps = state.step_count
    if not finite:
        bad = ~(np.isfinite(state.pos).all(1) & np.isfinite(state.vel).all(1) & np.isfinite(state.omega).all(1))
        snap = state.snapshot()
        raise SimulationError(
            f"non-finite state at step {state.step_count} (t = {state.t:.6g} s), "
            f"particle ids {state.ids[bad][:10].tolist()}",
            snap,
        )
    state._note_penetration(deepest)
    if escaped.any():
        # escaped particles felt gravity only; their removal leaves the others untouched
        state.diagnostics.escaped += state.remove(escaped)
        state._stale = False
    return state


@dataclass
class SettlingCriterion:
    """Mean kinetic energy below ``threshold`` continuously for ``hold`` seconds."""

    threshold: float = 1e-16
    hold: float = 1e-3
    _since: float | None = None

    def __call__(self, state: SimulationState) -> bool:
        if len(state) and state.mean_kinetic_energy() < self.threshold:
            if self._since is None:
                self._since = state.t
            return state.t - self._since >= self.hold
        self._since = None
        return False


def run(state: SimulationState, t_end: float, dt: float, callbacks=(), snapshot_interval=None,
        settle=None, check_every=1):
    """Step until ``t_end`` (absolute time) or until ``settle(state)`` holds.

    ``callbacks`` are called as ``cb(time, snapshot, diagnostics)`` every
    ``snapshot_interval`` seconds of simulated time (never when None).
    ``settle`` is tested every ``check_every`` steps. Returns the state.
    """
    if dt > state.critical_dt():
        step(state, dt)  # raises with the guard message
    next_snap = state.t + snapshot_interval if snapshot_interval else math.inf
    while state.t + 0.5 * dt < t_end:
        step(state, dt)
        if state.t >= next_snap - 0.5 * dt:
            snap = state.snapshot()
            for cb in callbacks:
                cb(state.t, snap, snap.diagnostics)
            next_snap += snapshot_interval
        if settle is not None and state.step_count % check_every == 0 and settle(state):
            break
    state.diagnostics.kinetic_energy = state.kinetic_energy()
    return state


def check_penetration(state: SimulationState) -> float:
    """Recorded maximum penetration relative to the largest radius; warns above c_g."""
    ratio = state.diagnostics.max_penetration / state.max_radius
    if ratio > state.material.penetration_bound:
        warnings.warn(
            f"max penetration {ratio:.3g} r_max exceeds the bound {state.material.penetration_bound}",
            RuntimeWarning,
        )
    return ratio
