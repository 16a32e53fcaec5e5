"""Pairwise contact, friction, rolling-resistance and adhesion laws.

These are the readable reference versions operating on single pairs. The
time-stepping code uses the fused kernels in :mod:`powderdem.kernels`,
which are tested against the functions here.

Sign conventions: ``n`` points from particle *i* towards particle *j* (or
towards the wall surface point); every force returned here acts on *i*.
A negative normal gap is a penetration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

#: Brilliantov rolling-resistance constant
C1_ROLLING = 1.15344
#: trial tangential forces below this magnitude produce no force [N]
TANGENT_ZERO = 1e-18


def _projector(n):
    return np.eye(3) - np.outer(n, n)


@dataclass
class ContactGeometry:
    normal: np.ndarray
    gap: float
    gap_rate: float
    offset_i: np.ndarray
    offset_j: np.ndarray

    @classmethod
    def between(cls, xi, xj, vi, vj, ri, rj):
        """Geometry of two spheres; ``offset_*`` point from each centre to the contact point."""
        d = np.asarray(xj, float) - np.asarray(xi, float)
        dist = np.linalg.norm(d)
        n = d / dist
        g = dist - (ri + rj)
        g_rate = float(np.dot(np.asarray(vj, float) - np.asarray(vi, float), n))
        return cls(n, g, g_rate, (ri + 0.5 * g) * n, -(rj + 0.5 * g) * n)

    @classmethod
    def with_wall(cls, x, v, r, surface_point, wall_velocity):
        """Geometry of a sphere against a rigid surface point (wall side has no offset)."""
        d = np.asarray(surface_point, float) - np.asarray(x, float)
        dist = np.linalg.norm(d)
        n = d / dist
        g = dist - r
        g_rate = float(np.dot(np.asarray(wall_velocity, float) - np.asarray(v, float), n))
        return cls(n, g, g_rate, (r + 0.5 * g) * n, np.zeros(3))


@dataclass
class PairContactState:
    """Tangential gap history of one touching pair."""

    g_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    active: bool = True


@dataclass
class PairForces:
    f_cn: np.ndarray
    f_ct: np.ndarray
    f_an: np.ndarray
    m_r: np.ndarray

    @property
    def total(self):
        return self.f_cn + self.f_ct + self.f_an


class AdhesionCutoffs(NamedTuple):
    pull_off: float
    g0: float
    g_star: float


def damping_constant(c_cor: float, k_n: float, m_eff: float) -> float:
    """Dashpot constant giving restitution ``c_cor`` for a linear spring ``k_n``."""
    if not 0 < c_cor <= 1:
        raise ValueError(f"coefficient of restitution must lie in (0, 1], got {c_cor}")
    ln_c = math.log(c_cor)
    return 2.0 * abs(ln_c) * math.sqrt(k_n * m_eff / (ln_c**2 + math.pi**2))


def min_stiffness(density, v_max, r_max, surface_energy, c_g, *, terms=False):
    """Lower bound on ``k_N`` keeping the relative penetration below ``c_g``.

    With ``terms=True`` the dynamic (impact) and static (adhesion) bounds are
    returned separately instead of their maximum.
    """
    if c_g <= 0:
        raise ValueError("c_g must be positive")
    dynamic = 8.0 * math.pi * density * v_max**2 * r_max / c_g**2
    static = 4.0 * math.pi * surface_energy / c_g
    return (dynamic, static) if terms else max(dynamic, static)


def normal_force_magnitude(gap, gap_rate, k_n, d_n, tension_cutoff=True):
    if gap > 0:
        return 0.0
    f = k_n * gap + d_n * gap_rate
    return min(0.0, f) if tension_cutoff else f


def normal_force(geom: ContactGeometry, k_n: float, d_n: float, tension_cutoff: bool = True):
    """Linear spring-dashpot normal force on *i*; never tensile with the cut-off."""
    return normal_force_magnitude(geom.gap, geom.gap_rate, k_n, d_n, tension_cutoff) * geom.normal


def tangential_gap_rate(vi, vj, wi, wj, geom: ContactGeometry):
    n = geom.normal
    return (
        _projector(n) @ (np.asarray(vi, float) - np.asarray(vj, float))
        + np.cross(wi, geom.offset_i)
        - np.cross(wj, geom.offset_j)
    )


def tangential_stiffness(k_n: float, poisson: float) -> float:
    """Tangential spring constant; the tangential dashpot equals the normal one."""
    if not 0 <= poisson < 0.5:
        raise ValueError("Poisson ratio must lie in [0, 0.5)")
    return (1.0 - poisson) / (1.0 - 0.5 * poisson) * k_n


def tangential_constants(k_n, poisson, d_n):
    return tangential_stiffness(k_n, poisson), d_n


def _trial(state: PairContactState, g_t_rate, k_t, d_t):
    return k_t * state.g_t + d_t * np.asarray(g_t_rate, float)


def tangential_force(state: PairContactState, g_t_rate, f_cn, mu, k_t, d_t):
    """Coulomb-limited spring-dashpot friction force on *i*."""
    if not state.active:
        return np.zeros(3)
    trial = _trial(state, g_t_rate, k_t, d_t)
    size = np.linalg.norm(trial)
    if size < TANGENT_ZERO:
        return np.zeros(3)
    magnitude = min(mu * np.linalg.norm(f_cn), size)
    return -magnitude * trial / size


def update_tangential_history(state, g_t_rate, dt, normal, f_cn=None, mu=None, k_t=None):
    """Backward-Euler update of the tangential gap, then return mapping.

    The gap is re-projected onto the current tangent plane. When ``f_cn``,
    ``mu`` and ``k_t`` are given and the stored spring force exceeds the
    Coulomb limit, the gap is shortened so that ``|k_t g_t| = mu |f_cn|``.
    """
    n = np.asarray(normal, float)
    g = state.g_t + dt * np.asarray(g_t_rate, float)
    g = g - np.dot(g, n) * n
    if f_cn is not None:
        limit = mu * np.linalg.norm(f_cn)
        stored = k_t * np.linalg.norm(g)
        if stored > limit:
            g = g * (limit / stored)
    state.g_t = g
    return state


def rolling_coefficient(c_cor, youngs, poisson, r_eff, v_impact):
    """Viscous rolling-resistance coefficient from the impact-velocity expansion."""
    if v_impact <= 0:
        raise ValueError("impact velocity must be positive")
    if youngs <= 0:
        raise ValueError("Young's modulus must be positive")
    elastic = youngs * math.sqrt(r_eff / 2.0) / (1.0 - poisson**2)
    return (1.0 - c_cor) / (C1_ROLLING * v_impact**0.2) * elastic**-0.2


def rolling_torque(f_cn, r_eff, d_r, wi, wj, normal, *, dt=None, inertia_eff=None):
    """Rolling-resistance torque on *i* (the torque on *j* is its negative).

    The torque opposes the relative rolling velocity. Passing ``dt`` and an
    effective moment of inertia returns the backward-Euler form
    ``-c dw / (1 + c dt / I_eff)``, which stays stable when ``c dt / I_eff``
    is large and tends to the plain law as dt -> 0. For an isolated pair
    ``I_eff = I_i I_j / (I_i + I_j)``; a particle with ``n`` contacts
    enters as ``I / n`` (see :func:`rolling_inertia`).
    """
    n = np.asarray(normal, float)
    dw = _projector(n) @ (np.asarray(wi, float) - np.asarray(wj, float))
    c = d_r * np.linalg.norm(f_cn) * r_eff
    if dt is not None and inertia_eff is not None:
        c = c / (1.0 + c * dt / inertia_eff)
    return -c * dw


def rolling_inertia(inertia_i, n_i=1, inertia_j=math.inf, n_j=1):
    """Effective inertia ``1 / (n_i / I_i + n_j / I_j)`` used by the stabilised rolling damper.

    Splitting each particle's inertia between its ``n`` contacts keeps the
    summed rolling damping of every particle stable for any time step.
    """
    return 1.0 / (n_i / inertia_i + n_j / inertia_j)


def adhesion_cutoffs(surface_energy, hamaker, r_eff, c_fs0) -> AdhesionCutoffs:
    """Pull-off force magnitude and the plateau / cut-off gaps of the adhesion law."""
    if surface_energy <= 0:
        raise ValueError("adhesion needs a positive surface energy")
    pull_off = 4.0 * math.pi * surface_energy * r_eff
    g0 = math.sqrt(hamaker * r_eff / (6.0 * pull_off))
    return AdhesionCutoffs(pull_off, g0, g0 / math.sqrt(c_fs0))


def adhesive_force_magnitude(gap, cutoffs: AdhesionCutoffs):
    if gap >= cutoffs.g_star:
        return 0.0
    if gap <= cutoffs.g0:
        return cutoffs.pull_off
    # A r_eff / (6 g^2) rewritten through the definition of g0
    return cutoffs.pull_off * (cutoffs.g0 / gap) ** 2


def adhesive_force(gap, normal, cutoffs: AdhesionCutoffs):
    """Attractive force on *i*, directed along ``+normal``."""
    return adhesive_force_magnitude(gap, cutoffs) * np.asarray(normal, float)


def adhesion_gravity_ratio(surface_energy, r_eff, mass, gravity):
    """Pull-off force over particle weight."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    return 4.0 * math.pi * surface_energy * r_eff / (mass * gravity)


def pair_forces(geom, state, vi, vj, wi, wj, *, k_n, d_n, k_t, mu, d_r, r_eff, dt,
                cutoffs=None, tension_cutoff=True, inertia_eff=None):
    """All forces of one pair for one time step, updating ``state`` in place.

    ``state`` may be ``None`` for a separated pair. Returns :class:`PairForces`
    acting on *i*.
    """
    zero = np.zeros(3)
    f_an = adhesive_force(geom.gap, geom.normal, cutoffs) if cutoffs is not None else zero
    if geom.gap > 0:
        return PairForces(zero, zero.copy(), f_an, zero.copy())
    f_cn = normal_force(geom, k_n, d_n, tension_cutoff)
    rate = tangential_gap_rate(vi, vj, wi, wj, geom)
    update_tangential_history(state, rate, dt, geom.normal)
    f_ct = tangential_force(state, rate, f_cn, mu, k_t, d_n)
    update_tangential_history(state, np.zeros(3), 0.0, geom.normal, f_cn, mu, k_t)
    m_r = rolling_torque(f_cn, r_eff, d_r, wi, wj, geom.normal, dt=dt, inertia_eff=inertia_eff)
    return PairForces(f_cn, f_ct, f_an, m_r)
