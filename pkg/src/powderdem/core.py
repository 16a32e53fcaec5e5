"""Domain types, material constants and particle-size sampling.

All quantities are SI. Surface energies are stored in J/m^2; configuration
files use mJ/m^2 and are converted on load (see :mod:`powderdem.config`).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

#: standard-normal quantile of the 90 % percentile
Z90 = float(ndtri(0.9))


@dataclass
class Particle:
    """Kinematic and inertial state of one rigid sphere.

    Orientation is not tracked: for spheres under the implemented force
    laws only the centroid position and the angular velocity are needed.
    """

    id: int
    position: np.ndarray
    velocity: np.ndarray
    angular_velocity: np.ndarray
    radius: float
    mass: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)

    @classmethod
    def from_density(cls, id, position, radius, density, velocity=None, angular_velocity=None):
        zero = np.zeros(3)
        return cls(
            id=id,
            position=position,
            velocity=zero if velocity is None else velocity,
            angular_velocity=zero if angular_velocity is None else angular_velocity,
            radius=radius,
            mass=sphere_mass(radius, density),
        )

    @property
    def inertia(self) -> float:
        return sphere_inertia(self.mass, self.radius)


def sphere_mass(radius, density):
    return 4.0 / 3.0 * math.pi * radius**3 * density


def sphere_inertia(mass, radius):
    """Moment of inertia of a solid sphere about its centroid."""
    return 0.4 * mass * radius**2


@dataclass(frozen=True)
class MaterialParams:
    """Scalar model constants shared by all particle and wall interactions.

    Derived constants (tangential stiffness, damping, rolling coefficient,
    adhesion cut-offs) are computed on access and never cached.
    """

    density: float = 4430.0
    surface_energy: float = 0.1e-3
    hamaker: float = 40e-20
    friction: float = 0.4
    restitution: float = 0.4
    stiffness: float = 0.05
    poisson: float = 0.342
    youngs: float = 110e9
    penetration_bound: float = 0.025
    adhesion_decline: float = 0.01
    reference_velocity: float = 0.1
    gravity: float = 9.81
    #: disable only for the analytic restitution check
    tension_cutoff: bool = True

    def __post_init__(self):
        checks = {
            "density": self.density > 0,
            "surface_energy": self.surface_energy >= 0,
            "hamaker": self.hamaker > 0,
            "friction": self.friction >= 0,
            "restitution": 0 < self.restitution <= 1,
            "stiffness": self.stiffness > 0,
            "poisson": 0 <= self.poisson < 0.5,
            "youngs": self.youngs > 0,
            "penetration_bound": self.penetration_bound > 0,
            "adhesion_decline": 0 < self.adhesion_decline < 1,
            "reference_velocity": self.reference_velocity > 0,
            "gravity": self.gravity >= 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid material parameter(s): {', '.join(bad)}")

    def replace(self, **changes) -> "MaterialParams":
        return dataclasses.replace(self, **changes)

    @property
    def adhesive(self) -> bool:
        return self.surface_energy > 0

    @property
    def tangential_stiffness(self) -> float:
        from .forces import tangential_stiffness

        return tangential_stiffness(self.stiffness, self.poisson)

    def damping(self, m_eff: float) -> float:
        from .forces import damping_constant

        return damping_constant(self.restitution, self.stiffness, m_eff)

    def rolling_coefficient(self, r_eff: float) -> float:
        from .forces import rolling_coefficient

        return rolling_coefficient(
            self.restitution, self.youngs, self.poisson, r_eff, self.reference_velocity
        )

    def adhesion_cutoffs(self, r_eff: float):
        from .forces import adhesion_cutoffs

        return adhesion_cutoffs(self.surface_energy, self.hamaker, r_eff, self.adhesion_decline)

    @property
    def gap_cutoff(self) -> float:
        """Largest surface gap at which any force acts (zero without adhesion).

        The cut-off gap does not depend on the effective radius.
        """
        if not self.adhesive:
            return 0.0
        return self.adhesion_cutoffs(1.0).g_star


@dataclass(frozen=True)
class SizeDistribution:
    """Log-normal diameter distribution truncated to ``[d_min, d_max]``."""

    log_median: float
    log_sigma: float
    d_min: float
    d_max: float

    def __post_init__(self):
        if not self.log_sigma > 0:
            raise ValueError("log_sigma must be positive")
        if not self.d_min < self.median < self.d_max:
            raise ValueError("need d_min < median < d_max")

    @property
    def median(self) -> float:
        return math.exp(self.log_median)

    def quantile(self, q):
        """Quantile of the untruncated log-normal."""
        return np.exp(self.log_median + self.log_sigma * ndtri(q))

    def cdf(self, d):
        from scipy.special import ndtr

        return ndtr((np.log(d) - self.log_median) / self.log_sigma)

    def scaled(self, factor: float) -> "SizeDistribution":
        """Same shape, all diameters multiplied by ``factor``."""
        return SizeDistribution(
            self.log_median + math.log(factor), self.log_sigma, self.d_min * factor, self.d_max * factor
        )

    @property
    def mean_diameter(self) -> float:
        return self.median


def fit_lognormal(d10: float, d50: float, d90: float) -> SizeDistribution:
    """Fit a truncated log-normal to the 10/50/90 % diameter percentiles.

    The median is matched exactly. A single log-normal generally cannot meet
    both tail percentiles, so the log-width is the least-squares compromise
    between them; for two residuals of equal weight this is the mean of the
    two one-sided estimates. The support is truncated to ``[d10, d90]``.
    """
    if not 0 < d10 < d50 < d90:
        raise ValueError(f"percentiles must satisfy 0 < D10 < D50 < D90, got {d10}, {d50}, {d90}")
    mu = math.log(d50)
    sigma = (math.log(d50 / d10) + math.log(d90 / d50)) / (2.0 * Z90)
    return SizeDistribution(mu, sigma, d10, d90)


def sample_diameter(dist: SizeDistribution, rng: np.random.Generator, max_iter: int = 10_000) -> float:
    """Draw one diameter by rejection into ``[d_min, d_max]``."""
    for _ in range(max_iter):
        d = rng.lognormal(dist.log_median, dist.log_sigma)
        if dist.d_min <= d <= dist.d_max:
            return float(d)
    raise RuntimeError("rejection sampling did not terminate")


def sample_diameters(dist: SizeDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` diameters by batched rejection into ``[d_min, d_max]``."""
    out = np.empty(0)
    while out.size < n:
        batch = rng.lognormal(dist.log_median, dist.log_sigma, size=2 * (n - out.size) + 8)
        keep = batch[(batch >= dist.d_min) & (batch <= dist.d_max)]
        out = np.concatenate([out, keep])
    return out[:n]


def effective_pair(mi: float, mj: float, ri: float, rj: float) -> tuple[float, float]:
    """Effective mass and radius of a pair; pass ``math.inf`` for a wall."""

    def harmonic(a, b):
        if math.isinf(b):
            return a
        if math.isinf(a):
            return b
        return a * b / (a + b)

    if min(mi, mj, ri, rj) <= 0:
        raise ValueError("masses and radii must be positive")
    return harmonic(mi, mj), harmonic(ri, rj)


def plasticity_threshold(surface_energy: float, youngs: float) -> float:
    """Radius below which adhesion alone would cause plastic yield (~1e7 gamma/E)."""
    if youngs <= 0:
        raise ValueError("Young's modulus must be positive")
    return 1e7 * surface_energy / youngs


class PairKey(NamedTuple):
    """Order-independent key of an interacting pair.

    Particle-particle keys hold two particle ids with ``a < b``. Wall keys
    hold ``(particle id, -1 - wall id)`` so they can never collide with a
    particle pair.
    """

    a: int
    b: int

    @classmethod
    def of(cls, i: int, j: int) -> "PairKey":
        return cls(min(i, j), max(i, j))

    @classmethod
    def wall(cls, particle_id: int, wall_id: int) -> "PairKey":
        return cls(particle_id, -1 - wall_id)

    @property
    def is_wall(self) -> bool:
        return self.b < 0
