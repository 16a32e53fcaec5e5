"""Fitting the surface energy to a measured angle of repose."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonMonotoneGridError(ValueError):
    """AOR does not increase strictly with surface energy; ``pairs`` lists the offending neighbours."""

    def __init__(self, pairs):
        self.pairs = pairs
        text = ", ".join(f"({g0:g} mJ/m2, {a0:g} deg) -> ({g1:g} mJ/m2, {a1:g} deg)"
                         for (g0, a0), (g1, a1) in pairs)
        super().__init__(f"AOR must increase strictly with surface energy; offending points: {text}")


@dataclass(frozen=True)
class CalibrationResult:
    """Surface energy (mJ/m^2) at which the interpolated AOR(gamma) meets the target."""

    grid: tuple
    target_aor: float
    gamma: float
    bracket: tuple
    extrapolated: bool
    seeds: tuple = field(default=())

    def report(self) -> dict:
        return {
            "target_aor_deg": self.target_aor,
            "fitted_gamma_mJ_m2": self.gamma,
            "extrapolated": self.extrapolated,
            "bracket": " .. ".join(f"({g:g}, {a:g})" for g, a in self.bracket),
            "grid": "; ".join(f"{g:g}:{a:.4g}" for g, a in self.grid),
        }


def interpolate_gamma(grid, target_aor: float, seeds=()) -> CalibrationResult:
    """Invert a (gamma, AOR) table by piecewise-linear interpolation.

    ``grid`` holds (gamma [mJ/m^2], AOR [deg]) points in any order. Targets
    outside the AOR range are extrapolated from the nearest segment and
    flagged.
    """
    points = sorted((float(g), float(a)) for g, a in grid)
    if len(points) < 2:
        raise ValueError("the gamma grid needs at least two points")
    gammas = [g for g, _ in points]
    if len(set(gammas)) != len(gammas):
        raise ValueError("duplicate gamma values in the grid")
    bad = [(p, q) for p, q in zip(points, points[1:]) if not q[1] > p[1]]
    if bad:
        raise NonMonotoneGridError(bad)
    target = float(target_aor)
    for g, a in points:
        if a == target:
            return CalibrationResult(tuple(points), target, g, ((g, a),), False, tuple(seeds))
    aors = np.array([a for _, a in points])
    k = int(np.searchsorted(aors, target)) - 1
    extrapolated = k < 0 or k >= len(points) - 1
    k = min(max(k, 0), len(points) - 2)
    (g0, a0), (g1, a1) = points[k], points[k + 1]
    gamma = g0 + (target - a0) / (a1 - a0) * (g1 - g0)
    return CalibrationResult(tuple(points), target, gamma, ((g0, a0), (g1, a1)), extrapolated, tuple(seeds))


def simulate_aor_grid(gammas, config, dist, material, seeds=(0,), progress=None):
    """Run the funnel test per surface energy and seed; returns [(gamma, mean AOR)] in gamma order."""
    from .analysis import measure_pile_aor
    from .scenario import run_funnel

    out = []
    for gamma in sorted(gammas):
        mat = material.replace(surface_energy=gamma * 1e-3)
        angles = []
        for seed in seeds:
            result = run_funnel(config, dist, mat, seed=seed)
            angles.append(measure_pile_aor(result.snapshot).angle)
            if progress is not None:
                progress(gamma, seed, angles[-1], result)
        out.append((gamma, float(np.mean(angles))))
    return out


def calibrate_gamma(target_aor, gamma_grid, config=None, dist=None, material=None, seeds=(0,),
                    aor_values=None, progress=None) -> CalibrationResult:
    """Surface energy reproducing ``target_aor``.

    With ``aor_values`` the AOR table is taken as given and no simulation
    runs; otherwise each grid point is simulated (averaged over ``seeds``).
    """
    if aor_values is not None:
        if len(aor_values) != len(gamma_grid):
            raise ValueError("gamma grid and AOR values differ in length")
        return interpolate_gamma(zip(gamma_grid, aor_values), target_aor)
    if config is None or dist is None or material is None:
        raise ValueError("simulated calibration needs a scenario, size distribution and material")
    grid = simulate_aor_grid(gamma_grid, config, dist, material, seeds, progress)
    return interpolate_gamma(grid, target_aor, seeds)
