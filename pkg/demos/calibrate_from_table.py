"""Fit the surface energy to a measured angle of repose from a table of simulated piles.

Simulating one pile per surface energy is the expensive part of a
calibration. Once AOR(gamma) is known on a grid, the fit is a piecewise-linear
inversion. This script feeds a full-size funnel series into that inversion. It
then shows how a measured angle maps to gamma, and what happens outside the
simulated range and on an inconsistent grid.

The same inversion is available from the command line::

    powderdem calibrate --gamma-grid 0,0.01,0.02,0.04,0.06,0.08,0.1,0.2,0.4 \\
        --aor-values 11,24,29,33,34,37,41,57,63 --target-aor 41
"""
from powderdem.calibration import NonMonotoneGridError, calibrate_gamma

gammas = [0.0, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.2, 0.4]  # mJ/m^2
angles = [11, 24, 29, 33, 34, 37, 41, 57, 63]  # degrees

print(" gamma [mJ/m^2]   AOR [deg]")
for g, a in zip(gammas, angles):
    print(f"    {g:6.2f}         {a:3d}")

print("\nmeasured AOR -> fitted gamma")
for target in (11, 31, 41, 50, 70):
    fit = calibrate_gamma(target, gammas, aor_values=angles)
    note = "  (extrapolated beyond the simulated range)" if fit.extrapolated else ""
    bracket = " .. ".join(f"({g:g}, {a:g})" for g, a in fit.bracket)
    print(f"   {target:3d} deg -> {fit.gamma:.4f} mJ/m^2 from {bracket}{note}")

print("\nA grid whose AOR does not rise with gamma cannot be inverted:")
try:
    calibrate_gamma(30, [0.0, 0.02, 0.04], aor_values=[11, 29, 27])
except NonMonotoneGridError as exc:
    print("  ", exc)
