"""Pour two small piles, one without and one with cohesion, and compare their slopes.

A 0.5 mm cube sits under a 0.4 mm funnel throat. Powder with the reference
size distribution (D10/D50/D90 = 20/34/44 um) is fed until the pile covers
the cube and stops growing. The script then prints a height profile of each
pile and its angle of repose.

The cube is only about 15 particle diameters wide, so the angles are rough.
The desk preset (1 mm cube) used by the acceptance tests takes about ten
minutes per pile on one core; this demo takes a few minutes in total.

Run with ``python demos/small_piles.py``.
"""
import time

from powderdem.analysis import measure_pile_aor, project_pile
from powderdem.core import MaterialParams, fit_lognormal
from powderdem.scenario import FunnelConfig, run_funnel

psd = fit_lognormal(20e-6, 34e-6, 44e-6)
config = FunnelConfig.preset("desk").replace(cube_side=0.5e-3, funnel_height=0.3e-3, drop_gap=0.2e-3,
                                            t_max=0.5)


def sketch(profile, width=48):
    """Crude text rendering of one projected height profile."""
    x, h = profile.x, profile.height - profile.height.min()
    top = max(h.max(), 1e-12)
    rows = []
    for level in (0.875, 0.625, 0.375, 0.125):
        rows.append("".join("#" if v >= level * top else " " for v in h))
    return "\n".join("      |" + r[:width] + "|" for r in rows)


for gamma in (0.0, 0.1):
    started = time.perf_counter()
    result = run_funnel(config, psd, MaterialParams(surface_energy=gamma * 1e-3), seed=1)
    pile = result.snapshot
    aor = measure_pile_aor(pile)
    print(f"gamma = {gamma} mJ/m^2: {len(pile)} particles on the scene, stopped by '{result.reason}' "
          f"after {result.time:.3f} s of pouring ({time.perf_counter() - started:.0f} s wall time)")
    print(sketch(project_pile(pile, axis=0)))
    print(f"      angle of repose {aor.angle:.1f} deg "
          f"(x: {aor.per_axis[0].angle:.1f}, y: {aor.per_axis[1].angle:.1f})\n")
