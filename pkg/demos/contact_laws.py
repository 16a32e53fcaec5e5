"""Contact-law walkthrough for 34 um Ti-6Al-4V particles.

Runs three tiny simulations and prints what they show:

1. a head-on collision, whose rebound ratio equals the coefficient of restitution;
2. the van der Waals pull-off curve and the force needed to separate two particles;
3. how cohesion compares with gravity across surface energies.

Run with ``python demos/contact_laws.py``; it finishes in a few seconds.
"""
import math


from powderdem.core import MaterialParams, effective_pair, sphere_mass
from powderdem.forces import adhesion_gravity_ratio, adhesive_force_magnitude
from powderdem.integrator import SimulationState, run, step

R = 17e-6
BOX = ((-1e-3,) * 3, (1e-3,) * 3)


def collision(restitution):
    mat = MaterialParams(gravity=0.0, surface_energy=0.0, friction=0.0, restitution=restitution,
                         tension_cutoff=False)
    state = SimulationState(mat, box=BOX)
    state.add_particles([[-R - 1e-7, 0, 0], [R + 1e-7, 0, 0]], [R, R], [[0.05, 0, 0], [-0.05, 0, 0]])
    dt = state.critical_dt() / 200

    def gap():
        return state.pos[1, 0] - state.pos[0, 0] - 2 * R

    while gap() > 0:
        step(state, dt)
    t_hit = state.t
    while gap() <= 0:
        step(state, dt)
    return (state.vel[1, 0] - state.vel[0, 0]) / 0.1, state.t - t_hit


print("1. Binary collisions (no friction, no cohesion)")
for c in (0.2, 0.4, 0.8):
    ratio, duration = collision(c)
    print(f"   c_COR = {c:.1f}: rebound / approach speed = {ratio:.4f}, contact lasted {duration * 1e6:.1f} us")

print("\n2. Adhesion between two 34 um particles, gamma = 0.1 mJ/m^2")
mat = MaterialParams(surface_energy=0.1e-3)
m = sphere_mass(R, mat.density)
_, r_eff = effective_pair(m, m, R, R)
cut = mat.adhesion_cutoffs(r_eff)
print(f"   pull-off force F_S0 = {cut.pull_off:.3e} N, plateau up to g0 = {cut.g0 * 1e9:.2f} nm, "
      f"cut-off g* = {cut.g_star * 1e9:.1f} nm")
for g in (-1e-9, 0.0, 0.5 * cut.g0, cut.g0, 2 * cut.g0, 5 * cut.g0, cut.g_star, 1.01 * cut.g_star):
    f = adhesive_force_magnitude(g, cut)
    print(f"   gap {g * 1e9:7.2f} nm -> attraction {f / cut.pull_off:5.3f} F_S0")

# pull the pair apart slowly and record the load at which it lets go
state = SimulationState(mat.replace(gravity=0.0), box=BOX)
state.add_particles([[-R, 0, 0], [R, 0, 0]], [R, R])
dt = state.critical_dt()
run(state, 5e-3, dt)
t0 = state.t
while True:
    load = cut.pull_off * min(1.2, (state.t - t0) / 0.2)
    state.ext[0, 0], state.ext[1, 0] = -load, load
    step(state, dt)
    if state.pos[1, 0] - state.pos[0, 0] - 2 * R > cut.g_star:
        break
print(f"   slowly pulled apart: the pair separated at {load:.4e} N ({load / cut.pull_off:.3f} F_S0)")

print("\n3. Cohesion relative to weight for a 34 um particle pair")
for gamma in (0.0, 0.025, 0.1, 0.4):
    ratio = adhesion_gravity_ratio(gamma * 1e-3, r_eff, m, 9.81)
    print(f"   gamma = {gamma:5.3f} mJ/m^2: F_gamma / F_G = {ratio:6.2f}")
half = 0.5 * R
m_half = sphere_mass(half, mat.density)
ratio_half = adhesion_gravity_ratio(0.1e-3, effective_pair(m_half, m_half, half, half)[1], m_half, 9.81)
print(f"   halving the diameter at gamma = 0.1 gives {ratio_half:.2f}: the same as quadrupling gamma,")
print("   because the ratio scales as gamma / (rho g r^2).")
assert math.isclose(ratio_half, adhesion_gravity_ratio(0.4e-3, r_eff, m, 9.81), rel_tol=1e-12)
