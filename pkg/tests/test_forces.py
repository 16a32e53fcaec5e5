import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from powderdem import forces as F
from powderdem.core import MaterialParams, effective_pair, sphere_mass
from powderdem.integrator import SimulationState

RHO = 4430.0
R34 = 17e-6
M34 = sphere_mass(R34, RHO)

vec = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3).map(np.array)
small_vec = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3).map(np.array)


def unit(v):
    return v / np.linalg.norm(v)


def damped_restitution(k, m_eff, d):
    # closed-form damped oscillator: speed ratio after one half period
    beta = d / (2.0 * m_eff)
    omega_d = math.sqrt(k / m_eff - beta**2)
    return math.exp(-beta * math.pi / omega_d)


# -- damping and stiffness ----------------------------------------------------


def test_damping_constant_examples():
    m_eff = 0.5 * M34
    assert m_eff == pytest.approx(4.558e-11, rel=1e-3)
    ln = math.log(0.4)
    expected = 2 * abs(ln) * math.sqrt(0.05 * m_eff / (ln**2 + math.pi**2))
    assert F.damping_constant(0.4, 0.05, m_eff) == pytest.approx(expected, rel=1e-14)
    assert F.damping_constant(0.4, 0.05, m_eff) == pytest.approx(8.46e-7, rel=2e-3)
    assert F.damping_constant(1.0, 0.05, m_eff) == 0.0
    with pytest.raises(ValueError):
        F.damping_constant(0.0, 0.05, m_eff)


@given(st.floats(0.05, 1.0), st.floats(1e-3, 10.0), st.floats(1e-12, 1e-9))
def test_damping_reproduces_restitution(c, k, m):
    d = F.damping_constant(c, k, m)
    assert damped_restitution(k, m, d) == pytest.approx(c, rel=1e-9)


def test_min_stiffness_examples():
    dyn, stat = F.min_stiffness(4430, 0.0, 22e-6, 0.1e-3, 0.025, terms=True)
    assert dyn == 0.0
    assert stat == pytest.approx(0.0503, abs=5e-5)
    assert F.min_stiffness(4430, 0.0, 22e-6, 0.0, 0.025) == 0.0
    dyn, stat = F.min_stiffness(4430, 0.1, 22e-6, 0.1e-3, 0.025, terms=True)
    assert dyn == pytest.approx(8 * math.pi * 4430 * 0.01 * 22e-6 / 0.025**2, rel=1e-14)
    assert dyn == pytest.approx(39.2, abs=0.05)
    assert F.min_stiffness(4430, 0.1, 22e-6, 0.1e-3, 0.025) == dyn


def test_tangential_stiffness_examples():
    assert F.tangential_stiffness(0.05, 0.0) == 0.05
    assert F.tangential_stiffness(0.05, 0.342) == pytest.approx(0.658 / 0.829 * 0.05, rel=1e-14)
    assert F.tangential_stiffness(0.05, 0.342) == pytest.approx(0.0397, abs=5e-5)
    k_t, d_t = F.tangential_constants(0.05, 0.342, 3e-7)
    assert d_t == 3e-7
    with pytest.raises(ValueError):
        F.tangential_stiffness(0.05, 0.5)


# -- normal contact -----------------------------------------------------------


def test_normal_force_examples():
    n = np.array([1.0, 0.0, 0.0])
    geom = F.ContactGeometry(n, 1e-6, 0.0, n * R34, -n * R34)
    assert np.all(F.normal_force(geom, 0.05, 1e-7) == 0)
    geom = F.ContactGeometry(n, -0.4e-6, 0.0, n * R34, -n * R34)
    f = F.normal_force(geom, 0.05, 1e-7)
    assert np.linalg.norm(f) == pytest.approx(2e-8, rel=1e-12)
    assert f @ n < 0  # pushes i away from j
    geom = F.ContactGeometry(n, -1e-9, 1.0, n * R34, -n * R34)
    assert np.all(F.normal_force(geom, 0.05, 1e-7) == 0)
    assert F.normal_force(geom, 0.05, 1e-7, tension_cutoff=False) @ n > 0


@given(st.floats(-1e-6, 1e-6), st.floats(-10.0, 10.0), st.floats(1e-3, 1.0), st.floats(0.0, 1e-5), vec)
def test_normal_force_never_tensile(g, rate, k, d, direction):
    assume(np.linalg.norm(direction) > 1e-3)
    n = unit(direction)
    geom = F.ContactGeometry(n, g, rate, n * R34, -n * R34)
    assert F.normal_force(geom, k, d) @ n <= 0.0


def test_contact_geometry_between():
    geom = F.ContactGeometry.between([0, 0, 0], [30e-6, 0, 0], [0.1, 0, 0], [0, 0, 0], 16e-6, 15e-6)
    assert geom.gap == pytest.approx(-1e-6, rel=1e-9)
    assert geom.gap_rate == pytest.approx(-0.1)
    assert np.allclose(geom.offset_i, [15.5e-6, 0, 0], rtol=1e-12)
    assert np.allclose(geom.offset_j, [-14.5e-6, 0, 0], rtol=1e-12)
    assert np.linalg.norm(geom.normal) == pytest.approx(1.0, abs=1e-12)


# -- tangential contact -------------------------------------------------------


def _geom(n=(0.0, 0.0, 1.0), g=-0.2e-6, ri=R34, rj=R34):
    n = unit(np.asarray(n, float))
    return F.ContactGeometry(n, g, 0.0, (ri + 0.5 * g) * n, -(rj + 0.5 * g) * n)


def test_tangential_gap_rate_examples():
    geom = _geom()
    z = np.zeros(3)
    v = np.array([0.1, -0.2, 0.3])
    assert np.allclose(F.tangential_gap_rate(v, v, z, z, geom), 0)
    assert np.allclose(F.tangential_gap_rate(np.array([0, 0, 1.0]), z, z, z, geom), 0)
    w = np.array([0.0, 0.0, 5.0])  # equal spin about the normal
    assert np.allclose(F.tangential_gap_rate(z, z, w, w, geom), 0, atol=1e-20)


@given(vec, vec, small_vec, small_vec, vec)
def test_tangential_gap_rate_orthogonal_to_normal(vi, vj, wi, wj, direction):
    assume(np.linalg.norm(direction) > 1e-3)
    geom = _geom(direction)
    rate = F.tangential_gap_rate(vi, vj, wi, wj, geom)
    # rounding is relative to the input surface speeds, not to the (possibly vanishing) result
    speed = np.linalg.norm(vi - vj) + R34 * (np.linalg.norm(wi) + np.linalg.norm(wj))
    assert abs(rate @ geom.normal) <= 1e-12 * max(np.linalg.norm(rate), speed) + 1e-25


def test_tangential_history_examples():
    n = np.array([0.0, 0.0, 1.0])
    state = F.PairContactState()
    rate = np.array([1e-3, 2e-3, 0.0])
    F.update_tangential_history(state, rate, 1e-6, n)
    assert np.allclose(state.g_t, 1e-6 * rate, rtol=1e-15)
    before = state.g_t.copy()
    F.update_tangential_history(state, np.zeros(3), 1e-6, n)
    assert np.array_equal(state.g_t, before)


def test_tangential_history_reprojected():
    state = F.PairContactState(np.array([1e-9, 0.0, 0.0]))
    n = unit(np.array([1.0, 0.0, 1.0]))
    F.update_tangential_history(state, np.zeros(3), 0.0, n)
    assert abs(state.g_t @ n) < 1e-24


def test_sustained_sliding_converges_to_coulomb_limit():
    # block-on-plane analogue: constant sliding rate; stored spring force saturates at mu |f_CN|
    n = np.array([0.0, 0.0, 1.0])
    f_cn = np.array([0.0, 0.0, -2e-8])
    k_t, mu, d_t, dt = 0.0397, 0.4, 8.46e-7, 3.85e-6
    state = F.PairContactState()
    rate = np.array([1e-3, 0.0, 0.0])
    for _ in range(2000):
        F.update_tangential_history(state, rate, dt, n)
        f = F.tangential_force(state, rate, f_cn, mu, k_t, d_t)
        F.update_tangential_history(state, np.zeros(3), 0.0, n, f_cn, mu, k_t)
    assert k_t * np.linalg.norm(state.g_t) == pytest.approx(mu * 2e-8, rel=1e-12)
    assert np.linalg.norm(f) == pytest.approx(8e-9, rel=1e-12)


def test_tangential_force_examples():
    state = F.PairContactState()
    f_cn = np.array([0.0, 0.0, -2e-8])
    assert np.all(F.tangential_force(state, np.zeros(3), f_cn, 0.4, 0.04, 1e-7) == 0)
    big = F.PairContactState(np.array([1e-3, 0.0, 0.0]))
    f = F.tangential_force(big, np.zeros(3), f_cn, 0.4, 0.04, 1e-7)
    assert np.linalg.norm(f) == pytest.approx(8e-9, rel=1e-12)
    assert f[0] < 0
    small = F.PairContactState(np.array([1e-9, 0.0, 0.0]))
    f = F.tangential_force(small, np.zeros(3), f_cn, 0.4, 0.04, 1e-7)
    assert np.allclose(f, [-4e-11, 0, 0], rtol=1e-12)
    assert np.all(F.tangential_force(F.PairContactState(active=False), np.ones(3), f_cn, 0.4, 0.04, 1e-7) == 0)


@given(small_vec.map(lambda v: v * 1e-9), vec, st.floats(0.0, 1e-7), st.floats(0.0, 1.0), vec)
def test_tangential_force_within_coulomb_bound(g_t, rate, fn, mu, direction):
    assume(np.linalg.norm(direction) > 1e-3)
    n = unit(direction)
    proj = np.eye(3) - np.outer(n, n)
    state = F.PairContactState(proj @ g_t)
    f = F.tangential_force(state, proj @ rate, -fn * n, mu, 0.04, 8e-7)
    assert np.linalg.norm(f) <= mu * fn + 1e-15
    F.update_tangential_history(state, np.zeros(3), 0.0, n, -fn * n, mu, 0.04)
    assert 0.04 * np.linalg.norm(state.g_t) <= mu * fn * (1 + 1e-12) + 1e-30


# -- rolling resistance -------------------------------------------------------


def test_rolling_coefficient_examples():
    e = 110e9 * math.sqrt(8.5e-6 / 2) / (1 - 0.342**2)
    expected = 0.6 / (1.15344 * 0.1**0.2) * e**-0.2
    d_r = F.rolling_coefficient(0.4, 110e9, 0.342, 8.5e-6, 0.1)
    assert d_r == pytest.approx(expected, rel=1e-14)
    assert d_r == pytest.approx(1.7e-2, rel=0.02)
    assert F.rolling_coefficient(1.0, 110e9, 0.342, 8.5e-6, 0.1) == 0.0
    with pytest.raises(ValueError):
        F.rolling_coefficient(0.4, 110e9, 0.342, 8.5e-6, 0.0)


@given(st.floats(1e-3, 10.0), st.floats(1e-3, 10.0))
def test_rolling_coefficient_decreases_with_velocity(v1, v2):
    assume(v1 < v2 * (1 - 1e-9))
    a = F.rolling_coefficient(0.4, 110e9, 0.342, 8.5e-6, v1)
    b = F.rolling_coefficient(0.4, 110e9, 0.342, 8.5e-6, v2)
    assert a > b


def test_rolling_torque_examples():
    n = np.array([0.0, 0.0, 1.0])
    f = np.array([0.0, 0.0, -1e-8])
    w = np.array([1.0, 2.0, 3.0])
    assert np.all(F.rolling_torque(f, 8.5e-6, 0.017, w, w, n) == 0)
    assert np.all(F.rolling_torque(f, 8.5e-6, 0.017, np.array([0, 0, 5.0]), np.zeros(3), n) == 0)
    assert np.all(F.rolling_torque(np.zeros(3), 8.5e-6, 0.017, w, -w, n) == 0)
    m = F.rolling_torque(f, 8.5e-6, 0.017, np.array([2.0, 0, 0]), np.zeros(3), n)
    assert np.allclose(m, [-0.017 * 1e-8 * 8.5e-6 * 2.0, 0, 0], rtol=1e-14)


def test_rolling_torque_implicit_form_limits():
    n = np.array([0.0, 0.0, 1.0])
    f = np.array([0.0, 0.0, -1e-8])
    w = np.array([2.0, 0, 0])
    plain = F.rolling_torque(f, 8.5e-6, 0.017, w, np.zeros(3), n)
    tiny = F.rolling_torque(f, 8.5e-6, 0.017, w, np.zeros(3), n, dt=1e-15, inertia_eff=1e-20)
    assert np.allclose(tiny, plain, rtol=1e-6)
    # with a large c dt / I the torque can at most stop the relative spin within one step
    inertia = 1e-23
    stiff = F.rolling_torque(f, 8.5e-6, 0.017, w, np.zeros(3), n, dt=1e-3, inertia_eff=inertia)
    assert np.linalg.norm(stiff) * 1e-3 / inertia < np.linalg.norm(w)
    assert F.rolling_inertia(2.0, 1, 2.0, 1) == 1.0
    assert F.rolling_inertia(2.0, 2) == 1.0


@given(vec, small_vec, small_vec, st.floats(0.0, 1e-7))
def test_rolling_torque_orthogonal_and_antisymmetric(direction, wi, wj, fn):
    assume(np.linalg.norm(direction) > 1e-3)
    n = unit(direction)
    m_ij = F.rolling_torque(-fn * n, 8.5e-6, 0.017, wi, wj, n)
    m_ji = F.rolling_torque(fn * n, 8.5e-6, 0.017, wj, wi, -n)
    assert np.allclose(m_ij, -m_ji, rtol=1e-12, atol=1e-40)
    torque_scale = 0.017 * fn * 8.5e-6 * np.linalg.norm(wi - wj)  # before projection
    assert abs(m_ij @ n) <= 1e-12 * max(np.linalg.norm(m_ij), torque_scale, 1e-40)
    # opposes relative rolling
    assert m_ij @ (wi - wj) <= 1e-12 * torque_scale * np.linalg.norm(wi - wj) + 1e-40


# -- adhesion -----------------------------------------------------------------


def test_adhesion_cutoffs_examples():
    cut = F.adhesion_cutoffs(0.1e-3, 40e-20, 8.5e-6, 0.01)
    assert cut.pull_off == pytest.approx(4 * math.pi * 0.1e-3 * 8.5e-6, rel=1e-14)
    assert cut.pull_off == pytest.approx(1.068e-8, rel=1e-3)
    assert cut.g0 == pytest.approx(math.sqrt(40e-20 / (24 * math.pi * 0.1e-3)), rel=1e-12)
    assert cut.g0 == pytest.approx(7.3e-9, rel=0.01)
    assert cut.g_star == pytest.approx(7.3e-8, rel=0.01)
    assert cut.g_star / cut.g0 == pytest.approx(10.0, rel=1e-15)
    with pytest.raises(ValueError):
        F.adhesion_cutoffs(0.0, 40e-20, 8.5e-6, 0.01)


def test_adhesive_force_branches():
    cut = F.adhesion_cutoffs(0.1e-3, 40e-20, 8.5e-6, 0.01)
    n = np.array([0.0, 1.0, 0.0])
    assert F.adhesive_force_magnitude(-1e-6, cut) == cut.pull_off
    assert F.adhesive_force_magnitude(cut.g_star, cut) == 0.0
    assert F.adhesive_force_magnitude(1e-6, cut) == 0.0
    assert 40e-20 * 8.5e-6 / (6 * cut.g0**2) == pytest.approx(cut.pull_off, rel=1e-12)
    g = 2 * cut.g0
    assert F.adhesive_force_magnitude(g, cut) == pytest.approx(40e-20 * 8.5e-6 / (6 * g * g), rel=1e-12)
    # just below g*, the force has fallen to c_FS0 |F_S0|
    below = F.adhesive_force_magnitude(cut.g_star * (1 - 1e-12), cut)
    assert below == pytest.approx(0.01 * cut.pull_off, rel=1e-9)
    f = F.adhesive_force(0.0, n, cut)
    assert f @ n == pytest.approx(cut.pull_off)


@given(st.floats(-1e-6, 2e-7), st.floats(-1e-6, 2e-7))
def test_adhesive_force_non_increasing(g1, g2):
    cut = F.adhesion_cutoffs(0.1e-3, 40e-20, 8.5e-6, 0.01)
    lo, hi = sorted((g1, g2))
    assert F.adhesive_force_magnitude(lo, cut) >= F.adhesive_force_magnitude(hi, cut)


def test_adhesion_gravity_ratio_table():
    m_eff, r_eff = effective_pair(M34, M34, R34, R34)
    ratios = [F.adhesion_gravity_ratio(g * 0.1e-3, r_eff, M34, 9.81) for g in (0, 0.25, 1, 4)]
    assert ratios[0] == 0.0
    assert ratios[1] / ratios[2] == pytest.approx(0.25, rel=1e-14)
    assert ratios[3] / ratios[2] == pytest.approx(4.0, rel=1e-14)
    assert ratios[2] == pytest.approx(11.94, abs=0.01)
    assert 11 <= ratios[2] <= 15
    assert ratios[2] == pytest.approx(13, rel=0.15)
    with pytest.raises(ValueError):
        F.adhesion_gravity_ratio(1e-4, r_eff, 0.0, 9.81)


# -- assembled pair forces ----------------------------------------------------


def _pair_args(material, ri, rj, mi, mj):
    m_eff, r_eff = effective_pair(mi, mj, ri, rj)
    k_t = material.tangential_stiffness
    cut = material.adhesion_cutoffs(r_eff) if material.adhesive else None
    return dict(k_n=material.stiffness, d_n=material.damping(m_eff), k_t=k_t, mu=material.friction,
                d_r=material.rolling_coefficient(r_eff), r_eff=r_eff, cutoffs=cut)


geometry = st.tuples(
    st.floats(10e-6, 22e-6), st.floats(10e-6, 22e-6), st.floats(-1e-6, 1.5e-7), vec, vec, vec,
    small_vec, small_vec,
)


@given(geometry)
@settings(max_examples=200)
def test_pair_forces_newton_third_law(args):
    ri, rj, g, direction, vi, vj, wi, wj = args
    assume(np.linalg.norm(direction) > 1e-3)
    mat = MaterialParams()
    n = unit(direction)
    xi = np.zeros(3)
    xj = n * (ri + rj + g)
    mi, mj = sphere_mass(ri, RHO), sphere_mass(rj, RHO)
    kw = _pair_args(mat, ri, rj, mi, mj)
    gij = F.ContactGeometry.between(xi, xj, vi, vj, ri, rj)
    gji = F.ContactGeometry.between(xj, xi, vj, vi, rj, ri)
    fij = F.pair_forces(gij, F.PairContactState(), vi, vj, wi, wj, dt=3.85e-6, **kw)
    fji = F.pair_forces(gji, F.PairContactState(), vj, vi, wj, wi, dt=3.85e-6, **kw)
    for a, b in ((fij.f_cn, fji.f_cn), (fij.f_ct, fji.f_ct), (fij.f_an, fji.f_an), (fij.m_r, fji.m_r)):
        assert np.allclose(a, -b, rtol=1e-12, atol=1e-30)
    nrm = gij.normal
    assert fij.f_cn @ nrm <= 0
    assert np.linalg.norm(fij.f_ct) <= mat.friction * np.linalg.norm(fij.f_cn) + 1e-15
    # orthogonality up to rounding at the scale of the contact force and of the unprojected torque
    scale = max(np.linalg.norm(fij.f_ct), np.linalg.norm(fij.f_cn), 1e-30)
    assert abs(fij.f_ct @ nrm) <= 1e-12 * scale
    torque_scale = kw["d_r"] * np.linalg.norm(fij.f_cn) * kw["r_eff"] * np.linalg.norm(wi - wj)
    assert abs(fij.m_r @ nrm) <= 1e-12 * max(np.linalg.norm(fij.m_r), torque_scale, 1e-40)


def test_pair_forces_separated_pair_adhesion_only():
    mat = MaterialParams()
    kw = _pair_args(mat, R34, R34, M34, M34)
    geom = F.ContactGeometry.between([0, 0, 0], [2 * R34 + 2e-8, 0, 0], np.zeros(3), np.zeros(3), R34, R34)
    out = F.pair_forces(geom, None, np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), dt=1e-6, **kw)
    assert np.all(out.f_cn == 0) and np.all(out.f_ct == 0) and np.all(out.m_r == 0)
    assert out.f_an[0] > 0


@given(geometry, st.booleans())
@settings(max_examples=60, deadline=None)
def test_kernel_matches_reference_pair(args, adhesive):
    """The compiled pair loop reproduces the reference laws for an isolated pair."""
    ri, rj, g, direction, vi, vj, wi, wj = args
    assume(np.linalg.norm(direction) > 1e-3)
    mat = MaterialParams(gravity=0.0, surface_energy=0.1e-3 if adhesive else 0.0)
    n = unit(direction)
    xi = np.zeros(3)
    xj = n * (ri + rj + g)
    state = SimulationState(mat, box=((-1e-4,) * 3, (1e-4,) * 3), max_radius=22e-6)
    state.add_particles([xi, xj], [ri, rj], [vi, vj], [wi, wj])
    dt = 3.85e-6
    force, torque = state.evaluate_forces(dt)
    mi, mj = state.mass
    geom = F.ContactGeometry.between(state.pos[0], state.pos[1], vi, vj, ri, rj)
    # the dashpot switches on at contact, so at a gap within rounding of zero one ulp picks the branch
    assume(abs(geom.gap) > 1e-12 * (ri + rj))
    touching = geom.gap <= 0
    inertia = F.rolling_inertia(0.4 * mi * ri**2, 1, 0.4 * mj * rj**2, 1)
    ref = F.pair_forces(geom, F.PairContactState(), vi, vj, wi, wj, dt=dt, inertia_eff=inertia,
                        **_pair_args(mat, ri, rj, mi, mj))
    t_i = np.cross(geom.offset_i, ref.f_ct) + ref.m_r if touching else np.zeros(3)
    t_j = np.cross(geom.offset_j, -ref.f_ct) - ref.m_r if touching else np.zeros(3)
    tol = dict(rtol=1e-9, atol=1e-22)
    assert np.allclose(force[0], ref.total, **tol)
    assert np.allclose(force[1], -ref.total, **tol)
    assert np.allclose(torque[0], t_i, rtol=1e-9, atol=1e-27)
    assert np.allclose(torque[1], t_j, rtol=1e-9, atol=1e-27)
