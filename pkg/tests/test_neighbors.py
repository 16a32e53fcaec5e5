import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powderdem.core import MaterialParams, PairKey
from powderdem.integrator import SimulationState, step
from powderdem.neighbors import (
    ContactTable,
    brute_force_pairs,
    candidate_pairs,
    rebuild_grid,
    sync_contact_table,
)

G_STAR = MaterialParams().gap_cutoff
LO, HI = np.full(3, -2e-4), np.full(3, 2e-4)
CELL = 44e-6 + G_STAR


def random_cloud(rng, n, half=1.5e-4):
    pos = rng.uniform(-half, half, (n, 3))
    radii = rng.uniform(10e-6, 22e-6, n)
    return pos, radii


def as_set(pairs):
    return {tuple(p) for p in np.asarray(pairs).tolist()}


def test_empty_and_single():
    grid = rebuild_grid(np.zeros((0, 3)), np.zeros(0), LO, HI, CELL, G_STAR)
    assert candidate_pairs(grid).shape == (0, 2)
    assert grid.occupancy() == {}
    grid = rebuild_grid([[0, 0, 0]], [17e-6], LO, HI, CELL, G_STAR)
    assert len(candidate_pairs(grid)) == 0


def test_two_touching_particles_one_pair():
    grid = rebuild_grid([[0, 0, 0], [34e-6, 0, 0]], [17e-6, 17e-6], LO, HI, CELL, G_STAR)
    assert candidate_pairs(grid).tolist() == [[0, 1]]


def test_particles_three_cells_apart_not_paired():
    grid = rebuild_grid([[0, 0, 0], [3.2 * CELL, 0, 0]], [17e-6, 17e-6], LO, HI, CELL, G_STAR)
    assert len(candidate_pairs(grid)) == 0


def test_cell_size_guard():
    with pytest.raises(ValueError):
        rebuild_grid([[0, 0, 0]], [22e-6], LO, HI, 40e-6, G_STAR)


def test_every_particle_in_one_cell(rng):
    pos, radii = random_cloud(rng, 300)
    grid = rebuild_grid(pos, radii, LO, HI, CELL, G_STAR)
    members = sorted(i for cell in grid.occupancy().values() for i in cell)
    assert members == list(range(300))


def test_escaped_particles_flagged():
    pos = [[0, 0, 0], [1.0, 0, 0], [0, 0, -5e-4]]
    grid = rebuild_grid(pos, [17e-6] * 3, LO, HI, CELL, G_STAR)
    assert grid.escaped.tolist() == [False, True, True]
    assert len(candidate_pairs(grid)) == 0


def test_candidates_cover_all_interacting_pairs_1000(rng):
    pos, radii = random_cloud(rng, 1000)
    grid = rebuild_grid(pos, radii, LO, HI, CELL, G_STAR)
    cand = candidate_pairs(grid)
    assert len(as_set(cand)) == len(cand)  # each pair once
    assert np.all(cand[:, 0] < cand[:, 1])
    assert as_set(brute_force_pairs(pos, radii, G_STAR)) <= as_set(cand)


@given(st.integers(0, 2**31 - 1), st.integers(2, 400))
@settings(max_examples=25, deadline=None)
def test_candidates_superset_property(seed, n):
    rng = np.random.default_rng(seed)
    pos, radii = random_cloud(rng, n, half=1.0e-4)
    grid = rebuild_grid(pos, radii, LO, HI, CELL, G_STAR)
    assert as_set(brute_force_pairs(pos, radii, G_STAR)) <= as_set(candidate_pairs(grid))


def test_rebuild_idempotent(rng):
    pos, radii = random_cloud(rng, 500)
    a = candidate_pairs(rebuild_grid(pos, radii, LO, HI, CELL, G_STAR))
    b = candidate_pairs(rebuild_grid(pos, radii, LO, HI, CELL, G_STAR))
    assert np.array_equal(a, b)


def _dense_state(seed, n, gamma=0.1e-3):
    rng = np.random.default_rng(seed)
    mat = MaterialParams(gravity=0.0, surface_energy=gamma)
    state = SimulationState(mat, box=(LO, HI), max_radius=22e-6)
    # jittered lattice with slight overlaps
    side = int(np.ceil(n ** (1 / 3)))
    grid = np.stack(np.meshgrid(*[np.arange(side)] * 3, indexing="ij"), -1).reshape(-1, 3)[:n]
    radii = rng.uniform(14e-6, 18e-6, n)
    pos = (grid - side / 2) * 33e-6 + rng.normal(0, 1.5e-6, (n, 3))
    vel = rng.normal(0, 0.01, (n, 3))
    omg = rng.normal(0, 100.0, (n, 3))
    state.add_particles(pos, radii, vel, omg)
    return state


@pytest.mark.parametrize("seed,n,gamma", [(0, 27, 0.0), (1, 200, 0.1e-3), (2, 500, 0.4e-3)])
def test_grid_forces_equal_brute_force(seed, n, gamma):
    a = _dense_state(seed, n, gamma)
    b = _dense_state(seed, n, gamma)
    fa, ta = a.evaluate_forces(3e-6)
    fb, tb = b.evaluate_forces(3e-6, brute_force=True)
    assert np.array_equal(fa, fb) and np.array_equal(ta, tb)
    assert np.abs(fa).max() > 0


def test_table_tracks_touching_pairs_during_shake():
    state = _dense_state(3, 64)
    rng = np.random.default_rng(4)
    dt = 0.5 * state.critical_dt()
    for k in range(1000):
        if k % 50 == 0:
            # pull the cloud back together and stir it
            state.vel[:] = -0.2 * state.pos / 1e-4 * 0.01 + rng.normal(0, 0.005, state.vel.shape)
        step(state, dt)
        if k % 100 == 99:
            touching = brute_force_pairs(state.pos, state.radius, 0.0)
            expected = {PairKey.of(int(state.ids[i]), int(state.ids[j])) for i, j in touching}
            assert state.table.keys() == expected
    assert len(state.table) > 0


def test_sync_contact_table_lifecycle():
    table = ContactTable(3, slots=4)
    table.resize(np.array([10, 11, 12]))
    sync_contact_table(table, [[0, 1], [1, 2]], [-1e-7, 1e-7])
    assert table.keys() == {PairKey.of(10, 11)}
    live = table.record((10, 11))
    live[:] = [1e-9, 0, 0]
    # persistent contact keeps evolving the same record
    for _ in range(100):
        sync_contact_table(table, [[1, 0]], [-1e-7])
        live = table.record((10, 11))
        live += [1e-9, 0, 0]
    assert table[PairKey.of(10, 11)].g_t[0] == pytest.approx(101e-9)
    # separation removes it; re-contact starts from zero
    sync_contact_table(table, [[0, 1]], [2e-9])
    assert PairKey.of(10, 11) not in table and len(table) == 0
    sync_contact_table(table, [[0, 1]], [-1e-9])
    assert np.all(table[PairKey.of(11, 10)].g_t == 0)
    with pytest.raises(KeyError):
        table[PairKey.of(10, 12)]


def test_table_keep_drops_removed_partners():
    table = ContactTable(3, slots=4)
    table.resize(np.array([0, 1, 2]))
    sync_contact_table(table, [[0, 1], [0, 2]], [-1e-7, -1e-7])
    table.keep(np.array([True, False, True]))
    assert table.keys() == {PairKey.of(0, 2)}
