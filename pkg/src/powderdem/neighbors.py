"""Linked-cell broad phase and the per-pair contact history table."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import PairKey
from .forces import PairContactState


@dataclass
class CellGrid:
    """Uniform grid over a fixed box; a particle's neighbours are in the 27 surrounding cells."""

    cell_size: float
    origin: np.ndarray
    dims: np.ndarray
    cell_of: np.ndarray
    keys: np.ndarray
    order: np.ndarray
    positions: np.ndarray
    radii: np.ndarray
    reach: float

    @property
    def escaped(self) -> np.ndarray:
        return self.cell_of < 0

    def occupancy(self) -> dict[int, list[int]]:
        """Map cell index -> particle indices (non-empty cells only)."""
        out: dict[int, list[int]] = {}
        for c, i in zip(self.keys.tolist(), self.order.tolist()):
            if c >= 0:
                out.setdefault(c, []).append(i)
        return out


def grid_dims(lo, hi, cell_size):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    return np.maximum(1, np.ceil((hi - lo) / cell_size)).astype(np.int64)


def rebuild_grid(positions, radii, lo, hi, cell_size, reach=0.0, escape_z=-math.inf) -> CellGrid:
    """Bin particles into cells of edge ``cell_size`` over the box ``[lo, hi]``.

    ``cell_size`` must be at least the largest diameter plus ``reach`` (the
    largest force range beyond contact). Particles outside the box are
    reported through :attr:`CellGrid.escaped` instead of raising.
    """
    positions = np.ascontiguousarray(positions, dtype=float).reshape(-1, 3)
    radii = np.ascontiguousarray(radii, dtype=float)
    if radii.size and cell_size < 2.0 * radii.max() + reach:
        raise ValueError("cell size smaller than the interaction range")
    lo = np.asarray(lo, float)
    dims = grid_dims(lo, hi, cell_size)
    cell = kernels.assign_cells(positions, len(positions), lo, float(cell_size), dims, float(escape_z))
    keys, order = kernels.bin_cells(cell)
    return CellGrid(float(cell_size), lo, dims, cell, keys, order, positions, radii, float(reach))


def candidate_pairs(grid: CellGrid) -> np.ndarray:
    """Index pairs ``(i, j)``, ``i < j``, that may interact; sorted, each pair once."""
    ncell = int(grid.dims.prod())
    head = np.full(ncell, -1, np.int64)
    counts = np.zeros(ncell, np.int64)
    args = (grid.positions, grid.radii, grid.cell_of, grid.keys, grid.order, grid.dims, grid.reach, head, counts)
    buf = np.empty((2, 8 * len(grid.radii) + 64), np.int64)
    count = kernels.grid_pairs(*args, buf)
    if count > buf.shape[1]:
        buf = np.empty((2, count), np.int64)
        kernels.grid_pairs(*args, buf)
    return buf[:, :count].T.copy()


def brute_force_pairs(positions, radii, reach=0.0) -> np.ndarray:
    """All index pairs with surface gap below ``reach`` (or touching), by O(n^2) search."""
    positions = np.asarray(positions, float)
    radii = np.asarray(radii, float)
    if len(positions) < 2:
        return np.empty((0, 2), np.int64)
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    gap = d - radii[:, None] - radii[None, :]
    i, j = np.nonzero(np.triu((gap < reach) | (gap <= 0.0), k=1))
    return np.column_stack([i, j]).astype(np.int64)


class ContactTable:
    """Tangential histories of touching pairs, viewed as ``PairKey -> PairContactState``.

    Storage is slot based so the compiled kernels can update it in place:
    each particle owns ``slots`` history records for partners with a larger
    array index, plus one record per wall. The mapping interface returns
    copies; mutate through :func:`sync_contact_table` or the kernels.
    """

    def __init__(self, n=0, slots=32, n_walls=0):
        self.slots = slots
        self.hist_id = np.full((n, slots), -1, np.int64)
        self.hist_gt = np.zeros((n, slots, 3))
        self.hist_seen = np.zeros((n, slots), np.uint8)
        self.wall_gt = np.zeros((n, n_walls, 3))
        self.wall_active = np.zeros((n, n_walls), np.bool_)
        self.ids = np.zeros(n, np.int64)

    def resize(self, ids):
        """Append empty records so the table matches the particle id array."""
        extra = len(ids) - len(self.hist_id)
        if extra > 0:
            w = self.wall_gt.shape[1]
            self.hist_id = np.concatenate([self.hist_id, np.full((extra, self.slots), -1, np.int64)])
            self.hist_gt = np.concatenate([self.hist_gt, np.zeros((extra, self.slots, 3))])
            self.hist_seen = np.concatenate([self.hist_seen, np.zeros((extra, self.slots), np.uint8)])
            self.wall_gt = np.concatenate([self.wall_gt, np.zeros((extra, w, 3))])
            self.wall_active = np.concatenate([self.wall_active, np.zeros((extra, w), np.bool_)])
        self.ids = np.asarray(ids, np.int64)

    def keep(self, mask):
        """Drop the records of removed particles (``mask`` selects survivors)."""
        self.hist_id = self.hist_id[mask]
        self.hist_gt = self.hist_gt[mask]
        self.hist_seen = self.hist_seen[mask]
        self.wall_gt = self.wall_gt[mask]
        self.wall_active = self.wall_active[mask]
        self.ids = self.ids[mask]
        alive = np.isin(self.hist_id, self.ids)
        self.hist_id[~alive] = -1
        self.hist_gt[~alive] = 0.0

    def _items(self):
        for i, k in zip(*np.nonzero(self.hist_id >= 0)):
            yield PairKey.of(int(self.ids[i]), int(self.hist_id[i, k])), self.hist_gt[i, k]
        for i, w in zip(*np.nonzero(self.wall_active)):
            yield PairKey.wall(int(self.ids[i]), int(w)), self.wall_gt[i, w]

    def keys(self):
        return {key for key, _ in self._items()}

    def __len__(self):
        return int((self.hist_id >= 0).sum() + self.wall_active.sum())

    def __contains__(self, key):
        return key in self.keys()

    def __getitem__(self, key) -> PairContactState:
        for k, gt in self._items():
            if k == key:
                return PairContactState(gt.copy(), True)
        raise KeyError(key)

    def record(self, key):
        """Return the live (3,) history vector of ``key``, or None."""
        key = PairKey(*key)
        index = {int(v): i for i, v in enumerate(self.ids)}
        if key.is_wall:
            i = index[key.a]
            w = -1 - key.b
            return self.wall_gt[i, w] if self.wall_active[i, w] else None
        ia, ib = index[key.a], index[key.b]
        owner, partner = (ia, key.b) if ia < ib else (ib, key.a)
        hit = np.nonzero(self.hist_id[owner] == partner)[0]
        return self.hist_gt[owner, hit[0]] if hit.size else None


def sync_contact_table(table: ContactTable, pairs, gaps) -> ContactTable:
    """Create zeroed histories on first touch and delete them on separation.

    ``pairs`` are index pairs into ``table.ids``; ``gaps`` the current normal
    gaps. Pairs absent from ``pairs`` are treated as separated.
    """
    pairs = np.asarray(pairs, np.int64).reshape(-1, 2)
    table.hist_seen[:] = 0
    for (a, b), g in zip(pairs, gaps):
        if g > 0:
            continue
        i, j = (a, b) if a < b else (b, a)
        k = kernels._slot(table.hist_id, i, table.ids[j])
        if k < 0:
            raise RuntimeError("contact history slots exhausted")
        if table.hist_id[i, k] != table.ids[j]:
            table.hist_id[i, k] = table.ids[j]
            table.hist_gt[i, k] = 0.0
        table.hist_seen[i, k] = 1
    kernels.sweep_history(len(table.ids), table.hist_id, table.hist_gt, table.hist_seen)
    return table
