"""Compiled inner loops: cell grid, candidate pairs, force accumulation, stepping.

Everything here works on flat numpy arrays and scalar arithmetic so that
numba can run it without per-pair allocations. Forces are accumulated in
the fixed order of the (sorted) pair list, which makes runs bit-reproducible.

Contact history layout
----------------------
``hist_id[i, k]``   id of the partner stored in slot k of particle i (-1: empty)
``hist_gt[i, k]``   tangential gap vector of that pair
``hist_seen[i, k]`` set when the pair was touching during the current evaluation
A pair (i, j) with i < j (array index order) keeps its history in i's slots.
Wall histories live in ``wall_gt[i, w]`` / ``wall_active[i, w]``.
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

LawConstants = namedtuple(
    "LawConstants",
    [
        "k_n",
        "k_t",
        "damping_factor",  # d_N = damping_factor * sqrt(k_n * m_eff)
        "mu",
        "rolling_factor",  # d_R = rolling_factor * r_eff ** -0.1
        "gamma",
        "hamaker",
        "g0",
        "g_star",
        "tension_cutoff",  # 1.0 on, 0.0 off
        "adhesive",  # 1.0 if gamma > 0
    ],
)

TANGENT_ZERO = 1e-18


def law_constants(material) -> LawConstants:
    """Pack a :class:`~powderdem.core.MaterialParams` for the kernels."""
    from .forces import C1_ROLLING

    ln_c = math.log(material.restitution)
    damping_factor = 2.0 * abs(ln_c) / math.sqrt(ln_c**2 + math.pi**2)
    elastic = material.youngs / (1.0 - material.poisson**2) / math.sqrt(2.0)
    rolling_factor = (1.0 - material.restitution) / (
        C1_ROLLING * material.reference_velocity**0.2
    ) * elastic**-0.2
    if material.adhesive:
        cut = material.adhesion_cutoffs(1.0)
        g0, g_star = cut.g0, cut.g_star
    else:
        g0 = g_star = 0.0
    return LawConstants(
        float(material.stiffness),
        float(material.tangential_stiffness),
        float(damping_factor),
        float(material.friction),
        float(rolling_factor),
        float(material.surface_energy),
        float(material.hamaker),
        float(g0),
        float(g_star),
        1.0 if material.tension_cutoff else 0.0,
        1.0 if material.adhesive else 0.0,
    )


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


@njit(cache=True)
def closest_point_on_triangle(px, py, pz, t):
    """Closest point to p on triangle ``t`` (9 floats: a, b, c). Returns (x, y, z, region).

    Region codes: 0 face, 1-3 vertex a/b/c, 4 edge ab, 5 edge ac, 6 edge bc.
    """
    ax, ay, az = t[0], t[1], t[2]
    bx, by, bz = t[3], t[4], t[5]
    cx, cy, cz = t[6], t[7], t[8]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, 1
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, 2
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz, 4
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, 3
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz, 5
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz), 6
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        ax + abx * v + acx * w,
        ay + aby * v + acy * w,
        az + abz * v + acz * w,
        0,
    )


# ---------------------------------------------------------------------------
# neighbour search
# ---------------------------------------------------------------------------


@njit(cache=True)
def assign_cells(pos, n, lo, cell_size, dims, escape_z):
    """Cell index per particle (-1 when outside the grid box or below ``escape_z``)."""
    cell = np.empty(n, np.int64)
    for i in range(n):
        if pos[i, 2] < escape_z:
            cell[i] = -1
            continue
        cx = int(math.floor((pos[i, 0] - lo[0]) / cell_size))
        cy = int(math.floor((pos[i, 1] - lo[1]) / cell_size))
        cz = int(math.floor((pos[i, 2] - lo[2]) / cell_size))
        if cx < 0 or cy < 0 or cz < 0 or cx >= dims[0] or cy >= dims[1] or cz >= dims[2]:
            cell[i] = -1
        else:
            cell[i] = (cz * dims[1] + cy) * dims[0] + cx
    return cell


@njit(cache=True)
def bin_cells(cell):
    """Sort particles by cell: returns (keys, order) with ``keys = cell[order]`` ascending.

    Stable LSD radix sort on 11-bit digits, so particles of one cell appear
    in ascending index order and the cost does not depend on the number of
    grid cells. Escaped particles (cell -1) come first and are skipped by
    callers.
    """
    n = cell.size
    order = np.arange(n)
    keys = cell + 1  # escaped -> 0
    top = 0
    for i in range(n):
        if keys[i] > top:
            top = keys[i]
    tmp_o = np.empty(n, np.int64)
    tmp_k = np.empty(n, np.int64)
    count = np.empty(2049, np.int64)
    shift = 0
    while (top >> shift) > 0:
        count[:] = 0
        for i in range(n):
            count[((keys[i] >> shift) & 2047) + 1] += 1
        for d in range(2048):
            count[d + 1] += count[d]
        for i in range(n):
            d = (keys[i] >> shift) & 2047
            tmp_o[count[d]] = order[i]
            tmp_k[count[d]] = keys[i]
            count[d] += 1
        order, tmp_o = tmp_o, order
        keys, tmp_k = tmp_k, keys
        shift += 11
    return keys - 1, order


@njit(cache=True)
def grid_pairs(pos, radius, cell, keys, order, dims, reach, head, count_ws, buf):
    """Pairs (i < j) in the same or adjacent cells whose surface gap is below ``reach``.

    ``head`` and ``count_ws`` are per-cell workspaces of length ``prod(dims)``
    that must be all -1 / 0 on entry; they are filled for the occupied cells
    only and restored before returning, so the cost is independent of the
    number of grid cells. Pairs are written to ``buf`` (shape (2, P)), sorted
    by i, then j; the return value is the number of pairs, and when it
    exceeds P the call must be repeated with a larger buffer.
    """
    n = cell.size
    m = keys.size
    for k in range(m):
        c = keys[k]
        if c < 0:
            continue
        if head[c] < 0:
            head[c] = k
        count_ws[c] += 1
    size = buf.shape[1]
    count = 0
    nx, ny, nz = dims[0], dims[1], dims[2]
    for i in range(n):
        c = cell[i]
        if c < 0:
            continue
        cx = c % nx
        cy = (c // nx) % ny
        cz = c // (nx * ny)
        z0, z1 = max(cz - 1, 0), min(cz + 1, nz - 1)
        y0, y1 = max(cy - 1, 0), min(cy + 1, ny - 1)
        x0, x1 = max(cx - 1, 0), min(cx + 1, nx - 1)
        first = count
        for z in range(z0, z1 + 1):
            for y in range(y0, y1 + 1):
                for x in range(x0, x1 + 1):
                    nc = (z * ny + y) * nx + x
                    h = head[nc]
                    if h < 0:
                        continue
                    for k in range(h, h + count_ws[nc]):
                        j = order[k]
                        if j <= i:
                            continue
                        ddx = pos[j, 0] - pos[i, 0]
                        ddy = pos[j, 1] - pos[i, 1]
                        ddz = pos[j, 2] - pos[i, 2]
                        lim = radius[i] + radius[j] + reach
                        if ddx * ddx + ddy * ddy + ddz * ddz > lim * lim:
                            continue
                        if count < size:
                            buf[0, count] = i
                            buf[1, count] = j
                        count += 1
        # insertion sort of this particle's partners
        if count <= size:
            for a in range(first + 1, count):
                v = buf[1, a]
                b = a - 1
                while b >= first and buf[1, b] > v:
                    buf[1, b + 1] = buf[1, b]
                    b -= 1
                buf[1, b + 1] = v
    for k in range(m):
        c = keys[k]
        if c >= 0:
            head[c] = -1
            count_ws[c] = 0
    return count


@njit(cache=True)
def all_pairs(n, active):
    """Every pair (i < j) of active particles, sorted; the brute-force reference."""
    m = 0
    for i in range(n):
        if active[i]:
            m += 1
    total = m * (m - 1) // 2
    pi = np.empty(total, np.int64)
    pj = np.empty(total, np.int64)
    k = 0
    for i in range(n):
        if not active[i]:
            continue
        for j in range(i + 1, n):
            if active[j]:
                pi[k] = i
                pj[k] = j
                k += 1
    return pi, pj


# ---------------------------------------------------------------------------
# force laws
# ---------------------------------------------------------------------------


@njit(cache=True)
def _slot(hist_id, i, partner):
    free = -1
    for k in range(hist_id.shape[1]):
        if hist_id[i, k] == partner:
            return k
        if free < 0 and hist_id[i, k] < 0:
            free = k
    return free


@njit(cache=True)
def _contact(
    law, dt, g, nx, ny, nz, ri, rj, m_eff, r_eff, inv_inertia,
    vrx, vry, vrz, wix, wiy, wiz, wjx, wjy, wjz, gt, out,
):
    """Normal, friction and rolling terms of one touching pair.

    ``vr`` is v_i - v_j, ``gt`` the (3,) history vector updated in place,
    ``out`` receives [force on i (3), torque on i (3), torque on j (3)].
    ``inv_inertia`` is ``n_i / I_i + n_j / I_j`` with ``n`` the number of
    contacts of each particle (``n_j / I_j = 0`` for a wall); it bounds the
    rolling damper so that the summed damping of every particle stays
    stable. Returns the normal force magnitude.
    """
    d_n = law.damping_factor * math.sqrt(law.k_n * m_eff)
    vn = vrx * nx + vry * ny + vrz * nz
    fn = law.k_n * g - d_n * vn
    if law.tension_cutoff > 0.5 and fn > 0.0:
        fn = 0.0
    fcn_abs = abs(fn)
    oi = ri + 0.5 * g
    oj = -(rj + 0.5 * g)
    # tangential gap rate
    tx = vrx - vn * nx + oi * (wiy * nz - wiz * ny) - oj * (wjy * nz - wjz * ny)
    ty = vry - vn * ny + oi * (wiz * nx - wix * nz) - oj * (wjz * nx - wjx * nz)
    tz = vrz - vn * nz + oi * (wix * ny - wiy * nx) - oj * (wjx * ny - wjy * nx)
    # backward Euler + re-projection
    gx = gt[0] + dt * tx
    gy = gt[1] + dt * ty
    gz = gt[2] + dt * tz
    gn = gx * nx + gy * ny + gz * nz
    gx -= gn * nx
    gy -= gn * ny
    gz -= gn * nz
    d_t = d_n
    trx = law.k_t * gx + d_t * tx
    try_ = law.k_t * gy + d_t * ty
    trz = law.k_t * gz + d_t * tz
    tnorm = math.sqrt(trx * trx + try_ * try_ + trz * trz)
    limit = law.mu * fcn_abs
    if tnorm < TANGENT_ZERO:
        fx = fy = fz = 0.0
    elif tnorm > limit:
        s = -limit / tnorm
        fx, fy, fz = s * trx, s * try_, s * trz
    else:
        fx, fy, fz = -trx, -try_, -trz
    stored = law.k_t * math.sqrt(gx * gx + gy * gy + gz * gz)
    if stored > limit:
        s = limit / stored
        gx *= s
        gy *= s
        gz *= s
    gt[0] = gx
    gt[1] = gy
    gt[2] = gz
    # n x f_ct
    cx = ny * fz - nz * fy
    cy = nz * fx - nx * fz
    cz = nx * fy - ny * fx
    # viscous rolling resistance, backward-Euler form
    dwx = wix - wjx
    dwy = wiy - wjy
    dwz = wiz - wjz
    dwn = dwx * nx + dwy * ny + dwz * nz
    dwx -= dwn * nx
    dwy -= dwn * ny
    dwz -= dwn * nz
    c = law.rolling_factor * r_eff**-0.1 * fcn_abs * r_eff
    c = c / (1.0 + c * dt * inv_inertia)
    out[0] = fn * nx + fx
    out[1] = fn * ny + fy
    out[2] = fn * nz + fz
    out[3] = oi * cx - c * dwx
    out[4] = oi * cy - c * dwy
    out[5] = oi * cz - c * dwz
    out[6] = -oj * cx + c * dwx
    out[7] = -oj * cy + c * dwy
    out[8] = -oj * cz + c * dwz
    return fcn_abs


@njit(cache=True)
def _adhesion(law, g, r_eff):
    if law.adhesive < 0.5 or g >= law.g_star:
        return 0.0
    if g <= law.g0:
        return 4.0 * math.pi * law.gamma * r_eff
    return law.hamaker * r_eff / (6.0 * g * g)


@njit(cache=True)
def count_contacts(n, pi, pj, pos, radius, wall_active):
    """Touching particle pairs per particle plus the wall contacts of the previous step."""
    ncont = np.zeros(n, np.int64)
    for p in range(pi.size):
        i = pi[p]
        j = pj[p]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        lim = radius[i] + radius[j]
        if dx * dx + dy * dy + dz * dz <= lim * lim:
            ncont[i] += 1
            ncont[j] += 1
    for i in range(n):
        for w in range(wall_active.shape[1]):
            if wall_active[i, w]:
                ncont[i] += 1
    return ncont


@njit(cache=True)
def pair_forces(pi, pj, pos, vel, omega, radius, mass, ids, hist_id, hist_gt, hist_seen,
                law, dt, ncont, force, torque):
    """Accumulate all particle-particle interactions; returns the deepest gap (<= 0 or +inf)."""
    out = np.empty(9)
    gt = np.empty(3)
    deepest = np.inf
    reach = law.g_star if law.adhesive > 0.5 else 0.0
    for p in range(pi.size):
        i = pi[p]
        j = pj[p]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        ri = radius[i]
        rj = radius[j]
        g = dist - ri - rj
        if g > 0.0 and g >= reach:
            continue
        nx = dx / dist
        ny = dy / dist
        nz = dz / dist
        r_eff = ri * rj / (ri + rj)
        fa = _adhesion(law, g, r_eff)
        fx = fa * nx
        fy = fa * ny
        fz = fa * nz
        if g <= 0.0:
            if g < deepest:
                deepest = g
            mi = mass[i]
            mj = mass[j]
            m_eff = mi * mj / (mi + mj)
            ii = 0.4 * mi * ri * ri
            ij = 0.4 * mj * rj * rj
            k = _slot(hist_id, i, ids[j])
            if k < 0:
                raise RuntimeError("contact history slots exhausted")
            if hist_id[i, k] != ids[j]:
                hist_id[i, k] = ids[j]
                hist_gt[i, k, 0] = 0.0
                hist_gt[i, k, 1] = 0.0
                hist_gt[i, k, 2] = 0.0
            hist_seen[i, k] = 1
            gt[0] = hist_gt[i, k, 0]
            gt[1] = hist_gt[i, k, 1]
            gt[2] = hist_gt[i, k, 2]
            _contact(
                law, dt, g, nx, ny, nz, ri, rj, m_eff, r_eff, ncont[i] / ii + ncont[j] / ij,
                vel[i, 0] - vel[j, 0], vel[i, 1] - vel[j, 1], vel[i, 2] - vel[j, 2],
                omega[i, 0], omega[i, 1], omega[i, 2],
                omega[j, 0], omega[j, 1], omega[j, 2], gt, out,
            )
            hist_gt[i, k, 0] = gt[0]
            hist_gt[i, k, 1] = gt[1]
            hist_gt[i, k, 2] = gt[2]
            fx += out[0]
            fy += out[1]
            fz += out[2]
            torque[i, 0] += out[3]
            torque[i, 1] += out[4]
            torque[i, 2] += out[5]
            torque[j, 0] += out[6]
            torque[j, 1] += out[7]
            torque[j, 2] += out[8]
        force[i, 0] += fx
        force[i, 1] += fy
        force[i, 2] += fz
        force[j, 0] -= fx
        force[j, 1] -= fy
        force[j, 2] -= fz
    return deepest


@njit(cache=True)
def sweep_history(n, hist_id, hist_gt, hist_seen):
    """Drop histories of pairs that were not touching in the last evaluation."""
    for i in range(n):
        for k in range(hist_id.shape[1]):
            if hist_id[i, k] >= 0 and hist_seen[i, k] == 0:
                hist_id[i, k] = -1
                hist_gt[i, k, 0] = 0.0
                hist_gt[i, k, 1] = 0.0
                hist_gt[i, k, 2] = 0.0
            hist_seen[i, k] = 0


@njit(cache=True)
def wall_contact_point(px, py, pz, tris, tri_lo, tri_hi, t0, t1, margin):
    """Closest point over triangles ``t0:t1`` within ``margin`` of p (local frame).

    Returns (distance, qx, qy, qz, triangle); triangle is -1 when none is in range.
    """
    best = np.inf
    bx = by = bz = 0.0
    bt = -1
    for t in range(t0, t1):
        if (px < tri_lo[t, 0] - margin or px > tri_hi[t, 0] + margin
                or py < tri_lo[t, 1] - margin or py > tri_hi[t, 1] + margin
                or pz < tri_lo[t, 2] - margin or pz > tri_hi[t, 2] + margin):
            continue
        qx, qy, qz, _ = closest_point_on_triangle(px, py, pz, tris[t])
        d2 = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
        if d2 < best:
            best = d2
            bx, by, bz, bt = qx, qy, qz, t
    return math.sqrt(best), bx, by, bz, bt


@njit(cache=True)
def wall_forces(n, active, pos, vel, omega, radius, mass, walls, law, dt,
                wall_gt, wall_active, ncont, force, torque):
    """Accumulate sphere-wall interactions; at most one contact per (particle, wall)."""
    tris, tri_lo, tri_hi, wall_start, wall_lo, wall_hi, wall_offset, wall_vel, wall_adhesive = walls
    nwall = wall_start.size - 1
    out = np.empty(9)
    gt = np.empty(3)
    deepest = np.inf
    for i in range(n):
        if not active[i]:
            continue
        ri = radius[i]
        for w in range(nwall):
            adhesive = law.adhesive > 0.5 and wall_adhesive[w]
            reach = law.g_star if adhesive else 0.0
            margin = ri + reach
            px = pos[i, 0] - wall_offset[w, 0]
            py = pos[i, 1] - wall_offset[w, 1]
            pz = pos[i, 2] - wall_offset[w, 2]
            found = False
            dist = qx = qy = qz = g = 0.0
            if not (px < wall_lo[w, 0] - margin or px > wall_hi[w, 0] + margin
                    or py < wall_lo[w, 1] - margin or py > wall_hi[w, 1] + margin
                    or pz < wall_lo[w, 2] - margin or pz > wall_hi[w, 2] + margin):
                dist, qx, qy, qz, t = wall_contact_point(
                    px, py, pz, tris, tri_lo, tri_hi, wall_start[w], wall_start[w + 1], margin
                )
                g = dist - ri
                if t >= 0 and dist > 0.0 and (g <= 0.0 or g < reach):
                    found = True
            if not found:
                wall_active[i, w] = False
                wall_gt[i, w, 0] = 0.0
                wall_gt[i, w, 1] = 0.0
                wall_gt[i, w, 2] = 0.0
                continue
            nx = (qx - px) / dist
            ny = (qy - py) / dist
            nz = (qz - pz) / dist
            fa = 0.0
            if adhesive:
                fa = _adhesion(law, g, ri)
            fx = fa * nx
            fy = fa * ny
            fz = fa * nz
            if g <= 0.0:
                if g < deepest:
                    deepest = g
                nc = ncont[i]
                if not wall_active[i, w]:
                    nc += 1
                    wall_active[i, w] = True
                    wall_gt[i, w, 0] = 0.0
                    wall_gt[i, w, 1] = 0.0
                    wall_gt[i, w, 2] = 0.0
                gt[0] = wall_gt[i, w, 0]
                gt[1] = wall_gt[i, w, 1]
                gt[2] = wall_gt[i, w, 2]
                mi = mass[i]
                _contact(
                    law, dt, g, nx, ny, nz, ri, 0.0, mi, ri, nc / (0.4 * mi * ri * ri),
                    vel[i, 0] - wall_vel[w, 0], vel[i, 1] - wall_vel[w, 1], vel[i, 2] - wall_vel[w, 2],
                    omega[i, 0], omega[i, 1], omega[i, 2], 0.0, 0.0, 0.0, gt, out,
                )
                wall_gt[i, w, 0] = gt[0]
                wall_gt[i, w, 1] = gt[1]
                wall_gt[i, w, 2] = gt[2]
                fx += out[0]
                fy += out[1]
                fz += out[2]
                torque[i, 0] += out[3]
                torque[i, 1] += out[4]
                torque[i, 2] += out[5]
            else:
                wall_active[i, w] = False
                wall_gt[i, w, 0] = 0.0
                wall_gt[i, w, 1] = 0.0
                wall_gt[i, w, 2] = 0.0
            force[i, 0] += fx
            force[i, 1] += fy
            force[i, 2] += fz
    return deepest


# ---------------------------------------------------------------------------
# full evaluation and time step
# ---------------------------------------------------------------------------


@njit(cache=True)
def evaluate(n, pos, vel, omega, radius, mass, ext, ids, gravity, law, dt,
             grid_lo, cell_size, dims, head, count_ws, pair_buf, escape_z, brute_force,
             hist_id, hist_gt, hist_seen, walls, wall_gt, wall_active, force, torque):
    """Recompute ``force``/``torque`` at the current positions and velocities.

    Returns (deepest gap, escaped mask, pair buffer). Escaped particles get
    gravity only and take part in no interaction.
    """
    cell = assign_cells(pos, n, grid_lo, cell_size, dims, escape_z)
    active = cell >= 0
    for i in range(n):
        force[i, 0] = ext[i, 0]
        force[i, 1] = ext[i, 1]
        force[i, 2] = ext[i, 2] - mass[i] * gravity
        torque[i, 0] = 0.0
        torque[i, 1] = 0.0
        torque[i, 2] = 0.0
    if brute_force:
        pi, pj = all_pairs(n, active)
    else:
        keys, order = bin_cells(cell)
        reach = law.g_star if law.adhesive > 0.5 else 0.0
        count = grid_pairs(pos, radius, cell, keys, order, dims, reach, head, count_ws, pair_buf)
        if count > pair_buf.shape[1]:
            pair_buf = np.empty((2, 2 * count), np.int64)
            grid_pairs(pos, radius, cell, keys, order, dims, reach, head, count_ws, pair_buf)
        pi = pair_buf[0, :count]
        pj = pair_buf[1, :count]
    ncont = count_contacts(n, pi, pj, pos, radius, wall_active)
    d1 = pair_forces(pi, pj, pos, vel, omega, radius, mass, ids, hist_id, hist_gt, hist_seen,
                     law, dt, ncont, force, torque)
    sweep_history(n, hist_id, hist_gt, hist_seen)
    d2 = wall_forces(n, active, pos, vel, omega, radius, mass, walls, law, dt,
                     wall_gt, wall_active, ncont, force, torque)
    return min(d1, d2), ~active, pair_buf


@njit(cache=True)
def verlet_step(n, pos, vel, omega, radius, mass, ext, ids, gravity, law, dt,
                grid_lo, cell_size, dims, head, count_ws, pair_buf, escape_z,
                hist_id, hist_gt, hist_seen, walls, wall_gt, wall_active, force, torque):
    """Half kick, drift, force evaluation, half kick.

    Returns (deepest gap, escaped mask, all finite, pair buffer); the pair
    buffer is the one passed in unless it had to be enlarged.
    """
    h = 0.5 * dt
    for i in range(n):
        inv_m = 1.0 / mass[i]
        inv_i = 1.0 / (0.4 * mass[i] * radius[i] * radius[i])
        for a in range(3):
            vel[i, a] += h * force[i, a] * inv_m
            omega[i, a] += h * torque[i, a] * inv_i
            pos[i, a] += dt * vel[i, a]
    deepest, escaped, pair_buf = evaluate(
        n, pos, vel, omega, radius, mass, ext, ids, gravity, law, dt,
        grid_lo, cell_size, dims, head, count_ws, pair_buf, escape_z, False,
        hist_id, hist_gt, hist_seen, walls, wall_gt, wall_active, force, torque,
    )
    finite = True
    for i in range(n):
        inv_m = 1.0 / mass[i]
        inv_i = 1.0 / (0.4 * mass[i] * radius[i] * radius[i])
        for a in range(3):
            vel[i, a] += h * force[i, a] * inv_m
            omega[i, a] += h * torque[i, a] * inv_i
            if not (math.isfinite(pos[i, a]) and math.isfinite(vel[i, a]) and math.isfinite(omega[i, a])):
                finite = False
    return deepest, escaped, finite, pair_buf
