"""Compiled inner loop of the group velocity-obstacle simulator.

Agent parameters are packed column-wise into a float array so the whole
crowd can be stepped without Python overhead:

    0 neighbor_dist, 1 max_neighbors, 2 planning_horizon,
    3 radius, 4 pref_speed, 5 group_cohesion
"""

import math

import numpy as np
from numba import njit

P_ND, P_MAXN, P_TAU, P_RADIUS, P_SPEED, P_COHESION = range(6)

SPEED_CAP = 1.2
GOAL_TOLERANCE = 0.1
N_SAMPLES = 256
FEAS_EPS = 1e-9
MAX_LINES = 64


def golden_disk(n=N_SAMPLES):
    """Deterministic, evenly spread points in the unit disk (sunflower pattern)."""
    k = np.arange(n, dtype=np.float64)
    r = np.sqrt((k + 0.5) / n)
    theta = k * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


DISK = golden_disk()


@njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def preferred_velocity_one(px, py, gx, gy, speed, cohesion, neighbor_dist,
                           has_centroid, cx, cy, dt):
    """Goal-seeking velocity blended toward the group centroid."""
    dgx = gx - px
    dgy = gy - py
    dist = math.sqrt(dgx * dgx + dgy * dgy)
    if dist <= GOAL_TOLERANCE:
        return 0.0, 0.0
    ux = dgx / dist
    uy = dgy / dist
    if has_centroid:
        dcx = cx - px
        dcy = cy - py
        dc = math.sqrt(dcx * dcx + dcy * dcy)
        if dc > 1e-12:
            w = cohesion * min(max(dc / neighbor_dist, 0.0), 1.0)
            bx = (1.0 - w) * ux + w * dcx / dc
            by = (1.0 - w) * uy + w * dcy / dc
            bn = math.sqrt(bx * bx + by * by)
            if bn > 1e-12:
                ux = bx / bn
                uy = by / bn
    s = speed
    # do not overshoot the goal within one step
    if dt > 0.0 and dist / dt < s:
        s = dist / dt
    return s * ux, s * uy


@njit(cache=True)
def orca_line(rpx, rpy, rvx, rvy, combined_radius, tau, dt, vx, vy, share, out, k):
    """Half-plane of velocities avoiding one neighbour, written to ``out[k]``.

    ``rp`` is the neighbour position relative to the agent, ``rv`` the agent
    velocity relative to the neighbour, ``share`` the fraction of the
    avoidance the agent takes on (0.5 reciprocal, 1.0 static neighbour).
    Stored as (point_x, point_y, dir_x, dir_y); feasible velocities lie to the
    left of the directed line.
    """
    dist_sq = rpx * rpx + rpy * rpy
    r_sq = combined_radius * combined_radius
    if dist_sq > r_sq:
        inv_tau = 1.0 / tau
        wx = rvx - inv_tau * rpx
        wy = rvy - inv_tau * rpy
        w_len_sq = wx * wx + wy * wy
        dot1 = wx * rpx + wy * rpy
        if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
            # nearest boundary point lies on the truncation circle
            w_len = math.sqrt(w_len_sq)
            uwx = wx / w_len
            uwy = wy / w_len
            dx = uwy
            dy = -uwx
            scale = combined_radius * inv_tau - w_len
            ux = scale * uwx
            uy = scale * uwy
        else:
            leg = math.sqrt(dist_sq - r_sq)
            if _det(rpx, rpy, wx, wy) > 0.0:
                dx = (rpx * leg - rpy * combined_radius) / dist_sq
                dy = (rpx * combined_radius + rpy * leg) / dist_sq
            else:
                dx = -(rpx * leg + rpy * combined_radius) / dist_sq
                dy = -(-rpx * combined_radius + rpy * leg) / dist_sq
            dot2 = rvx * dx + rvy * dy
            ux = dot2 * dx - rvx
            uy = dot2 * dy - rvy
    else:
        # already overlapping: resolve within one step
        inv_dt = 1.0 / dt
        wx = rvx - inv_dt * rpx
        wy = rvy - inv_dt * rpy
        w_len = math.sqrt(wx * wx + wy * wy)
        if w_len < 1e-12:
            # coincident centres at rest; push along an arbitrary fixed axis
            wx, wy, w_len = 1.0, 0.0, 1.0
        uwx = wx / w_len
        uwy = wy / w_len
        dx = uwy
        dy = -uwx
        scale = combined_radius * inv_dt - w_len
        ux = scale * uwx
        uy = scale * uwy
    out[k, 0] = vx + share * ux
    out[k, 1] = vy + share * uy
    out[k, 2] = dx
    out[k, 3] = dy


@njit(cache=True)
def _violation(lines, n_lines, cx, cy):
    worst = -1e300
    for k in range(n_lines):
        v = _det(lines[k, 2], lines[k, 3], lines[k, 0] - cx, lines[k, 1] - cy)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def solve_velocity(lines, n_lines, prefx, prefy, vmax, disk):
    """Feasible velocity nearest the preferred one, by candidate search.

    Candidates: the preferred velocity, its projection onto every constraint
    line, every pairwise line intersection, and the sampled disk. All are
    clipped to ``vmax``. With no feasible candidate the one with least
    maximum penetration is returned.
    """
    if n_lines == 0:
        return prefx, prefy
    best_x = 0.0
    best_y = 0.0
    best_d = 1e300
    found = False
    fb_x = 0.0
    fb_y = 0.0
    fb_v = 1e300
    fb_d = 1e300
    n_struct = 1 + n_lines + n_lines * (n_lines - 1) // 2
    total = n_struct + disk.shape[0]
    pair_i = 0
    pair_j = 1
    for c in range(total):
        if c == 0:
            cx = prefx
            cy = prefy
        elif c <= n_lines:
            k = c - 1
            t = (prefx - lines[k, 0]) * lines[k, 2] + (prefy - lines[k, 1]) * lines[k, 3]
            cx = lines[k, 0] + t * lines[k, 2]
            cy = lines[k, 1] + t * lines[k, 3]
        elif c < n_struct:
            i = pair_i
            j = pair_j
            pair_j += 1
            if pair_j >= n_lines:
                pair_i += 1
                pair_j = pair_i + 1
            denom = _det(lines[i, 2], lines[i, 3], lines[j, 2], lines[j, 3])
            if abs(denom) < 1e-12:
                continue
            t = _det(lines[j, 2], lines[j, 3], lines[i, 0] - lines[j, 0],
                     lines[i, 1] - lines[j, 1]) / denom
            cx = lines[i, 0] + t * lines[i, 2]
            cy = lines[i, 1] + t * lines[i, 3]
        else:
            s = c - n_struct
            cx = disk[s, 0] * vmax
            cy = disk[s, 1] * vmax
        sp = math.sqrt(cx * cx + cy * cy)
        if sp > vmax:
            cx *= vmax / sp
            cy *= vmax / sp
        d = (cx - prefx) * (cx - prefx) + (cy - prefy) * (cy - prefy)
        if found and d >= best_d:
            continue
        viol = _violation(lines, n_lines, cx, cy)
        if viol <= FEAS_EPS:
            found = True
            best_x = cx
            best_y = cy
            best_d = d
        elif not found:
            if viol < fb_v - 1e-12 or (abs(viol - fb_v) <= 1e-12 and d < fb_d):
                fb_x = cx
                fb_y = cy
                fb_v = viol
                fb_d = d
    if found:
        return best_x, best_y
    return least_penetration(lines, n_lines, vmax, fb_x, fb_y, fb_v)


@njit(cache=True)
def _consider(lines, n_lines, vmax, cx, cy, best):
    sp = math.sqrt(cx * cx + cy * cy)
    if sp > vmax:
        cx *= vmax / sp
        cy *= vmax / sp
    v = _violation(lines, n_lines, cx, cy)
    if v < best[2] - 1e-12:
        best[0] = cx
        best[1] = cy
        best[2] = v


@njit(cache=True)
def least_penetration(lines, n_lines, vmax, x0, y0, v0):
    """Velocity in the speed disk minimising the largest constraint violation.

    Violation of line k at v is ``a_k . v + b_k`` with unit normal
    ``a_k = (d_y, -d_x)``. The convex minimax optimum sits where three
    violations tie, where two tie on the speed circle, or at one
    constraint's extreme point on the circle; all are enumerated.
    """
    best = np.array([x0, y0, v0])
    for k in range(n_lines):
        _consider(lines, n_lines, vmax, -vmax * lines[k, 3], vmax * lines[k, 2], best)
    for i in range(n_lines):
        ax_i = lines[i, 3]
        ay_i = -lines[i, 2]
        b_i = lines[i, 2] * lines[i, 1] - lines[i, 3] * lines[i, 0]
        for j in range(i + 1, n_lines):
            ax_j = lines[j, 3]
            ay_j = -lines[j, 2]
            b_j = lines[j, 2] * lines[j, 1] - lines[j, 3] * lines[j, 0]
            # tie line: (a_i - a_j) . v = b_j - b_i, meet with the circle
            nx = ax_i - ax_j
            ny = ay_i - ay_j
            nn = nx * nx + ny * ny
            if nn > 1e-18:
                c = (b_j - b_i) / math.sqrt(nn)
                ux = nx / math.sqrt(nn)
                uy = ny / math.sqrt(nn)
                h = vmax * vmax - c * c
                if h >= 0.0:
                    h = math.sqrt(h)
                    _consider(lines, n_lines, vmax, c * ux - h * uy, c * uy + h * ux, best)
                    _consider(lines, n_lines, vmax, c * ux + h * uy, c * uy - h * ux, best)
            for k in range(j + 1, n_lines):
                ax_k = lines[k, 3]
                ay_k = -lines[k, 2]
                b_k = lines[k, 2] * lines[k, 1] - lines[k, 3] * lines[k, 0]
                m11 = ax_i - ax_j
                m12 = ay_i - ay_j
                m21 = ax_i - ax_k
                m22 = ay_i - ay_k
                det = m11 * m22 - m12 * m21
                if abs(det) < 1e-12:
                    continue
                r1 = b_j - b_i
                r2 = b_k - b_i
                _consider(lines, n_lines, vmax, (r1 * m22 - m12 * r2) / det,
                          (m11 * r2 - r1 * m21) / det, best)
    return best[0], best[1]


@njit(cache=True)
def _closest_on_segment(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    L = ex * ex + ey * ey
    if L <= 0.0:
        return ax, ay
    t = ((px - ax) * ex + (py - ay) * ey) / L
    t = min(max(t, 0.0), 1.0)
    return ax + t * ex, ay + t * ey


@njit(cache=True)
def agent_velocity(i, pos, vel, pref, params, arrived, obstacles, dt, disk, lines):
    """New velocity of agent ``i`` against the snapshot (pos, vel)."""
    n = pos.shape[0]
    nd = params[i, P_ND]
    maxn = int(params[i, P_MAXN])
    tau = params[i, P_TAU]
    ri = params[i, P_RADIUS]
    vmax = SPEED_CAP * params[i, P_SPEED]
    px = pos[i, 0]
    py = pos[i, 1]
    vx = vel[i, 0]
    vy = vel[i, 1]

    # k nearest neighbours strictly within neighbor_dist, by insertion
    nb_idx = np.empty(maxn, dtype=np.int64)
    nb_d = np.empty(maxn)
    count = 0
    nd_sq = nd * nd
    for j in range(n):
        if j == i:
            continue
        dx = pos[j, 0] - px
        dy = pos[j, 1] - py
        d2 = dx * dx + dy * dy
        if d2 >= nd_sq:
            continue
        if count < maxn:
            k = count
            count += 1
        elif d2 < nb_d[maxn - 1]:
            k = maxn - 1
        else:
            continue
        while k > 0 and nb_d[k - 1] > d2:
            nb_d[k] = nb_d[k - 1]
            nb_idx[k] = nb_idx[k - 1]
            k -= 1
        nb_d[k] = d2
        nb_idx[k] = j

    n_lines = 0
    for m in range(count):
        j = nb_idx[m]
        share = 1.0 if arrived[j] else 0.5
        orca_line(pos[j, 0] - px, pos[j, 1] - py, vx - vel[j, 0], vy - vel[j, 1],
                  ri + params[j, P_RADIUS], tau, dt, vx, vy, share, lines, n_lines)
        n_lines += 1

    for m in range(obstacles.shape[0]):
        if n_lines >= lines.shape[0]:
            break
        qx, qy = _closest_on_segment(px, py, obstacles[m, 0], obstacles[m, 1],
                                     obstacles[m, 2], obstacles[m, 3])
        dx = qx - px
        dy = qy - py
        if dx * dx + dy * dy >= (nd + ri) * (nd + ri):
            continue
        orca_line(dx, dy, vx, vy, ri, tau, dt, vx, vy, 1.0, lines, n_lines)
        n_lines += 1

    return solve_velocity(lines, n_lines, pref[i, 0], pref[i, 1], vmax, disk)


@njit(cache=True)
def step(pos, vel, pref, goals, params, group_index, n_groups, arrived, obstacles, dt, disk,
         noise):
    """Advance every agent by one double-buffered step.

    Returns new (pos, vel, pref, arrived) arrays; inputs are not modified.
    """
    n = pos.shape[0]
    new_pos = pos.copy()
    new_vel = np.zeros_like(vel)
    new_pref = np.zeros_like(pref)
    new_arrived = arrived.copy()

    cent = np.zeros((n_groups, 2))
    cnt = np.zeros(n_groups)
    for i in range(n):
        g = group_index[i]
        if g >= 0:
            cent[g, 0] += pos[i, 0]
            cent[g, 1] += pos[i, 1]
            cnt[g] += 1.0
    for g in range(n_groups):
        if cnt[g] > 0:
            cent[g, 0] /= cnt[g]
            cent[g, 1] /= cnt[g]

    for i in range(n):
        if arrived[i]:
            continue
        g = group_index[i]
        has_c = g >= 0 and cnt[g] > 1.0
        cx = cent[g, 0] if g >= 0 else 0.0
        cy = cent[g, 1] if g >= 0 else 0.0
        ux, uy = preferred_velocity_one(pos[i, 0], pos[i, 1], goals[i, 0], goals[i, 1],
                                        params[i, P_SPEED], params[i, P_COHESION],
                                        params[i, P_ND], has_c, cx, cy, dt)
        if ux != 0.0 or uy != 0.0:
            ux += noise[i, 0]
            uy += noise[i, 1]
        new_pref[i, 0] = ux
        new_pref[i, 1] = uy

    lines = np.empty((MAX_LINES, 4))
    for i in range(n):
        if arrived[i]:
            continue
        vx, vy = agent_velocity(i, pos, vel, new_pref, params, arrived, obstacles, dt, disk, lines)
        new_vel[i, 0] = vx
        new_vel[i, 1] = vy

    for i in range(n):
        if arrived[i]:
            continue
        new_pos[i, 0] = pos[i, 0] + new_vel[i, 0] * dt
        new_pos[i, 1] = pos[i, 1] + new_vel[i, 1] * dt
        gx = goals[i, 0] - new_pos[i, 0]
        gy = goals[i, 1] - new_pos[i, 1]
        if gx * gx + gy * gy <= GOAL_TOLERANCE * GOAL_TOLERANCE:
            new_arrived[i] = True
    return new_pos, new_vel, new_pref, new_arrived


@njit(cache=True)
def run(pos0, vel0, goals, params, group_index, n_groups, arrived0, obstacles, dt, n_steps,
        disk, noise):
    """Roll ``step`` forward; returns position and velocity histories (T, N, 2)."""
    n = pos0.shape[0]
    P = np.empty((n_steps + 1, n, 2))
    V = np.empty((n_steps + 1, n, 2))
    pos = pos0.copy()
    vel = vel0.copy()
    pref = np.zeros_like(pos0)
    arrived = arrived0.copy()
    P[0] = pos
    V[0] = vel
    for s in range(n_steps):
        pos, vel, pref, arrived = step(pos, vel, pref, goals, params, group_index, n_groups,
                                       arrived, obstacles, dt, disk, noise[s])
        P[s + 1] = pos
        V[s + 1] = vel
    return P, V
