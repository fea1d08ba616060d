"""Compiled inner loops for the tunnel surface (ray marching, wall sampling).

The geometry is passed as a flat set of arrays so the kernels stay
independent of the Python-side :class:`~tunnelnav.tunnel.Tunnel` object.
``axis`` packs ``(s0, ds, n, closed, length, s_lo, s_hi)`` and ``surf`` packs
``(radius, horseshoe, floor_fraction, roughness, noise_norm)``.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True, inline="always")
def hermite(pos, tan, axis, s):
    s0, ds, n, closed, length, s_lo, s_hi = axis
    n = int(n)
    if closed > 0.5:
        u = (s % length) / ds
        i = int(math.floor(u))
        t = u - i
        i0 = i % n
        i1 = (i + 1) % n
    else:
        sc = min(max(s, s_lo), s_hi)
        u = (sc - s0) / ds
        i0 = min(max(int(math.floor(u)), 0), n - 2)
        t = u - i0
        i1 = i0 + 1
    t2 = t * t
    t3 = t2 * t
    h00, h10, h01, h11 = 2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2
    g00, g10, g01, g11 = 6 * t2 - 6 * t, 3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t
    k00, k10, k01, k11 = 12 * t - 6, 6 * t - 4, -12 * t + 6, 6 * t - 2
    cx = h00 * pos[i0, 0] + h10 * tan[i0, 0] * ds + h01 * pos[i1, 0] + h11 * tan[i1, 0] * ds
    cy = h00 * pos[i0, 1] + h10 * tan[i0, 1] * ds + h01 * pos[i1, 1] + h11 * tan[i1, 1] * ds
    cz = h00 * pos[i0, 2] + h10 * tan[i0, 2] * ds + h01 * pos[i1, 2] + h11 * tan[i1, 2] * ds
    ax = (g00 * pos[i0, 0] + g10 * tan[i0, 0] * ds + g01 * pos[i1, 0] + g11 * tan[i1, 0] * ds) / ds
    ay = (g00 * pos[i0, 1] + g10 * tan[i0, 1] * ds + g01 * pos[i1, 1] + g11 * tan[i1, 1] * ds) / ds
    az = (g00 * pos[i0, 2] + g10 * tan[i0, 2] * ds + g01 * pos[i1, 2] + g11 * tan[i1, 2] * ds) / ds
    dd = ds * ds
    bx = (k00 * pos[i0, 0] + k10 * tan[i0, 0] * ds + k01 * pos[i1, 0] + k11 * tan[i1, 0] * ds) / dd
    by = (k00 * pos[i0, 1] + k10 * tan[i0, 1] * ds + k01 * pos[i1, 1] + k11 * tan[i1, 1] * ds) / dd
    bz = (k00 * pos[i0, 2] + k10 * tan[i0, 2] * ds + k01 * pos[i1, 2] + k11 * tan[i1, 2] * ds) / dd
    return (cx, cy, cz), (ax, ay, az), (bx, by, bz)


@njit(cache=True, inline="always")
def noise(s, ang, closed, oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values, norm):
    total = 0.0
    a = ang % TWO_PI
    for o in range(len(oct_cell)):
        ns = oct_ns[o]
        na = oct_na[o]
        us = (s - oct_lo[o]) / oct_cell[o]
        ua = a / TWO_PI * na
        i = int(math.floor(us))
        j = int(math.floor(ua))
        fs = us - i
        fa = ua - j
        fs = fs * fs * (3.0 - 2.0 * fs)
        fa = fa * fa * (3.0 - 2.0 * fa)
        if closed > 0.5:
            i0 = i % ns
            i1 = (i + 1) % ns
        else:
            i0 = min(max(i, 0), ns - 1)
            i1 = min(max(i + 1, 0), ns - 1)
        j0 = j % na
        j1 = (j + 1) % na
        off = oct_off[o]
        v00 = values[off + i0 * na + j0]
        v01 = values[off + i0 * na + j1]
        v10 = values[off + i1 * na + j0]
        v11 = values[off + i1 * na + j1]
        v0 = v00 + fa * (v01 - v00)
        v1 = v10 + fa * (v11 - v10)
        total += oct_amp[o] * (v0 + fs * (v1 - v0))
    return total / norm


@njit(cache=True, inline="always")
def wall_radius(s, ang, surf, closed, oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values):
    radius, horseshoe, floor_frac, roughness, norm = surf
    r = radius
    if horseshoe > 0.5:
        sn = math.sin(ang)
        if sn < 0.0:
            rf = -floor_frac * radius / sn
            if rf < r:
                r = rf
    if roughness > 0.0:
        r *= 1.0 + roughness * noise(s, ang, closed, oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values, norm)
    return r


@njit(cache=True, inline="always")
def probe(px, py, pz, s, pos, tan, axis, surf, oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values):
    """Radial clearance at p and one Newton update of its closest-axis arclength."""
    c, d1, d2 = hermite(pos, tan, axis, s)
    rx, ry, rz = px - c[0], py - c[1], pz - c[2]
    nrm = math.sqrt(d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2])
    tx, ty, tz = d1[0] / nrm, d1[1] / nrm, d1[2] / nrm
    lh = math.sqrt(tx * tx + ty * ty)
    lx, ly = -ty / lh, tx / lh
    ux, uy, uz = -tz * ly, tz * lx, tx * ly - ty * lx
    dl = rx * lx + ry * ly
    du = rx * ux + ry * uy + rz * uz
    ang = math.atan2(du, dl)
    g = wall_radius(s, ang, surf, axis[3], oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values) - math.hypot(dl, du)
    f = rx * d1[0] + ry * d1[1] + rz * d1[2]
    fp = -nrm * nrm + rx * d2[0] + ry * d2[1] + rz * d2[2]
    if fp > -0.2:
        fp = -0.2
    step = f / fp
    if step > 2.0:
        step = 2.0
    elif step < -2.0:
        step = -2.0
    s_next = s - step
    if axis[3] < 0.5:
        s_next = min(max(s_next, axis[5]), axis[6])
    return g, s_next


@njit(cache=True)
def march(origin, dirs, s_start, max_range, factor, min_step, tol, pos, tan, axis, surf,
          oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values):
    """Sphere-march every ray, then bisect the bracketing interval to ``tol``."""
    n = dirs.shape[0]
    out = np.full(n, np.nan)
    for k in range(n):
        dx, dy, dz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
        s = s_start
        t = 0.0
        t_in = 0.0
        hit = False
        while True:
            g, s = probe(origin[0] + t * dx, origin[1] + t * dy, origin[2] + t * dz, s,
                         pos, tan, axis, surf, oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values)
            if g <= 0.0:
                hit = True
                break
            t_in = t
            if t_in >= max_range:
                break
            t = min(t + max(factor * g, min_step), max_range)
        if not hit:
            continue
        lo, hi = t_in, t
        for _ in range(30):
            if hi - lo < tol:
                break
            mid = 0.5 * (lo + hi)
            g, s = probe(origin[0] + mid * dx, origin[1] + mid * dy, origin[2] + mid * dz, s,
                         pos, tan, axis, surf, oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values)
            if g > 0.0:
                lo = mid
            else:
                hi = mid
        out[k] = 0.5 * (lo + hi)
    return out


@njit(cache=True)
def nearest_wall(p, s_center, s_half, s_step, a_center, a_half, a_step, pos, tan, axis, surf,
                 oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values):
    """Brute-force nearest wall sample on an (s, angle) grid; returns (dist, s, angle)."""
    best = np.inf
    best_s = s_center
    best_a = 0.0
    ns = int(round(2 * s_half / s_step)) + 1
    na = int(round(2 * a_half / a_step)) + 1
    for i in range(ns):
        s = s_center - s_half + i * s_step
        if axis[3] < 0.5 and (s < axis[5] or s > axis[6]):
            continue
        c, d1, _ = hermite(pos, tan, axis, s)
        nrm = math.sqrt(d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2])
        tx, ty, tz = d1[0] / nrm, d1[1] / nrm, d1[2] / nrm
        lh = math.sqrt(tx * tx + ty * ty)
        lx, ly = -ty / lh, tx / lh
        ux, uy, uz = -tz * ly, tz * lx, tx * ly - ty * lx
        for j in range(na):
            a = a_center - a_half + j * a_step
            r = wall_radius(s, a, surf, axis[3], oct_lo, oct_cell, oct_ns, oct_na, oct_amp, oct_off, values)
            ca, sa = math.cos(a), math.sin(a)
            wx = c[0] + r * (ca * lx + sa * ux)
            wy = c[1] + r * (ca * ly + sa * uy)
            wz = c[2] + r * sa * uz
            d = math.sqrt((wx - p[0]) ** 2 + (wy - p[1]) ** 2 + (wz - p[2]) ** 2)
            if d < best:
                best = d
                best_s = s
                best_a = a
    return best, best_s, best_a


# -- planar helpers ---------------------------------------------------------


@njit(cache=True)
def kasa_rms(y, z, collinear_tol):
    """Centred and scaled Kasa circle fit; RMS geometric residual or inf if collinear."""
    n = y.shape[0]
    my = 0.0
    mz = 0.0
    for i in range(n):
        my += y[i]
        mz += z[i]
    my /= n
    mz /= n
    ss = 0.0
    for i in range(n):
        ss += (y[i] - my) ** 2 + (z[i] - mz) ** 2
    scale = math.sqrt(ss / n)
    if scale == 0.0:
        scale = 1.0
    syy = szz = syz = sy = sz = by = bz = bw = 0.0
    for i in range(n):
        uy = (y[i] - my) / scale
        uz = (z[i] - mz) / scale
        w = -(uy * uy + uz * uz)
        syy += uy * uy
        szz += uz * uz
        syz += uy * uz
        sy += uy
        sz += uz
        by += uy * w
        bz += uz * w
        bw += w
    syy /= n
    szz /= n
    syz /= n
    sy /= n
    sz /= n
    by /= n
    bz /= n
    bw /= n
    # Cramer's rule on [[syy, syz, sy], [syz, szz, sz], [sy, sz, 1]]
    det = syy * (szz - sz * sz) - syz * (syz - sz * sy) + sy * (syz * sz - szz * sy)
    if abs(det) < collinear_tol:
        return np.inf
    d_d = by * (szz - sz * sz) - syz * (bz - sz * bw) + sy * (bz * sz - szz * bw)
    d_e = syy * (bz - sz * bw) - by * (syz - sz * sy) + sy * (syz * bw - bz * sy)
    d_f = syy * (szz * bw - sz * bz) - syz * (syz * bw - sz * by) + sy * (syz * bz - szz * by)
    cy = -0.5 * d_d / det
    cz = -0.5 * d_e / det
    r = math.sqrt(max(cy * cy + cz * cz - d_f / det, 0.0))
    acc = 0.0
    for i in range(n):
        uy = (y[i] - my) / scale
        uz = (z[i] - mz) / scale
        d = math.sqrt((uy - cy) ** 2 + (uz - cz) ** 2) - r
        acc += d * d
    return math.sqrt(acc / n) * scale


@njit(cache=True)
def yaw_sweep(x, y, z, candidates, collinear_tol):
    """Circle-fit RMS of the y-z projection after rotating by each candidate yaw."""
    out = np.empty(candidates.shape[0])
    yr = np.empty(x.shape[0])
    for k in range(candidates.shape[0]):
        s = math.sin(candidates[k])
        c = math.cos(candidates[k])
        for i in range(x.shape[0]):
            yr[i] = s * x[i] + c * y[i]
        out[k] = kasa_rms(yr, z, collinear_tol) if x.shape[0] > 0 else np.inf
    return out


@njit(cache=True)
def farthest_pair(p):
    n = p.shape[0]
    best = -1.0
    bi = 0
    bj = 0
    for i in range(n):
        for j in range(i + 1, n):
            d = (p[i, 0] - p[j, 0]) ** 2 + (p[i, 1] - p[j, 1]) ** 2
            if d > best:
                best = d
                bi = i
                bj = j
    return bi, bj


@njit(cache=True)
def rdp_chain(p, idx, epsilon, keep):
    """Iterative RDP over the open chain ``p[idx]``; marks kept vertices in ``keep``."""
    m = idx.shape[0]
    keep[idx[0]] = True
    keep[idx[m - 1]] = True
    stack = np.empty((m + 1, 2), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = m - 1
    top = 1
    while top > 0:
        top -= 1
        lo = stack[top, 0]
        hi = stack[top, 1]
        if hi - lo < 2:
            continue
        ax, ay = p[idx[lo], 0], p[idx[lo], 1]
        bx, by = p[idx[hi], 0], p[idx[hi], 1]
        ex, ey = bx - ax, by - ay
        den = ex * ex + ey * ey
        best = -1.0
        bk = lo + 1
        for k in range(lo + 1, hi):
            qx, qy = p[idx[k], 0] - ax, p[idx[k], 1] - ay
            t = 0.0
            if den > 0.0:
                t = min(max((qx * ex + qy * ey) / den, 0.0), 1.0)
            dx, dy = qx - t * ex, qy - t * ey
            d = math.sqrt(dx * dx + dy * dy)
            if d > best:
                best = d
                bk = k
        if best > epsilon:
            keep[idx[bk]] = True
            stack[top, 0] = lo
            stack[top, 1] = bk
            stack[top + 1, 0] = bk
            stack[top + 1, 1] = hi
            top += 2


@njit(cache=True)
def signed_distances(pts, ring):
    """Distance to the nearest ring edge, positive inside (even-odd rule)."""
    m = pts.shape[0]
    n = ring.shape[0]
    out = np.empty(m)
    for i in range(m):
        py, pz = pts[i, 0], pts[i, 1]
        best = np.inf
        inside = False
        for k in range(n):
            ay, az = ring[k, 0], ring[k, 1]
            kb = k + 1 if k + 1 < n else 0
            by, bz = ring[kb, 0], ring[kb, 1]
            ey, ez = by - ay, bz - az
            den = ey * ey + ez * ez
            qy, qz = py - ay, pz - az
            t = 0.0
            if den > 0.0:
                t = min(max((qy * ey + qz * ez) / den, 0.0), 1.0)
            dy, dz = qy - t * ey, qz - t * ez
            d = dy * dy + dz * dz
            if d < best:
                best = d
            if (az > pz) != (bz > pz):
                if py < ey * (pz - az) / ez + ay:
                    inside = not inside
        best = math.sqrt(best)
        out[i] = best if inside else -best
    return out


@njit(cache=True)
def closest_s(p, a, b, tol, pos, tan, axis):
    """Golden-section search for the axis arclength nearest to ``p`` on [a, b]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    q, _, _ = hermite(pos, tan, axis, c)
    fc = (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2
    q, _, _ = hermite(pos, tan, axis, d)
    fd = (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            q, _, _ = hermite(pos, tan, axis, c)
            fc = (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            q, _, _ = hermite(pos, tan, axis, d)
            fd = (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2
    return 0.5 * (a + b)
