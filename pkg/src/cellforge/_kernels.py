"""Compiled inner loops for collision checking.

Semantics mirror ``world.collision_mask`` built on ``geometry``; the numpy
path is kept as the reference the tests compare against.
"""

import math

import numpy as np
from numba import njit

_EPS = 1e-12


@njit(cache=True)
def _pt_seg_dist(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > _EPS:
        t = ((px - ax) * dx + (py - ay) * dy) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    cx = ax + t * dx - px
    cy = ay + t * dy - py
    return math.sqrt(cx * cx + cy * cy)


@njit(cache=True)
def _pt_box_dist(px, py, lox, loy, hix, hiy):
    dx = max(lox - px, px - hix, 0.0)
    dy = max(loy - py, py - hiy, 0.0)
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True)
def _seg_hits_box(ax, ay, bx, by, lox, loy, hix, hiy):
    tmin = 0.0
    tmax = 1.0
    d = (bx - ax, by - ay)
    a = (ax, ay)
    lo = (lox, loy)
    hi = (hix, hiy)
    for k in range(2):
        if abs(d[k]) < _EPS:
            if a[k] < lo[k] or a[k] > hi[k]:
                return False
        else:
            t1 = (lo[k] - a[k]) / d[k]
            t2 = (hi[k] - a[k]) / d[k]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@njit(cache=True)
def _seg_box_dist(ax, ay, bx, by, lox, loy, hix, hiy):
    if _seg_hits_box(ax, ay, bx, by, lox, loy, hix, hiy):
        return 0.0
    d = min(_pt_box_dist(ax, ay, lox, loy, hix, hiy), _pt_box_dist(bx, by, lox, loy, hix, hiy))
    d = min(d, _pt_seg_dist(lox, loy, ax, ay, bx, by))
    d = min(d, _pt_seg_dist(hix, hiy, ax, ay, bx, by))
    d = min(d, _pt_seg_dist(lox, hiy, ax, ay, bx, by))
    d = min(d, _pt_seg_dist(hix, loy, ax, ay, bx, by))
    return d


@njit(cache=True)
def _obb_hits_box(cx, cy, lox, loy, hix, hiy):
    # cx, cy: 4 corners of the oriented rectangle in order
    if cx.max() < lox or cx.min() > hix or cy.max() < loy or cy.min() > hiy:
        return False
    bx = np.array([lox, hix, hix, lox])
    by = np.array([loy, loy, hiy, hiy])
    for e in range(2):
        j = 1 if e == 0 else 3
        ex = cx[j] - cx[0]
        ey = cy[j] - cy[0]
        omin = 1e300
        omax = -1e300
        bmin = 1e300
        bmax = -1e300
        for k in range(4):
            po = cx[k] * ex + cy[k] * ey
            pb = bx[k] * ex + by[k] * ey
            omin = min(omin, po)
            omax = max(omax, po)
            bmin = min(bmin, pb)
            bmax = max(bmax, pb)
        if omax < bmin or omin > bmax:
            return False
    return True


@njit(cache=True)
def collision_kernel(
    Q,
    link_owner,
    link_len,
    disc_c,
    disc_r,
    rect_lo,
    rect_hi,
    region_lo,
    region_hi,
    r_link,
    box_w,
    box_h,
):
    n, n_q = Q.shape
    n_links = link_len.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    phi = np.empty(n_q)
    cx = np.empty(4)
    cy = np.empty(4)
    for i in range(n):
        acc = 0.0
        for j in range(n_q):
            acc += Q[i, j]
            phi[j] = acc
        x = 0.0
        y = 0.0
        hit = False
        for k in range(n_links):
            h = phi[link_owner[k]]
            nx = x + link_len[k] * math.cos(h)
            ny = y + link_len[k] * math.sin(h)
            for m in range(disc_r.shape[0]):
                if _pt_seg_dist(disc_c[m, 0], disc_c[m, 1], x, y, nx, ny) < disc_r[m] + r_link:
                    hit = True
                    break
            if not hit:
                for m in range(rect_lo.shape[0]):
                    if _seg_box_dist(x, y, nx, ny, rect_lo[m, 0], rect_lo[m, 1], rect_hi[m, 0], rect_hi[m, 1]) < r_link:
                        hit = True
                        break
            if not hit:
                for m in range(region_lo.shape[0]):
                    if _seg_hits_box(x, y, nx, ny, region_lo[m, 0], region_lo[m, 1], region_hi[m, 0], region_hi[m, 1]):
                        hit = True
                        break
            x = nx
            y = ny
            if hit:
                break
        if not hit and box_w > 0.0 and box_h > 0.0:
            ux = math.cos(phi[n_q - 1])
            uy = math.sin(phi[n_q - 1])
            vx = -uy
            vy = ux
            for m in range(disc_r.shape[0]):
                rx = disc_c[m, 0] - x
                ry = disc_c[m, 1] - y
                u = rx * ux + ry * uy
                v = rx * vx + ry * vy
                du = max(-u, u - box_h, 0.0)
                dv = max(abs(v) - 0.5 * box_w, 0.0)
                if math.sqrt(du * du + dv * dv) < disc_r[m]:
                    hit = True
                    break
            if not hit and rect_lo.shape[0] > 0:
                hw = 0.5 * box_w
                fx = x + box_h * ux
                fy = y + box_h * uy
                cx[0] = x + hw * vx
                cy[0] = y + hw * vy
                cx[1] = fx + hw * vx
                cy[1] = fy + hw * vy
                cx[2] = fx - hw * vx
                cy[2] = fy - hw * vy
                cx[3] = x - hw * vx
                cy[3] = y - hw * vy
                for m in range(rect_lo.shape[0]):
                    if _obb_hits_box(cx, cy, rect_lo[m, 0], rect_lo[m, 1], rect_hi[m, 0], rect_hi[m, 1]):
                        hit = True
                        break
        out[i] = hit
    return out


@njit(cache=True)
def spline_values_kernel(knots, y, M, s):
    """Clamped-spline positions for each row at sorted instants ``s``."""
    N, K = knots.shape
    n = y.shape[2]
    S = s.shape[0]
    out = np.empty((N, S, n))
    for i in range(N):
        p = 0
        for k in range(S):
            while p < K - 2 and s[k] >= knots[i, p + 1]:
                p += 1
            h = knots[i, p + 1] - knots[i, p]
            u = s[k] - knots[i, p]
            for j in range(n):
                y0 = y[i, p, j]
                m0 = M[i, p, j]
                m1 = M[i, p + 1, j]
                b = (y[i, p + 1, j] - y0) / h - h * (2.0 * m0 + m1) / 6.0
                out[i, k, j] = y0 + b * u + 0.5 * m0 * u * u + (m1 - m0) / (6.0 * h) * u * u * u
    return out
