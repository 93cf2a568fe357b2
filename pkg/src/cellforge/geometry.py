"""Vectorized planar distance and overlap tests.

Every function broadcasts over leading axes; points are arrays whose last
axis has length 2.
"""

import numpy as np

_EPS = 1e-12


def point_segment_distance(p, a, b):
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.sum((p - a) * ab, axis=-1) / np.maximum(denom, _EPS)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def point_aabb_distance(p, lo, hi):
    d = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return np.linalg.norm(d, axis=-1)


def segment_intersects_aabb(a, b, lo, hi):
    """Liang-Barsky clip of segment a->b against the closed box [lo, hi]."""
    a, b, lo, hi = np.broadcast_arrays(a, b, lo, hi)
    d = b - a
    tmin = np.zeros(a.shape[:-1])
    tmax = np.ones(a.shape[:-1])
    hit = np.ones(a.shape[:-1], dtype=bool)
    for k in range(2):
        dk = d[..., k]
        ak = a[..., k]
        flat = np.abs(dk) < _EPS
        inside = (ak >= lo[..., k]) & (ak <= hi[..., k])
        hit &= ~flat | inside
        safe = np.where(flat, 1.0, dk)
        t1 = (lo[..., k] - ak) / safe
        t2 = (hi[..., k] - ak) / safe
        tmin = np.where(flat, tmin, np.maximum(tmin, np.minimum(t1, t2)))
        tmax = np.where(flat, tmax, np.minimum(tmax, np.maximum(t1, t2)))
    return hit & (tmin <= tmax)


def segment_aabb_distance(a, b, lo, hi):
    """Euclidean distance between a segment and a closed box; zero on overlap."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = np.minimum(point_aabb_distance(a, lo, hi), point_aabb_distance(b, lo, hi))
    corners = (
        lo,
        hi,
        np.stack([lo[..., 0], hi[..., 1]], axis=-1),
        np.stack([hi[..., 0], lo[..., 1]], axis=-1),
    )
    for c in corners:
        d = np.minimum(d, point_segment_distance(c, a, b))
    return np.where(segment_intersects_aabb(a, b, lo, hi), 0.0, d)


def obb_corners(origin, axis, length, width):
    """Corners of the rectangle spanning ``length`` along unit ``axis`` from
    ``origin`` and ``width`` centred across it. Output shape (..., 4, 2)."""
    normal = np.stack([-axis[..., 1], axis[..., 0]], axis=-1)
    half = 0.5 * np.asarray(width, dtype=float)[..., None]
    far = origin + np.asarray(length, dtype=float)[..., None] * axis
    return np.stack(
        [origin + half * normal, far + half * normal, far - half * normal, origin - half * normal],
        axis=-2,
    )


def obb_disc_distance(origin, axis, length, width, center):
    """Distance from a disc centre to the oriented rectangle (zero inside)."""
    normal = np.stack([-axis[..., 1], axis[..., 0]], axis=-1)
    rel = center - origin
    u = np.sum(rel * axis, axis=-1)
    v = np.sum(rel * normal, axis=-1)
    du = np.maximum(np.maximum(-u, u - length), 0.0)
    dv = np.maximum(np.abs(v) - 0.5 * width, 0.0)
    return np.hypot(du, dv)


def obb_overlaps_aabb(corners, lo, hi):
    """Separating-axis test between rectangles given by OBB corners and an AABB."""
    cx = corners[..., 0]
    cy = corners[..., 1]
    sep = (cx.max(-1) < lo[..., 0]) | (cx.min(-1) > hi[..., 0])
    sep |= (cy.max(-1) < lo[..., 1]) | (cy.min(-1) > hi[..., 1])
    box = np.stack(
        [
            lo,
            np.stack([hi[..., 0], lo[..., 1]], axis=-1),
            hi,
            np.stack([lo[..., 0], hi[..., 1]], axis=-1),
        ],
        axis=-2,
    )
    for e in (corners[..., 1, :] - corners[..., 0, :], corners[..., 3, :] - corners[..., 0, :]):
        proj_obb = np.einsum("...kd,...d->...k", corners, e)
        proj_box = np.einsum("...kd,...d->...k", box, e)
        sep |= (proj_obb.max(-1) < proj_box.min(-1)) | (proj_obb.min(-1) > proj_box.max(-1))
    return ~sep
