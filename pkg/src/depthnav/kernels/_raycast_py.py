"""Numpy ray caster, the fallback when the compiled kernel is unavailable.

Every expression follows the same operand order as ``_raycast.pyx``, and
max/min are exact, so both paths agree bit for bit.
"""

import numpy as np


def _slab(origin, d, lo_b, hi_b):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t1 = (lo_b - origin) / d
        t2 = (hi_b - origin) / d
    lo = np.where(t1 < t2, t1, t2)
    hi = np.where(t1 < t2, t2, t1)
    zero = d == 0.0
    if lo_b <= origin <= hi_b:
        return np.where(zero, -np.inf, lo), np.where(zero, np.inf, hi)
    return np.where(zero, np.inf, lo), np.where(zero, -np.inf, hi)


def raycast(rows, cols, height, width, cam_x, cam_y, cam_z, fwd_x, fwd_y, focal,
            boxes, cylinders, far_limit):
    right_x = -fwd_y
    right_y = fwd_x
    half_w = width * 0.5
    half_h = height * 0.5
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    # row terms as (R, 1), column terms as (1, C)
    dz = ((half_h - (rows + 0.5)) / focal)[:, None]
    a = (cols + 0.5 - half_w) / focal
    dx = (fwd_x + a * right_x)[None, :]
    dy = (fwd_y + a * right_y)[None, :]
    best = np.full((rows.size, cols.size), float(far_limit))

    for xmin, xmax, ymin, ymax, h in np.asarray(boxes, dtype=np.float64).reshape(-1, 5):
        lox, hix = _slab(cam_x, dx, xmin, xmax)
        loy, hiy = _slab(cam_y, dy, ymin, ymax)
        loz, hiz = _slab(cam_z, dz, 0.0, h)
        t_in = np.maximum(np.maximum(lox, loy), loz)
        t_out = np.minimum(np.minimum(hix, hiy), hiz)
        hit = (t_in <= t_out) & (t_in > 0.0) & (t_in < best)
        best = np.where(hit, t_in, best)

    # misses produce inf/nan intermediates; the hit masks reject them
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for cx, cy, r, h in np.asarray(cylinders, dtype=np.float64).reshape(-1, 4):
            ox = cam_x - cx
            oy = cam_y - cy
            qa = dx * dx + dy * dy
            qb = 2.0 * (ox * dx + oy * dy)
            qc = ox * ox + oy * oy - r * r
            disc = qb * qb - 4.0 * qa * qc
            t = np.where(disc >= 0.0, (-qb - np.sqrt(disc)) / (2.0 * qa), -np.inf)
            z = cam_z + t * dz
            hit = (t > 0.0) & (z >= 0.0) & (z <= h) & (t < best)
            best = np.where(hit, t, best)
            if cam_z > h:
                t = (h - cam_z) / dz
                px = ox + t * dx
                py = oy + t * dy
                hit = (dz < 0.0) & (px * px + py * py <= r * r) & (t > 0.0) & (t < best)
                best = np.where(hit, t, best)
    return best
