# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled z-depth ray caster.

Arithmetic mirrors ``_raycast_py.raycast`` operation for operation so both
paths produce bit-identical fields.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()


cdef inline void _slab(double origin, double d, double lo_b, double hi_b,
                       double *lo, double *hi) noexcept nogil:
    cdef double t1, t2
    if d != 0.0:
        t1 = (lo_b - origin) / d
        t2 = (hi_b - origin) / d
        if t1 < t2:
            lo[0] = t1
            hi[0] = t2
        else:
            lo[0] = t2
            hi[0] = t1
    elif lo_b <= origin and origin <= hi_b:
        lo[0] = -INFINITY
        hi[0] = INFINITY
    else:
        lo[0] = INFINITY
        hi[0] = -INFINITY


def raycast(const cnp.int64_t[::1] rows, const cnp.int64_t[::1] cols,
            int height, int width, double cam_x, double cam_y, double cam_z,
            double fwd_x, double fwd_y, double focal,
            const double[:, ::1] boxes, const double[:, ::1] cylinders,
            double far_limit):
    cdef Py_ssize_t nr = rows.shape[0]
    cdef Py_ssize_t ncol = cols.shape[0]
    cdef Py_ssize_t nb = boxes.shape[0]
    cdef Py_ssize_t nc = cylinders.shape[0]
    out_arr = np.empty((nr, ncol), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    # per-column terms, one slot per obstacle
    cdef double[::1] xy_lo = np.empty(max(nb, 1))
    cdef double[::1] xy_hi = np.empty(max(nb, 1))
    cdef double[::1] side_t = np.empty(max(nc, 1))
    cdef double right_x = -fwd_y
    cdef double right_y = fwd_x
    cdef double half_w = width * 0.5
    cdef double half_h = height * 0.5
    cdef Py_ssize_t ii, jj, k
    cdef double a, dx, dy, dz, best
    cdef double lox, hix, loy, hiy, loz, hiz, t_in, t_out
    cdef double ox, oy, qa, qb, qc, disc, t, z, px, py, r, h

    with nogil:
        for jj in range(ncol):
            a = (cols[jj] + 0.5 - half_w) / focal
            dx = fwd_x + a * right_x
            dy = fwd_y + a * right_y
            for k in range(nb):
                _slab(cam_x, dx, boxes[k, 0], boxes[k, 1], &lox, &hix)
                _slab(cam_y, dy, boxes[k, 2], boxes[k, 3], &loy, &hiy)
                xy_lo[k] = lox if lox > loy else loy
                xy_hi[k] = hix if hix < hiy else hiy
            for k in range(nc):
                ox = cam_x - cylinders[k, 0]
                oy = cam_y - cylinders[k, 1]
                r = cylinders[k, 2]
                qa = dx * dx + dy * dy
                qb = 2.0 * (ox * dx + oy * dy)
                qc = ox * ox + oy * oy - r * r
                disc = qb * qb - 4.0 * qa * qc
                if disc >= 0.0:
                    side_t[k] = (-qb - sqrt(disc)) / (2.0 * qa)
                else:
                    side_t[k] = -INFINITY
            for ii in range(nr):
                dz = (half_h - (rows[ii] + 0.5)) / focal
                best = far_limit
                for k in range(nb):
                    _slab(cam_z, dz, 0.0, boxes[k, 4], &loz, &hiz)
                    t_in = xy_lo[k] if xy_lo[k] > loz else loz
                    t_out = xy_hi[k] if xy_hi[k] < hiz else hiz
                    if t_in <= t_out and t_in > 0.0 and t_in < best:
                        best = t_in
                for k in range(nc):
                    h = cylinders[k, 3]
                    t = side_t[k]
                    if t > 0.0:
                        z = cam_z + t * dz
                        if z >= 0.0 and z <= h and t < best:
                            best = t
                    if dz < 0.0 and cam_z > h:
                        ox = cam_x - cylinders[k, 0]
                        oy = cam_y - cylinders[k, 1]
                        r = cylinders[k, 2]
                        t = (h - cam_z) / dz
                        px = ox + t * dx
                        py = oy + t * dy
                        if px * px + py * py <= r * r and t > 0.0 and t < best:
                            best = t
                out[ii, jj] = best
    return out_arr
