# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core.

Mirrors ``numpy_impl`` operation-for-operation (same edge functions, same
interpolation formulas, same first-minimum tie-breaking) so both backends
produce bit-identical results; the extension is compiled with
``-ffp-contract=off`` to keep IEEE semantics aligned with numpy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, floor, isfinite, sqrt

cdef double DEPTH_EPS = 1e-9


cdef inline bint _edge_ok(double w, double dx, double dy) noexcept nogil:
    return w > 0.0 or (w == 0.0 and (dy > 0.0 or (dy == 0.0 and dx < 0.0)))


def raster_depth(double[:, ::1] xy, double[::1] z, int[:, ::1] faces,
                 int width, int height):
    depth_arr = np.full((height, width), np.inf)
    cdef double[:, ::1] depth = depth_arr
    cdef Py_ssize_t m = faces.shape[0]
    cdef Py_ssize_t f, ix, iy, bx0, bx1, by0, by1
    cdef int i0, i1, i2
    cdef double ax, ay, bx, by, cx, cy, za, zb, zc
    cdef double area, lo, hi, tmp, px, py, w0, w1, w2, zi
    with nogil:
        for f in range(m):
            i0 = faces[f, 0]
            i1 = faces[f, 1]
            i2 = faces[f, 2]
            za = z[i0]
            zb = z[i1]
            zc = z[i2]
            if not (za > DEPTH_EPS and zb > DEPTH_EPS and zc > DEPTH_EPS):
                continue
            ax = xy[i0, 0]
            ay = xy[i0, 1]
            bx = xy[i1, 0]
            by = xy[i1, 1]
            cx = xy[i2, 0]
            cy = xy[i2, 1]
            if not (isfinite(ax) and isfinite(ay) and isfinite(bx)
                    and isfinite(by) and isfinite(cx) and isfinite(cy)):
                continue
            area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if area < 0.0:
                tmp = bx; bx = cx; cx = tmp
                tmp = by; by = cy; cy = tmp
                tmp = zb; zb = zc; zc = tmp
                area = -area
            if area == 0.0:
                continue

            lo = ax
            if bx < lo: lo = bx
            if cx < lo: lo = cx
            hi = ax
            if bx > hi: hi = bx
            if cx > hi: hi = cx
            bx0 = <Py_ssize_t>ceil(lo)
            if bx0 < 0: bx0 = 0
            bx1 = <Py_ssize_t>floor(hi)
            if bx1 > width - 1: bx1 = width - 1

            lo = ay
            if by < lo: lo = by
            if cy < lo: lo = cy
            hi = ay
            if by > hi: hi = by
            if cy > hi: hi = cy
            by0 = <Py_ssize_t>ceil(lo)
            if by0 < 0: by0 = 0
            by1 = <Py_ssize_t>floor(hi)
            if by1 > height - 1: by1 = height - 1

            if bx1 < bx0 or by1 < by0:
                continue

            for iy in range(by0, by1 + 1):
                py = <double>iy
                for ix in range(bx0, bx1 + 1):
                    px = <double>ix
                    w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                    if not _edge_ok(w0, cx - bx, cy - by):
                        continue
                    w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                    if not _edge_ok(w1, ax - cx, ay - cy):
                        continue
                    w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                    if not _edge_ok(w2, bx - ax, by - ay):
                        continue
                    zi = (w0 * za + w1 * zb + w2 * zc) / area
                    if zi < depth[iy, ix]:
                        depth[iy, ix] = zi
    return depth_arr


def chamfer_min_sq(double[:, ::1] points, double[:, ::1] verts):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t m = verts.shape[0]
    d2_arr = np.empty(n)
    idx_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] d2 = d2_arr
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef Py_ssize_t i, j, bi
    cdef double px, py, pz, dx, dy, dz, d, best
    with nogil:
        for i in range(n):
            px = points[i, 0]
            py = points[i, 1]
            pz = points[i, 2]
            best = INFINITY
            bi = 0
            for j in range(m):
                dx = px - verts[j, 0]
                dy = py - verts[j, 1]
                dz = pz - verts[j, 2]
                d = dx * dx + dy * dy + dz * dz
                if d < best:
                    best = d
                    bi = j
            d2[i] = best
            idx[i] = bi
    return d2_arr, idx_arr


def bilinear_sample(double[:, :, ::1] img, double[:, ::1] uv):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t c = img.shape[2]
    cdef Py_ssize_t n = uv.shape[0]
    out_arr = np.empty((n, c))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, x0, y0, x1, y1
    cdef double x, y, fx, fy, top, bot
    with nogil:
        for i in range(n):
            x = uv[i, 0]
            y = uv[i, 1]
            if x != x: x = 0.0
            if y != y: y = 0.0
            if x < 0.0: x = 0.0
            if x > w - 1.0: x = w - 1.0
            if y < 0.0: y = 0.0
            if y > h - 1.0: y = h - 1.0
            x0 = <Py_ssize_t>floor(x)
            y0 = <Py_ssize_t>floor(y)
            x1 = x0 + 1
            if x1 > w - 1: x1 = w - 1
            y1 = y0 + 1
            if y1 > h - 1: y1 = h - 1
            fx = x - x0
            fy = y - y0
            for k in range(c):
                top = (1.0 - fx) * img[y0, x0, k] + fx * img[y0, x1, k]
                bot = (1.0 - fx) * img[y1, x0, k] + fx * img[y1, x1, k]
                out[i, k] = (1.0 - fy) * top + fy * bot
    return out_arr


def segment_distance_2d(double[:, ::1] pts, double[:, ::1] segs):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t e = segs.shape[0]
    dist_arr = np.empty(n)
    idx_arr = np.empty(n, dtype=np.int64)
    t_arr = np.empty(n)
    cdef double[::1] dist = dist_arr
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[::1] tout = t_arr
    cdef Py_ssize_t i, j, bi
    cdef double px, py, ax, ay, ex, ey, ll, rx, ry, t, dx, dy, d, best, bt
    with nogil:
        for i in range(n):
            px = pts[i, 0]
            py = pts[i, 1]
            best = INFINITY
            bi = 0
            bt = 0.0
            for j in range(e):
                ax = segs[j, 0]
                ay = segs[j, 1]
                ex = segs[j, 2] - ax
                ey = segs[j, 3] - ay
                ll = ex * ex + ey * ey
                rx = px - ax
                ry = py - ay
                if ll > 0.0:
                    t = (rx * ex + ry * ey) / ll
                    if t < 0.0: t = 0.0
                    if t > 1.0: t = 1.0
                else:
                    t = 0.0
                dx = rx - t * ex
                dy = ry - t * ey
                d = dx * dx + dy * dy
                if d < best:
                    best = d
                    bi = j
                    bt = t
            dist[i] = sqrt(best)
            idx[i] = bi
            tout[i] = bt
    return dist_arr, idx_arr, t_arr
