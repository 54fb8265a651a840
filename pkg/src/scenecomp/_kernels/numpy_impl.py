"""Pure-numpy kernel implementations.

These mirror the compiled kernels in ``_core.pyx`` operation-for-operation:
the same edge functions, the same interpolation formula, the same tie-breaking
(first minimum wins). Together with ``-ffp-contract=off`` on the C side, both
backends produce bit-identical outputs, which the kernel tests assert.

Rasterization conventions (shared by both backends):
  - pixel centers sit at integer coordinates (x = column, y = row)
  - triangles with any vertex at depth <= 1e-9 are culled (no near-plane
    clipping; meshes are expected fully in front of the camera)
  - coverage uses a top-left fill rule so triangles sharing an edge never
    both claim a boundary pixel
"""

from __future__ import annotations

import numpy as np

DEPTH_EPS = 1e-9
_PIXEL_BATCH = 4_000_000


def raster_depth(xy: np.ndarray, z: np.ndarray, faces: np.ndarray, width: int, height: int) -> np.ndarray:
    """Z-buffer rasterization of projected triangles.

    Args:
        xy: (N,2) float64 projected vertex pixel coordinates.
        z: (N,) float64 vertex depths (camera-space z).
        faces: (M,3) int32 vertex indices.
        width, height: raster dimensions.

    Returns:
        (height, width) float64 depth map, +inf where uncovered.
    """
    depth = np.full((height, width), np.inf)
    if len(faces) == 0:
        return depth
    tri = xy[faces].astype(float, copy=True)  # (M,3,2)
    tz = z[faces].astype(float, copy=True)  # (M,3)
    keep = np.isfinite(tri).all(axis=(1, 2)) & (tz > DEPTH_EPS).all(axis=1)
    tri, tz = tri[keep], tz[keep]
    if len(tri) == 0:
        return depth

    # orient consistently: swap vertices 1<->2 where the signed area is negative
    area = (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1]) - (
        tri[:, 1, 1] - tri[:, 0, 1]
    ) * (tri[:, 2, 0] - tri[:, 0, 0])
    flip = area < 0.0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    tz[flip] = tz[flip][:, [0, 2, 1]]
    area = np.where(flip, -area, area)
    keep = area > 0.0
    tri, tz, area = tri[keep], tz[keep], area[keep]
    if len(tri) == 0:
        return depth

    # bounding boxes over integer pixel centers
    x0 = np.maximum(np.ceil(tri[:, :, 0].min(axis=1)), 0.0).astype(np.int64)
    x1 = np.minimum(np.floor(tri[:, :, 0].max(axis=1)), width - 1).astype(np.int64)
    y0 = np.maximum(np.ceil(tri[:, :, 1].min(axis=1)), 0.0).astype(np.int64)
    y1 = np.minimum(np.floor(tri[:, :, 1].max(axis=1)), height - 1).astype(np.int64)
    counts = np.maximum(x1 - x0 + 1, 0) * np.maximum(y1 - y0 + 1, 0)
    nonempty = counts > 0
    tri, tz, area = tri[nonempty], tz[nonempty], area[nonempty]
    x0, x1, y0, y1, counts = x0[nonempty], x1[nonempty], y0[nonempty], y1[nonempty], counts[nonempty]
    if len(tri) == 0:
        return depth

    flat = depth.ravel()
    # batch triangles so the flattened (pixel, triangle) table stays bounded
    csum = np.cumsum(counts)
    start = 0
    while start < len(tri):
        base = csum[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(csum, base + _PIXEL_BATCH)) + 1
        stop = min(max(stop, start + 1), len(tri))
        sl = slice(start, stop)
        _raster_batch(
            flat, width, tri[sl], tz[sl], area[sl], x0[sl], x1[sl], y0[sl], y1[sl], counts[sl]
        )
        start = stop
    return depth


def _raster_batch(flat, width, tri, tz, area, x0, x1, y0, y1, counts):
    total = int(counts.sum())
    fidx = np.repeat(np.arange(len(tri)), counts)
    offs = np.arange(total) - np.repeat(np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    bw = (x1 - x0 + 1)[fidx]
    px = (x0[fidx] + offs % bw).astype(float)
    py = (y0[fidx] + offs // bw).astype(float)

    v0, v1, v2 = tri[fidx, 0], tri[fidx, 1], tri[fidx, 2]
    w0 = (v2[:, 0] - v1[:, 0]) * (py - v1[:, 1]) - (v2[:, 1] - v1[:, 1]) * (px - v1[:, 0])
    w1 = (v0[:, 0] - v2[:, 0]) * (py - v2[:, 1]) - (v0[:, 1] - v2[:, 1]) * (px - v2[:, 0])
    w2 = (v1[:, 0] - v0[:, 0]) * (py - v0[:, 1]) - (v1[:, 1] - v0[:, 1]) * (px - v0[:, 0])

    inside = (
        _edge_ok(w0, v2[:, 0] - v1[:, 0], v2[:, 1] - v1[:, 1])
        & _edge_ok(w1, v0[:, 0] - v2[:, 0], v0[:, 1] - v2[:, 1])
        & _edge_ok(w2, v1[:, 0] - v0[:, 0], v1[:, 1] - v0[:, 1])
    )
    if not inside.any():
        return
    zi = (w0 * tz[fidx, 0] + w1 * tz[fidx, 1] + w2 * tz[fidx, 2]) / area[fidx]
    lin = (py.astype(np.int64) * width + px.astype(np.int64))[inside]
    np.minimum.at(flat, lin, zi[inside])


def _edge_ok(w, dx, dy):
    # top-left rule: boundary pixels belong to edges heading down, or
    # horizontal edges heading left
    return (w > 0.0) | ((w == 0.0) & ((dy > 0.0) | ((dy == 0.0) & (dx < 0.0))))


def chamfer_min_sq(points: np.ndarray, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point squared distance to the nearest vertex (and its index)."""
    n, m = len(points), len(verts)
    d2 = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    chunk = max(1, _PIXEL_BATCH // max(m, 1))
    for s in range(0, n, chunk):
        p = points[s : s + chunk]
        d = ((p[:, None, :] - verts[None, :, :]) ** 2).sum(axis=-1)
        best = d.argmin(axis=1)
        idx[s : s + chunk] = best
        d2[s : s + chunk] = np.take_along_axis(d, best[:, None], axis=1)[:, 0]
    return d2, idx


def bilinear_sample(img: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear lookup at continuous pixel coordinates, clamped to the border.

    Args:
        img: (H,W,C) float64.
        uv: (N,2) float64 (x, y) sample positions.

    Returns:
        (N,C) float64 samples.
    """
    h, w = img.shape[:2]
    x = np.clip(uv[:, 0], 0.0, w - 1.0)
    y = np.clip(uv[:, 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1.0 - fy) * top + fy * bot


def segment_distance_2d(pts: np.ndarray, segs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance from each 2D point to the nearest segment of a set.

    Args:
        pts: (N,2) float64 points.
        segs: (E,4) float64 segments (ax, ay, bx, by).

    Returns:
        (dist, idx, t): distances (N,), nearest segment index (N,) int64,
        and the clamped foot-point parameter t in [0,1] (N,).
    """
    n, e = len(pts), len(segs)
    dist = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    tout = np.empty(n)
    ax, ay = segs[:, 0], segs[:, 1]
    ex, ey = segs[:, 2] - ax, segs[:, 3] - ay
    ll = ex * ex + ey * ey
    safe = np.where(ll > 0.0, ll, 1.0)
    chunk = max(1, _PIXEL_BATCH // max(e, 1))
    for s in range(0, n, chunk):
        p = pts[s : s + chunk]
        rx = p[:, 0:1] - ax[None, :]
        ry = p[:, 1:2] - ay[None, :]
        t = (rx * ex[None, :] + ry * ey[None, :]) / safe[None, :]
        t = np.where(ll[None, :] > 0.0, np.clip(t, 0.0, 1.0), 0.0)
        dx = rx - t * ex[None, :]
        dy = ry - t * ey[None, :]
        d2 = dx * dx + dy * dy
        best = d2.argmin(axis=1)
        rows = np.arange(len(p))
        idx[s : s + chunk] = best
        dist[s : s + chunk] = np.sqrt(d2[rows, best])
        tout[s : s + chunk] = t[rows, best]
    return dist, idx, tout
