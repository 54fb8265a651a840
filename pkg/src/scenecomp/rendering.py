"""Novel-view rendering: depth rasterization, inverse warping, occlusion
reasoning, ratio-blended shadows, and the deterministic composite.

Depth maps are (H,W) float64 arrays in meters with +inf at uncovered pixels;
images are (H,W,3) linear float64 in [0,1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import DimensionMismatch
from .geometry import CameraView, Pose6DoF
from .meshes import TriangleMesh


@dataclass
class CompositeMask:
    """Object coverage after warping/occlusion plus the missing-texture flags."""

    coverage: np.ndarray  # (H,W) float in [0,1]
    missing: np.ndarray  # (H,W) bool, subset of coverage support

    def __post_init__(self):
        if self.coverage.shape != self.missing.shape:
            raise DimensionMismatch("coverage/missing shape mismatch")

    def intersect(self, other: "CompositeMask") -> "CompositeMask":
        cov = self.coverage * other.coverage
        return CompositeMask(cov, (self.missing | other.missing) & (cov > 0.0))


def project_mesh(mesh: TriangleMesh, pose: Pose6DoF, cam: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """World-place the mesh and project: returns pixel coords and depths."""
    world = pose.transform(mesh.vertices)
    return cam.project(world)


def rasterize_depth(mesh: TriangleMesh, pose: Pose6DoF, cam: CameraView) -> np.ndarray:
    """Z-buffer depth of the posed mesh; +inf where uncovered.

    Back-face culling is off; faces touching the camera plane are dropped
    rather than clipped.
    """
    uv, z = project_mesh(mesh, pose, cam)
    return _kernels.raster_depth(uv, z, mesh.faces, cam.width, cam.height)


def inverse_warp(
    depth_t: np.ndarray,
    cam_t: CameraView,
    cam_s: CameraView,
    image_s: np.ndarray,
    source_mask: np.ndarray | None = None,
    mode: str = "bilinear",
) -> tuple[np.ndarray, CompositeMask]:
    """Texture the target depth by sampling the source view.

    Every covered target pixel is unprojected with (depth_t, cam_t), projected
    into the source camera, and sampled there. Pixels landing outside the
    source image (or outside its silhouette, when given) are flagged missing
    and output 0.
    """
    h, w = depth_t.shape
    if (h, w) != (cam_t.height, cam_t.width):
        raise DimensionMismatch("depth map does not match target camera dims")
    out = np.zeros((h, w, 3))
    covered = np.isfinite(depth_t)
    mask = CompositeMask(covered.astype(float), np.zeros((h, w), dtype=bool))
    ys, xs = np.nonzero(covered)
    if len(xs) == 0:
        return out, mask

    uv_t = np.column_stack([xs.astype(float), ys.astype(float)])
    pts = cam_t.unproject(uv_t, depth_t[ys, xs])
    uv_s, z_s = cam_s.project(pts)
    sh, sw = image_s.shape[:2]

    ok = z_s > 0.0
    if mode == "nearest":
        su = np.round(uv_s[:, 0]).astype(np.int64)
        sv = np.round(uv_s[:, 1]).astype(np.int64)
        ok &= (su >= 0) & (su <= sw - 1) & (sv >= 0) & (sv <= sh - 1)
        sui = np.clip(su, 0, sw - 1)
        svi = np.clip(sv, 0, sh - 1)
        if source_mask is not None:
            ok &= source_mask[svi, sui]
        colors = np.asarray(image_s, dtype=float)[svi, sui]
    elif mode == "bilinear":
        ok &= (
            (uv_s[:, 0] >= 0.0)
            & (uv_s[:, 0] <= sw - 1.0)
            & (uv_s[:, 1] >= 0.0)
            & (uv_s[:, 1] <= sh - 1.0)
        )
        if source_mask is not None:
            su = np.clip(np.round(uv_s[:, 0]), 0, sw - 1).astype(np.int64)
            sv = np.clip(np.round(uv_s[:, 1]), 0, sh - 1).astype(np.int64)
            ok &= source_mask[sv, su]
        safe_uv = np.where(np.isfinite(uv_s), uv_s, 0.0)
        colors = _kernels.bilinear_sample(np.asarray(image_s, dtype=float), safe_uv)
    else:
        raise ValueError(f"unknown warp mode {mode!r}")

    colors[~ok] = 0.0
    out[ys, xs] = colors
    mask.missing[ys[~ok], xs[~ok]] = True
    return out, mask


def occlusion_mask(object_depth: np.ndarray, scene_depth: np.ndarray, eps_z: float = 0.1) -> CompositeMask:
    """Per-pixel visibility: object in front of the scene within tolerance."""
    if object_depth.shape != scene_depth.shape:
        raise DimensionMismatch(
            f"object depth {object_depth.shape} vs scene depth {scene_depth.shape}"
        )
    if eps_z < 0:
        raise ValueError("eps_z must be >= 0")
    visible = np.isfinite(object_depth) & (object_depth < scene_depth + eps_z)
    return CompositeMask(visible.astype(float), np.zeros_like(visible, dtype=bool))


def hemisphere_lights(n: int, min_z: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic Fibonacci spiral of upward unit directions + cosine weights.

    min_z excludes grazing directions whose ground projections would be
    effectively unbounded while contributing almost nothing to irradiance.
    """
    i = np.arange(n)
    z = min_z + (1.0 - min_z) * (i + 0.5) / n
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    r = np.sqrt(1.0 - z * z)
    dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return dirs, z.copy()


def render_shadow(
    mesh: TriangleMesh,
    pose: Pose6DoF,
    cam: CameraView,
    ground_z: float,
    n_lights: int = 64,
    lightmap_res: int = 256,
    weight_floor: float = 0.05,
) -> np.ndarray:
    """Ground-shadow weight map in (0,1]: irradiance with the occluder divided
    by irradiance without it, under a hemispherical rig of directional lights.

    Visibility per light uses an orthographic shadow map rasterized with the
    shared z-buffer kernel. Pixels whose ground point lies outside the union
    of possible shadow footprints keep weight exactly 1.
    """
    h, w = cam.height, cam.width
    weight = np.ones((h, w))
    if len(mesh.faces) == 0:
        return weight
    verts = pose.transform(mesh.vertices)
    if verts[:, 2].min() < ground_z - 1e-6:
        raise ValueError("mesh dips below the ground plane")
    dirs, wts = hemisphere_lights(n_lights)

    # union bbox of per-light shadow footprints on the ground plane
    rel_z = verts[:, 2] - ground_z
    foot_min = np.array([np.inf, np.inf])
    foot_max = np.array([-np.inf, -np.inf])
    for L in dirs:
        off = verts[:, :2] - rel_z[:, None] * (L[:2] / L[2])
        foot_min = np.minimum(foot_min, off.min(axis=0))
        foot_max = np.maximum(foot_max, off.max(axis=0))
    foot_min -= 0.5
    foot_max += 0.5

    # ground intersection of every camera ray
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    c = cam.center()
    rays = cam.unproject(np.column_stack([us.ravel(), vs.ravel()]), np.ones(h * w)) - c
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground_z - c[2]) / rays[:, 2]
    g = c + t[:, None] * rays
    hit = (
        (t > 0.0)
        & np.isfinite(t)
        & (g[:, 0] >= foot_min[0])
        & (g[:, 0] <= foot_max[0])
        & (g[:, 1] >= foot_min[1])
        & (g[:, 1] <= foot_max[1])
    )
    if not hit.any():
        return weight
    gpts = g[hit]

    blocked_wt = np.zeros(len(gpts))
    up = np.array([0.0, 0.0, 1.0])
    for L, wl in zip(dirs, wts):
        # orthographic light frame
        ax1 = np.cross(up, L)
        n1 = np.linalg.norm(ax1)
        if n1 < 1e-9:
            ax1 = np.array([1.0, 0.0, 0.0])
        else:
            ax1 /= n1
        ax2 = np.cross(L, ax1)
        s = verts @ ax1
        tt = verts @ ax2
        r = -(verts @ L)
        r = r - r.min() + 1.0  # raster kernel needs positive "depth"

        s0, s1 = s.min(), s.max()
        t0, t1 = tt.min(), tt.max()
        cell = max(s1 - s0, t1 - t0, 1e-6) / (lightmap_res - 3)
        lx = (s - s0) / cell + 1.0
        ly = (tt - t0) / cell + 1.0
        lmap = _kernels.raster_depth(
            np.column_stack([lx, ly]), r, mesh.faces, lightmap_res, lightmap_res
        )

        gs = gpts @ ax1
        gt = gpts @ ax2
        gr = -(gpts @ L) - (-(verts @ L)).min() + 1.0
        px = np.round((gs - s0) / cell + 1.0).astype(np.int64)
        py = np.round((gt - t0) / cell + 1.0).astype(np.int64)
        inside = (px >= 0) & (px < lightmap_res) & (py >= 0) & (py < lightmap_res)
        depth_at = np.full(len(gpts), np.inf)
        depth_at[inside] = lmap[py[inside], px[inside]]
        blocked_wt += wl * (depth_at < gr - 1e-2)

    ratio = 1.0 - blocked_wt / wts.sum()
    flat = weight.ravel()
    flat[np.nonzero(hit)[0]] = np.maximum(ratio, weight_floor)
    return flat.reshape(h, w)


def ground_depth_map(cam: CameraView, ground_z: float) -> np.ndarray:
    """Depth of the z = ground_z plane along each camera ray (+inf if missed)."""
    us, vs = np.meshgrid(np.arange(cam.width, dtype=float), np.arange(cam.height, dtype=float))
    c = cam.center()
    uv = np.column_stack([us.ravel(), vs.ravel()])
    rays = cam.unproject(uv, np.ones(uv.shape[0])) - c
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground_z - c[2]) / rays[:, 2]
    pts = c + t[:, None] * rays
    _, depth = cam.project(pts)
    depth = np.where((t > 0) & np.isfinite(t), depth, np.inf)
    return depth.reshape(cam.height, cam.width)


def _reinhard_transfer(obj: np.ndarray, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """Mean/variance color transfer from the inner band stats to the outer's."""
    out = obj.copy()
    for ch in range(3):
        mu_i, sd_i = inner[:, ch].mean(), inner[:, ch].std()
        mu_o, sd_o = outer[:, ch].mean(), outer[:, ch].std()
        scale = sd_o / max(sd_i, 1e-6)
        out[:, :, ch] = (obj[:, :, ch] - mu_i) * scale + mu_o
    return np.clip(out, 0.0, 1.0)


def composite(
    background: np.ndarray,
    object_img: np.ndarray,
    mask: CompositeMask,
    shadow_weight: np.ndarray | None = None,
    feather_px: float = 3.0,
    band_px: int = 8,
    color_transfer: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Blend the rendered object over the (shadowed) background.

    Missing-texture pixels are filled from the nearest textured object pixel;
    a Reinhard-style transfer matches the object's boundary band to the
    surrounding background band; a linear feather softens the boundary.

    Returns (composited image, untouched bool mask). Untouched pixels (no
    coverage, shadow weight exactly 1) carry bit-identical background values.
    """
    if background.shape != object_img.shape:
        raise DimensionMismatch("background/object image dims differ")
    if background.shape[:2] != mask.coverage.shape:
        raise DimensionMismatch("mask dims differ from image dims")
    if shadow_weight is not None and shadow_weight.shape != mask.coverage.shape:
        raise DimensionMismatch("shadow weight dims differ from image dims")

    if shadow_weight is not None:
        out = background * shadow_weight[:, :, None]
        untouched = shadow_weight >= 1.0
    else:
        out = background.copy()
        untouched = np.ones(mask.coverage.shape, dtype=bool)

    support = mask.coverage > 0.0
    valid = support & ~mask.missing
    if not valid.any():
        return np.clip(out, 0.0, 1.0), untouched

    obj = np.asarray(object_img, dtype=float).copy()
    holes = support & mask.missing
    if holes.any():
        _, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
        obj[holes] = obj[iy[holes], ix[holes]]

    if color_transfer:
        interior = ndimage.distance_transform_edt(support)
        exterior = ndimage.distance_transform_edt(~support)
        inner_band = support & (interior <= band_px)
        outer_band = (~support) & (exterior <= band_px) & (exterior > 0)
        if inner_band.sum() >= 16 and outer_band.sum() >= 16:
            obj = _reinhard_transfer(obj, obj[inner_band], out[outer_band])

    if feather_px > 0.0 and (~support).any():
        interior = ndimage.distance_transform_edt(support)
        alpha = np.minimum(interior / feather_px, 1.0) * mask.coverage
    else:
        alpha = mask.coverage.astype(float)
    alpha = np.where(support, alpha, 0.0)

    a3 = alpha[:, :, None]
    out = a3 * obj + (1.0 - a3) * out
    untouched &= ~support
    return np.clip(out, 0.0, 1.0), untouched
