"""Synthetic scene fixtures: a straight two-lane road with a wall occluder,
procedurally textured vehicle assets, and observation bundles for the asset
builder. Everything here is deterministic given its arguments.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import imgio
from .assets import AssetBank, AssetRecord, SourceView, save_bank
from .geometry import CameraView, look_at_camera, pose_from_bev
from .lanemap import GroundElevation, Lane, LaneGraph, save_map
from .meshes import TriangleMesh, make_icosasphere
from .rendering import rasterize_depth

WALL_X = (30.0, 30.4)  # slab extent along x
WALL_Y = (2.6, 7.0)
WALL_H = 2.5


def make_demo_map(length: float = 240.0, lane_width: float = 3.5) -> tuple[LaneGraph, GroundElevation]:
    """Two parallel straight lanes along +x on flat ground."""
    xs = np.linspace(0.0, length, 25)
    lanes = [
        Lane("right", np.column_stack([xs, np.full_like(xs, -lane_width / 2)]), lane_width, []),
        Lane("left", np.column_stack([xs, np.full_like(xs, lane_width / 2)]), lane_width, []),
    ]
    # coverage reaches well past the lane ends: actors extrapolate beyond the
    # final centerline point for the rollout duration
    elev = GroundElevation(
        origin=(-60.0, -40.0), cell_size=10.0, data=np.zeros((9, 55))
    )
    return LaneGraph(lanes), elev


def ego_camera(x: float, width: int = 256, height: int = 192) -> CameraView:
    """Forward camera mounted 1.6 m up, looking slightly down the road."""
    f = 0.9 * width
    return look_at_camera(
        eye=(x, 0.0, 1.6),
        target=(x + 40.0, 0.0, 0.9),
        fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
    )


def vehicle_mesh(length: float, width: float, height: float, subdivisions: int = 3) -> TriangleMesh:
    """Ellipsoidal car-sized mesh with its base on z = 0."""
    m = make_icosasphere(subdivisions)
    v = m.vertices * np.array([length / 2.0, width / 2.0, height / 2.0])
    v[:, 2] += height / 2.0
    return TriangleMesh(v, m.faces)


def _vehicle_texture(points: np.ndarray, base: np.ndarray, accent: np.ndarray, period: float) -> np.ndarray:
    """Smooth 3D stripe pattern: the same world point always gets one color."""
    t = 0.5 + 0.5 * np.sin(2.0 * math.pi * points[:, 0] / period + 3.0 * points[:, 2])
    return base[None, :] * (1.0 - t[:, None]) + accent[None, :] * t[:, None]


def _ellipsoid_normals(points: np.ndarray, axes: np.ndarray, center: np.ndarray) -> np.ndarray:
    n = (points - center) / axes**2
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def render_vehicle_view(
    mesh: TriangleMesh,
    axes: np.ndarray,
    center: np.ndarray,
    cam: CameraView,
    base_color,
    accent_color,
) -> tuple[np.ndarray, np.ndarray]:
    """Shaded source image + silhouette of the canonical-frame vehicle."""
    depth = rasterize_depth(mesh, pose_from_bev(0, 0, 0, 0), cam)
    covered = np.isfinite(depth)
    img = np.zeros((cam.height, cam.width, 3))
    ys, xs = np.nonzero(covered)
    if len(xs):
        pts = cam.unproject(np.column_stack([xs, ys]).astype(float), depth[ys, xs])
        normals = _ellipsoid_normals(pts, axes, center)
        light = np.array([0.45, 0.25, 0.86])
        light /= np.linalg.norm(light)
        lambert = 0.35 + 0.65 * np.clip(normals @ light, 0.0, None)
        tex = _vehicle_texture(pts, np.asarray(base_color, float), np.asarray(accent_color, float), period=1.3)
        img[ys, xs] = np.clip(tex * lambert[:, None], 0.0, 1.0)
    return img, covered


def shade_mesh_view(mesh: TriangleMesh, cam: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Generic shaded render for arbitrary meshes (screen-space normals).

    Used for source views of fitted assets, where no analytic normal exists.
    """
    depth = rasterize_depth(mesh, pose_from_bev(0, 0, 0, 0), cam)
    covered = np.isfinite(depth)
    h, w = depth.shape
    img = np.zeros((h, w, 3))
    ys, xs = np.nonzero(covered)
    if len(xs):
        pts = np.full((h, w, 3), np.nan)
        pts[ys, xs] = cam.unproject(np.column_stack([xs, ys]).astype(float), depth[ys, xs])
        du = np.roll(pts, -1, axis=1) - pts
        dv = np.roll(pts, -1, axis=0) - pts
        n = np.cross(du.reshape(-1, 3), dv.reshape(-1, 3)).reshape(h, w, 3)
        norm = np.linalg.norm(n, axis=2, keepdims=True)
        ok = np.isfinite(norm[:, :, 0]) & (norm[:, :, 0] > 1e-12)
        n = np.where(ok[:, :, None], n / np.where(norm > 0, norm, 1.0), 0.0)
        light = np.array([0.45, 0.25, 0.86])
        light /= np.linalg.norm(light)
        lambert = 0.4 + 0.6 * np.abs(n @ light)
        tex = _vehicle_texture(np.nan_to_num(pts.reshape(-1, 3)), np.array([0.45, 0.45, 0.5]),
                               np.array([0.7, 0.65, 0.55]), period=1.3).reshape(h, w, 3)
        img = np.where(covered[:, :, None], np.clip(tex * lambert[:, :, None], 0.0, 1.0), 0.0)
    return img, covered


_PRESETS = [
    dict(lwh=(4.4, 1.9, 1.5), base=(0.55, 0.08, 0.08), accent=(0.75, 0.55, 0.2)),
    dict(lwh=(4.8, 2.0, 1.7), base=(0.10, 0.18, 0.50), accent=(0.55, 0.65, 0.75)),
    dict(lwh=(4.1, 1.8, 1.4), base=(0.12, 0.40, 0.16), accent=(0.80, 0.80, 0.70)),
]


def make_vehicle_asset(asset_id: str, preset: dict, n_views: int = 9, view_size: tuple[int, int] = (192, 144)) -> AssetRecord:
    l, w, h = preset["lwh"]
    mesh = vehicle_mesh(l, w, h)
    axes = np.array([l / 2.0, w / 2.0, h / 2.0])
    center = np.array([0.0, 0.0, h / 2.0])
    vw, vh = view_size
    views = []
    azimuths = np.linspace(-math.pi, math.pi, n_views, endpoint=False)
    for az in azimuths:
        dist = 9.0
        eye = (dist * math.cos(az), dist * math.sin(az), 1.8)
        cam = look_at_camera(
            eye=eye, target=(0.0, 0.0, h / 2.0),
            fx=1.2 * vw, fy=1.2 * vw, cx=vw / 2.0, cy=vh / 2.0, width=vw, height=vh,
        )
        img, sil = render_vehicle_view(mesh, axes, center, cam, preset["base"], preset["accent"])
        views.append(SourceView(img, sil, cam, theta=az, distance=dist))
    return AssetRecord(asset_id, mesh, views, (l, w, h))


def make_demo_bank(path, n_assets: int = 2) -> AssetBank:
    bank = AssetBank([
        make_vehicle_asset(f"car{k:02d}", _PRESETS[k % len(_PRESETS)])
        for k in range(n_assets)
    ])
    save_bank(bank, path)
    return bank


def _ray_scene(cam: CameraView):
    """Per-pixel first-hit depth and color for the road scene (ground + wall + sky)."""
    h, w = cam.height, cam.width
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    uv = np.column_stack([us.ravel(), vs.ravel()])
    c = cam.center()
    rays = cam.unproject(uv, np.ones(h * w)) - c

    depth = np.full(h * w, np.inf)
    color = np.zeros((h * w, 3))

    # sky gradient
    sky_t = (vs.ravel() / max(h - 1, 1)).clip(0, 1)
    color[:] = np.column_stack([0.36 + 0.1 * sky_t, 0.50 + 0.12 * sky_t, 0.72 + 0.1 * sky_t])

    # ground plane z=0
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = -c[2] / rays[:, 2]
    ok = (tg > 0) & np.isfinite(tg)
    gp = c + tg[:, None] * rays
    checker = ((np.floor(gp[:, 0] / 2.0) + np.floor(gp[:, 1] / 2.0)) % 2.0)
    shade = np.where(checker > 0.5, 0.34, 0.28)
    fade = np.clip(1.0 - np.linalg.norm(gp[:, :2] - c[:2], axis=1) / 400.0, 0.35, 1.0)
    gcol = np.column_stack([shade, shade * 1.02, shade * 0.98]) * fade[:, None]
    _, zg = cam.project(gp)
    take = ok & (zg > 0) & (zg < depth)
    depth[take] = zg[take]
    color[take] = gcol[take]

    # wall slab (front face only is enough at these viewpoints)
    with np.errstate(divide="ignore", invalid="ignore"):
        tw = (WALL_X[0] - c[0]) / rays[:, 0]
    wp = c + tw[:, None] * rays
    okw = (
        (tw > 0)
        & np.isfinite(tw)
        & (wp[:, 1] >= WALL_Y[0])
        & (wp[:, 1] <= WALL_Y[1])
        & (wp[:, 2] >= 0.0)
        & (wp[:, 2] <= WALL_H)
    )
    _, zw = cam.project(wp)
    brick = 0.45 + 0.08 * ((np.floor(wp[:, 1] / 0.8) + np.floor(wp[:, 2] / 0.5)) % 2.0)
    wcol = np.column_stack([brick, brick * 0.92, brick * 0.85])
    take = okw & (zw > 0) & (zw < depth)
    depth[take] = zw[take]
    color[take] = wcol[take]

    return depth.reshape(h, w), color.reshape(h, w, 3)


def make_scene_bundle(
    out_dir,
    n_frames: int = 50,
    width: int = 256,
    height: int = 192,
    ego_speed: float = 6.0,
    n_assets: int = 2,
    static_camera: bool = False,
) -> dict:
    """Write a complete scenario bundle (map, cameras, backgrounds, depths,
    bank, config skeleton) and return the config dict."""
    os.makedirs(out_dir, exist_ok=True)
    graph, elev = make_demo_map()
    map_path = os.path.join(out_dir, "map.json")
    save_map(graph, elev, map_path)

    bank_dir = os.path.join(out_dir, "bank")
    make_demo_bank(bank_dir, n_assets=n_assets)

    bg_dir = os.path.join(out_dir, "background")
    depth_dir = os.path.join(out_dir, "depth")
    os.makedirs(bg_dir, exist_ok=True)
    os.makedirs(depth_dir, exist_ok=True)

    frames = []
    bg_files, depth_files = [], []
    for i in range(n_frames):
        x = 0.0 if static_camera else ego_speed * 0.1 * i
        cam = ego_camera(x - 12.0, width, height)
        frames.append({"t": round(0.1 * i, 3), "P": [float(v) for v in cam.P.reshape(12)]})
        depth, color = _ray_scene(cam)
        bg = os.path.join(bg_dir, f"frame_{i:04d}.png")
        dp = os.path.join(depth_dir, f"frame_{i:04d}.bin")
        imgio.save_image(bg, color)
        imgio.save_depth(dp, depth)
        bg_files.append(os.path.relpath(bg, out_dir))
        depth_files.append(os.path.relpath(dp, out_dir))

    cameras = {"width": width, "height": height, "frames": frames}
    cam_path = os.path.join(out_dir, "cameras.json")
    with open(cam_path, "w") as fh:
        json.dump(cameras, fh)

    config = {
        "map": "map.json",
        "bank": "bank",
        "camera_trajectory": "cameras.json",
        "background_frames": bg_files,
        "scene_depth": depth_files,
        "n_actors": 2,
        "duration_s": round(0.1 * (n_frames - 1), 3),
        "seed": 7,
        "out_dir": "out",
        "shadow": True,
        "color_transfer": True,
        "shadow_lights": 64,
        "workers": 1,
    }
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config, fh, indent=1)
    return config


def make_observation_bundle(obs_dir, name: str, axes_lwh=(4.0, 2.0, 1.6), n_points: int = 1500,
                            n_views: int = 4, img_size: tuple[int, int] = (96, 96), seed: int = 0,
                            corrupt: bool = False) -> str:
    """One synthetic observation: ellipsoid lidar cloud + silhouette views."""
    rng = np.random.default_rng(seed)
    path = os.path.join(obs_dir, name)
    os.makedirs(path, exist_ok=True)
    half = np.asarray(axes_lwh, dtype=float) / 2.0
    u = rng.normal(size=(n_points, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = u * half
    np.save(os.path.join(path, "lidar.npy"), pts)

    sphere = make_icosasphere(3)
    tv = sphere.vertices * half
    mesh = TriangleMesh(tv, sphere.faces)
    w, h = img_size
    views = []
    for k in range(n_views):
        az = 2.0 * math.pi * k / n_views + 0.3
        cam = look_at_camera(
            eye=(8 * math.cos(az), 8 * math.sin(az), 2.0), target=(0, 0, 0),
            fx=1.3 * w, fy=1.3 * w, cx=w / 2.0, cy=h / 2.0, width=w, height=h,
        )
        depth = rasterize_depth(mesh, pose_from_bev(0, 0, 0, 0), cam)
        mask_file = f"view_{k}_mask.png"
        imgio.save_mask(os.path.join(path, mask_file), np.isfinite(depth))
        views.append({"mask": mask_file, "P": [float(x) for x in cam.P.reshape(12)],
                      "width": w, "height": h})
    doc = {"lidar": "lidar.npy", "views": views}
    if corrupt:
        doc["views"][0]["mask"] = "does_not_exist.png"
    with open(os.path.join(path, "observation.json"), "w") as fh:
        json.dump(doc, fh)
    return path
