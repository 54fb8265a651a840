"""End-to-end pipeline: scenario simulation, frame rendering, asset-bank
building, and the embedded self-test oracles.

Artifacts are deterministic functions of (config, seed): randomness flows
from one root seed split per subsystem and per actor, so adding an actor
never perturbs earlier actors' draws.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import imgio, seeding
from .assets import (
    AssetBank,
    AssetRecord,
    RetrievalRequest,
    SourceView,
    covering_arc,
    load_bank,
    retrieve_multi_view,
    retrieve_single_view,
    save_bank,
    score_single_view,
    view_azimuth,
)
from .errors import CollisionDetected, ConfigError, NoValidPlacement, SceneCompError
from .geometry import CameraView, OrientedBox2D, Pose6DoF, pose_from_bev, wrap_angle
from .lanemap import GroundElevation, LaneGraph, load_map
from .meshes import TriangleMesh
from .placement import DEFAULT_FOOTPRINT, Placement, lift_to_6dof, sample_placement
from .rendering import (
    CompositeMask,
    composite,
    ground_depth_map,
    inverse_warp,
    occlusion_mask,
    rasterize_depth,
    render_shadow,
)
from .traffic import Actor, IdmParams, KinematicState, rollout, safe_spawn_speed

SPAWN_GAP_MARGIN = 10.0  # m of bumper clearance enforced between spawns


@dataclass
class ScenarioConfig:
    root: str
    map_path: str
    bank_path: str
    camera_path: str
    background_frames: list[str]
    scene_depth: list[str]
    n_actors: int
    duration_s: float
    seed: int
    out_dir: str
    shadow: bool = True
    color_transfer: bool = True
    shadow_lights: int = 64
    workers: int = 1
    occlusion_eps: float = 0.1
    feather_px: float = 3.0
    band_px: int = 8
    obstacles: list[OrientedBox2D] = field(default_factory=list)


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    doc.update(overrides or {})
    root = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(root, p)

    try:
        cfg = ScenarioConfig(
            root=root,
            map_path=resolve(doc["map"]),
            bank_path=resolve(doc["bank"]),
            camera_path=resolve(doc["camera_trajectory"]),
            background_frames=[resolve(p) for p in doc["background_frames"]],
            scene_depth=[resolve(p) for p in doc["scene_depth"]],
            n_actors=int(doc["n_actors"]),
            duration_s=float(doc["duration_s"]),
            seed=int(doc["seed"]),
            out_dir=resolve(doc.get("out_dir", "out")),
            shadow=bool(doc.get("shadow", True)),
            color_transfer=bool(doc.get("color_transfer", True)),
            shadow_lights=int(doc.get("shadow_lights", 64)),
            workers=int(doc.get("workers", 1)),
            occlusion_eps=float(doc.get("occlusion_eps", 0.1)),
            feather_px=float(doc.get("feather_px", 3.0)),
            band_px=int(doc.get("band_px", 8)),
            obstacles=[
                OrientedBox2D(b["x"], b["y"], b["half_length"], b["half_width"], b.get("heading", 0.0))
                for b in doc.get("obstacles", [])
            ],
        )
    except KeyError as exc:
        raise ConfigError(f"config missing key {exc}") from exc
    if cfg.duration_s <= 0:
        raise ConfigError("duration_s must be positive")
    if cfg.n_actors < 0:
        raise ConfigError("n_actors must be >= 0")
    for p in [cfg.map_path, cfg.camera_path, *cfg.background_frames, *cfg.scene_depth]:
        if not os.path.isfile(p):
            raise ConfigError(f"referenced file missing: {p}")
    if not os.path.isdir(cfg.bank_path):
        raise ConfigError(f"bank directory missing: {cfg.bank_path}")
    return cfg


def load_cameras(path) -> list[CameraView]:
    with open(path) as fh:
        doc = json.load(fh)
    w, h = int(doc["width"]), int(doc["height"])
    return [CameraView(np.asarray(f["P"], float).reshape(3, 4), w, h) for f in doc["frames"]]


def _cam_at(cams: list[CameraView], idx: int) -> CameraView:
    return cams[min(idx, len(cams) - 1)]


# ---------------------------------------------------------------------------
# simulate


def spawn_actors(
    graph: LaneGraph,
    elevation: GroundElevation,
    camera: CameraView,
    n_actors: int,
    seed: int,
    params: IdmParams,
    obstacles: list[OrientedBox2D],
) -> list[Actor]:
    """Place actors on lanes with safe spacing and feasible initial speeds."""
    actors: list[Actor] = []
    boxes: list[OrientedBox2D] = []
    for i in range(n_actors):
        rng = seeding.rng_for(seed, seeding.PLACEMENT, i)
        blockers = list(obstacles) + [
            OrientedBox2D(b.cx, b.cy, b.half_length + SPAWN_GAP_MARGIN, b.half_width, b.heading)
            for b in boxes
        ]
        placement = sample_placement(graph, elevation, camera, blockers, rng)
        lane_guess = min(
            graph.lanes, key=lambda ln: abs(ln.project(placement.x, placement.y)[1])
        )
        s, lat = lane_guess.project(placement.x, placement.y)
        v_rng = seeding.rng_for(seed, seeding.TRAFFIC, i)
        v0 = float(v_rng.uniform(params.v0_min, params.v0_max))
        state = KinematicState(lane_guess.lane_id, s, 0.0, lat, 0.0, 0.0)
        actors.append(Actor(actor_id=i, state=state, target_speed=v0))
        boxes.append(placement.footprint(*DEFAULT_FOOTPRINT))

    # initial speeds: start at the per-actor target capped by the gap ahead
    from .traffic import _nearest_on_chain  # internal reuse

    for a in actors:
        others = [o for o in actors if o.actor_id != a.actor_id]
        leader, gap, _, _ = _nearest_on_chain(graph, a.state.lane_id, a.state.long_pos, a.length, others)
        lead_v = leader.state.long_vel if leader else 0.0
        v_init = safe_spawn_speed(gap if leader else math.inf, lead_v, a.target_speed, params)
        a.state = replace(a.state, long_vel=v_init)
    return actors


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def cmd_simulate(cfg: ScenarioConfig, traj_path: str | None = None) -> str:
    """Sample placements, retrieve assets, roll the traffic model, write JSONL."""
    graph, elevation = load_map(cfg.map_path)
    bank = load_bank(cfg.bank_path)
    cams = load_cameras(cfg.camera_path)
    params = IdmParams()

    actors = spawn_actors(graph, elevation, _cam_at(cams, 0), cfg.n_actors, cfg.seed, params, cfg.obstacles)

    # provisional rollout (default lengths) for viewpoint-range retrieval
    trajs = rollout(graph, elevation, actors, cfg.duration_s, params)
    for a, tr in zip(actors, trajs):
        angles, dists = [], []
        for k, pose in enumerate(tr.poses):
            az, d = view_azimuth(_cam_at(cams, k), pose)
            angles.append(az)
            dists.append(d)
        start, extent = covering_arc(np.array(angles))
        req = RetrievalRequest(theta=angles[0], distance=float(min(dists)),
                               theta_range=(start, start + extent))
        rng = seeding.rng_for(cfg.seed, seeding.RETRIEVAL, a.actor_id)
        try:
            asset = retrieve_multi_view(bank, req, rng)
        except SceneCompError:
            asset = retrieve_single_view(bank, req, rng)
        a.asset_id = asset.asset_id
        a.length, a.width = asset.bbox_lwh[0], asset.bbox_lwh[1]

    # placement re-check with the retrieved shapes, then the final rollout
    from .geometry import boxes_collide

    spawn_boxes = []
    for a, tr in zip(actors, trajs):
        p = tr.poses[0].translation
        yaw = math.atan2(tr.poses[0].rotation[1, 0], tr.poses[0].rotation[0, 0])
        spawn_boxes.append(OrientedBox2D(p[0], p[1], a.length / 2, a.width / 2, yaw))
    for i, box in enumerate(spawn_boxes):
        for obs in cfg.obstacles:
            if boxes_collide(box, obs):
                raise NoValidPlacement(0, f"retrieved asset {actors[i].asset_id} overlaps an obstacle")
        for j in range(i):
            if boxes_collide(box, spawn_boxes[j]):
                raise NoValidPlacement(0, "retrieved assets overlap")

    trajs = rollout(graph, elevation, actors, cfg.duration_s, params)

    os.makedirs(cfg.out_dir, exist_ok=True)
    traj_path = traj_path or os.path.join(cfg.out_dir, "trajectory.jsonl")
    n_frames = len(trajs[0].times) if trajs else round(cfg.duration_s * 10) + 1
    with open(traj_path, "w") as fh:
        meta = {
            "type": "meta",
            "seed": cfg.seed,
            "n_frames": n_frames,
            "actors": [
                {"actor": a.actor_id, "asset": a.asset_id, "length": a.length, "width": a.width}
                for a in actors
            ],
        }
        fh.write(_json_line(meta) + "\n")
        for k in range(n_frames):
            for a, tr in zip(actors, trajs):
                pose = tr.poses[k]
                yaw = math.atan2(pose.rotation[1, 0], pose.rotation[0, 0])
                rec = {
                    "actor": a.actor_id,
                    "frame": k,
                    "t": round(tr.times[k], 6),
                    "x": pose.translation[0],
                    "y": pose.translation[1],
                    "z": pose.translation[2],
                    "yaw": yaw,
                    "v": tr.speeds[k],
                }
                fh.write(_json_line(rec) + "\n")
    return traj_path


def read_trajectory(path) -> tuple[dict, dict[int, list[dict]]]:
    """Returns (meta, per-frame record lists)."""
    meta = None
    frames: dict[int, list[dict]] = {}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("type") == "meta":
                meta = rec
                continue
            frames.setdefault(int(rec["frame"]), []).append(rec)
    if meta is None:
        raise ConfigError(f"trajectory {path} has no meta line")
    return meta, frames


# ---------------------------------------------------------------------------
# render

_WORKER: dict = {}


def _init_worker(cfg_dict: dict, traj_path: str):
    cfg = ScenarioConfig(**{**cfg_dict, "obstacles": []})
    _WORKER["cfg"] = cfg
    _WORKER["bank"] = load_bank(cfg.bank_path)
    _WORKER["cams"] = load_cameras(cfg.camera_path)
    _WORKER["meta"], _WORKER["frames"] = read_trajectory(traj_path)


def _source_view_world(view: SourceView, pose: Pose6DoF) -> CameraView:
    """Compose the object-frame source camera with the world pose."""
    T = np.eye(4)
    T[:3, :3] = pose.rotation.T
    T[:3, 3] = -pose.rotation.T @ pose.translation
    return CameraView(view.camera.P @ T, view.camera.width, view.camera.height)


def render_frame(
    cfg: ScenarioConfig,
    bank: AssetBank,
    cam: CameraView,
    records: list[dict],
    meta: dict,
    bg_path: str,
    depth_path: str,
    out_path: str,
) -> dict:
    """Render one frame; returns the frame record (with stage timings in ms)."""
    t_start = time.perf_counter()
    timings = {k: 0.0 for k in ("io", "raster", "warp", "occlusion", "shadow", "composite")}

    t0 = time.perf_counter()
    with open(bg_path, "rb") as fh:
        bg_bytes = fh.read()
    from PIL import Image
    import io as _io

    bg_u8 = np.asarray(Image.open(_io.BytesIO(bg_bytes)).convert("RGB"))
    bg_lin = imgio.srgb_to_linear(bg_u8)
    scene_depth = imgio.load_depth(depth_path)
    timings["io"] += time.perf_counter() - t0

    h, w = bg_lin.shape[:2]
    if (h, w) != (cam.height, cam.width):
        raise ConfigError("background dims do not match camera dims")
    if scene_depth.shape != (h, w):
        raise ConfigError("scene depth dims do not match camera dims")

    asset_by_actor = {a["actor"]: a["asset"] for a in meta["actors"]}
    obj_color = np.zeros((h, w, 3))
    obj_depth = np.full((h, w), np.inf)
    obj_cover = np.zeros((h, w), dtype=bool)
    obj_missing = np.zeros((h, w), dtype=bool)
    shadow = np.ones((h, w)) if cfg.shadow else None
    actor_info = []

    for rec in sorted(records, key=lambda r: r["actor"]):
        asset = bank.get(str(asset_by_actor[rec["actor"]]))
        pose = pose_from_bev(rec["x"], rec["y"], rec["z"], rec["yaw"])

        t0 = time.perf_counter()
        depth = rasterize_depth(asset.mesh, pose, cam)
        timings["raster"] += time.perf_counter() - t0

        az, dist = view_azimuth(cam, pose)
        req = RetrievalRequest(theta=az, distance=dist)
        scored = [(score_single_view(req, v), k) for k, v in enumerate(asset.views)]
        valid = [(s, k) for s, k in scored if s is not None]
        fallback = not valid
        if valid:
            _, view_idx = min(valid)
        else:
            view_idx = min(
                range(len(asset.views)),
                key=lambda k: abs(wrap_angle(az - asset.views[k].theta)),
            )
        view = asset.views[view_idx]

        t0 = time.perf_counter()
        cam_s = _source_view_world(view, pose)
        colors, mask = inverse_warp(depth, cam, cam_s, view.image, view.silhouette)
        timings["warp"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        vis = occlusion_mask(depth, scene_depth, cfg.occlusion_eps)
        mask = mask.intersect(vis)
        timings["occlusion"] += time.perf_counter() - t0

        if cfg.shadow:
            t0 = time.perf_counter()
            sw = render_shadow(asset.mesh, pose, cam, ground_z=rec["z"], n_lights=cfg.shadow_lights)
            gd = ground_depth_map(cam, rec["z"])
            on_ground = np.abs(scene_depth - gd) <= 0.2
            shadow = shadow * np.where(on_ground, sw, 1.0)
            timings["shadow"] += time.perf_counter() - t0

        visible = (mask.coverage > 0.0) & (depth < obj_depth)
        obj_color[visible] = colors[visible]
        obj_missing[visible] = mask.missing[visible]
        obj_cover |= visible
        obj_depth = np.where(visible, depth, obj_depth)
        actor_info.append(
            {"actor": rec["actor"], "asset": asset.asset_id, "view": view_idx, "view_fallback": fallback}
        )

    t0 = time.perf_counter()
    out, untouched = composite(
        bg_lin,
        obj_color,
        CompositeMask(obj_cover.astype(float), obj_missing),
        shadow_weight=shadow,
        feather_px=cfg.feather_px,
        band_px=cfg.band_px,
        color_transfer=cfg.color_transfer,
    )
    timings["composite"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    if untouched.all():
        with open(out_path, "wb") as fh:
            fh.write(bg_bytes)
    else:
        out_u8 = imgio.linear_to_srgb_u8(out)
        out_u8[untouched] = bg_u8[untouched]
        from PIL import Image as _Image

        _Image.fromarray(out_u8, mode="RGB").save(out_path)
    timings["io"] += time.perf_counter() - t0

    total = time.perf_counter() - t_start
    stage_ms = {f"{k}_ms": round(v * 1e3, 3) for k, v in timings.items()}
    stage_ms["other_ms"] = round(max(total - sum(timings.values()), 0.0) * 1e3, 3)
    stage_ms["total_ms"] = round(total * 1e3, 3)
    return {"image": os.path.basename(out_path), "actors": actor_info, "timings": stage_ms}


def _render_frame_task(args):
    k, bg_path, depth_path, out_path = args
    cfg = _WORKER["cfg"]
    rec = render_frame(
        cfg,
        _WORKER["bank"],
        _cam_at(_WORKER["cams"], k),
        _WORKER["frames"].get(k, []),
        _WORKER["meta"],
        bg_path,
        depth_path,
        out_path,
    )
    rec["frame"] = k
    return rec


def cmd_render(cfg: ScenarioConfig, traj_path: str) -> str:
    """Render all frames of a simulated trajectory; returns the records path."""
    meta, frames = read_trajectory(traj_path)
    n_frames = int(meta["n_frames"])
    os.makedirs(cfg.out_dir, exist_ok=True)
    frame_dir = os.path.join(cfg.out_dir, "frames")
    os.makedirs(frame_dir, exist_ok=True)

    def files_for(k):
        bg = cfg.background_frames[min(k, len(cfg.background_frames) - 1)]
        dp = cfg.scene_depth[min(k, len(cfg.scene_depth) - 1)]
        for p in (bg, dp):
            if not os.path.isfile(p):
                raise ConfigError(f"missing frame input: {p}")
        return bg, dp, os.path.join(frame_dir, f"frame_{k:04d}.png")

    tasks = [(k, *files_for(k)) for k in range(n_frames)]
    records = []
    if cfg.workers > 1:
        cfg_dict = {k: v for k, v in cfg.__dict__.items() if k != "obstacles"}
        with ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_init_worker, initargs=(cfg_dict, traj_path)
        ) as pool:
            records = list(pool.map(_render_frame_task, tasks))
    else:
        bank = load_bank(cfg.bank_path)
        cams = load_cameras(cfg.camera_path)
        for k, bg, dp, out_path in tasks:
            rec = render_frame(cfg, bank, _cam_at(cams, k), frames.get(k, []), meta, bg, dp, out_path)
            rec["frame"] = k
            records.append(rec)

    rec_path = os.path.join(cfg.out_dir, "framerecords.jsonl")
    with open(rec_path, "w") as fh:
        for rec in sorted(records, key=lambda r: r["frame"]):
            fh.write(_json_line(rec) + "\n")
    return rec_path


# ---------------------------------------------------------------------------
# build-assets


def cmd_build_assets(obs_dir: str, bank_path: str, fit_config=None) -> dict:
    """Fit one asset per observation bundle; failures are logged, not fatal."""
    from .fitting import FitConfig, Observation, ShapeParams, SilhouetteView, chamfer_loss_grad, fit_shape, sedan_mean_shape
    from .synthetic import shade_mesh_view

    if not os.path.isdir(obs_dir):
        raise ConfigError(f"observation directory missing: {obs_dir}")
    fit_config = fit_config or FitConfig(iterations=150)
    report = {"built": [], "failures": []}
    assets = []
    names = sorted(
        d for d in os.listdir(obs_dir) if os.path.isfile(os.path.join(obs_dir, d, "observation.json"))
    )
    for name in names:
        path = os.path.join(obs_dir, name)
        try:
            with open(os.path.join(path, "observation.json")) as fh:
                doc = json.load(fh)
            pts = np.load(os.path.join(path, doc["lidar"]))
            views = []
            cams = []
            for vd in doc["views"]:
                mask = imgio.load_mask(os.path.join(path, vd["mask"]))
                cam = CameraView(np.asarray(vd["P"], float).reshape(3, 4), int(vd["width"]), int(vd["height"]))
                views.append(SilhouetteView(mask.astype(float), cam))
                cams.append(cam)
            if not views:
                raise ConfigError("observation has no views")
            obs = Observation(pts, views)

            mean = sedan_mean_shape()
            init = ShapeParams(mean.vertices, np.zeros_like(mean.vertices))
            c0 = chamfer_loss_grad(init.vertices(), pts)[0] if len(pts) else 0.0
            result = fit_shape(obs, init, mean.faces, config=fit_config)
            c1 = chamfer_loss_grad(result.mesh.vertices, pts)[0] if len(pts) else 0.0

            # bank convention: base at z = 0; shift mesh and source cameras
            shift = -result.mesh.vertices[:, 2].min()
            verts = result.mesh.vertices.copy()
            verts[:, 2] += shift
            mesh = TriangleMesh(verts, result.mesh.faces)
            T = np.eye(4)
            T[2, 3] = -shift
            lo, hi = mesh.bbox_extents()
            lwh = (hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2])

            src_views = []
            for cam in cams:
                cam2 = CameraView(cam.P @ T, cam.width, cam.height)
                img, sil = shade_mesh_view(mesh, cam2)
                theta = math.atan2(cam2.center()[1], cam2.center()[0])
                dist = float(np.linalg.norm(cam2.center()))
                src_views.append(SourceView(img, sil, cam2, theta, dist))
            assets.append(AssetRecord(name, mesh, src_views, lwh))
            report["built"].append(
                {"id": name, "chamfer_init": c0, "chamfer_final": c1, "iterations": len(result.trace) - 1}
            )
        except Exception as exc:  # noqa: BLE001 - per-observation isolation
            report["failures"].append({"id": name, "error": f"{type(exc).__name__}: {exc}"})

    bank = AssetBank(assets)
    save_bank(bank, bank_path)
    with open(os.path.join(bank_path, "build_report.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    return report


# ---------------------------------------------------------------------------
# selftest


def _plane_homography(cam_t: CameraView, cam_s: CameraView, plane_z: float) -> np.ndarray:
    """Analytic target->source pixel homography induced by the z=plane_z plane."""
    n = np.array([0.0, 0.0, 1.0])
    m = cam_t.P[:, :3]
    minv = np.linalg.inv(m)
    c = cam_t.center()
    n_minv = n @ minv
    g_top = np.outer(c, n_minv) + (plane_z - n @ c) * minv
    g = np.vstack([g_top, n_minv])
    return cam_s.P @ g


def _planar_quad_fixture(size: float = 2.0, subdiv: int = 8):
    """Textured quad on z=0, fronto-parallel target camera, offset source."""
    from .geometry import look_at_camera

    ticks = np.linspace(-size, size, subdiv + 1)
    gx, gy = np.meshgrid(ticks, ticks)
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for r in range(subdiv):
        for cidx in range(subdiv):
            a = r * (subdiv + 1) + cidx
            b = a + 1
            cc = a + subdiv + 1
            dd = cc + 1
            faces += [(a, b, dd), (a, dd, cc)]
    quad = TriangleMesh(verts, np.asarray(faces, dtype=np.int32))
    cam_t = look_at_camera((0, 0, 5.0), (0, 0, 0), 140, 140, 64, 48, 128, 96, up=(0, 1, 0))
    cam_s = look_at_camera((1.5, -1.0, 4.2), (0.2, 0.1, 0), 140, 140, 64, 48, 128, 96, up=(0, 1, 0))
    return quad, cam_t, cam_s, 0.0


def _smooth_texture(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    img = np.zeros((h, w, 3))
    for ch in range(3):
        a, b = rng.uniform(0.5, 1.5, size=2)
        ph = rng.uniform(0, 2 * np.pi, size=2)
        img[:, :, ch] = 0.5 + 0.2 * np.sin(2 * np.pi * a * xs / w + ph[0]) + 0.2 * np.sin(
            2 * np.pi * b * ys / h + ph[1]
        )
    return np.clip(img, 0.1, 0.9)


def cmd_selftest(inject_occlusion_flip: bool = False) -> tuple[list[dict], bool]:
    """Run the embedded oracle suite; returns (rows, all_passed)."""
    from . import _kernels
    from .fitting import (
        Observation,
        SilhouetteView,
        chamfer_loss_grad,
        edge_loss_grad,
        grad_check,
        laplacian_loss_grad,
        normal_loss_grad,
        silhouette_loss_grad,
    )
    from .geometry import look_at_camera
    from .meshes import build_topology, make_icosasphere
    from .traffic import Actor as TAactor
    from .traffic import IdmParams as TParams
    from .traffic import idm_accel

    rows = []

    def add(name, measured, tolerance, passed):
        rows.append({"check": name, "measured": float(measured), "tolerance": float(tolerance),
                     "passed": bool(passed)})

    rng = np.random.default_rng(20240801)

    # warp identity: same camera in and out, nearest sampling
    sphere = make_icosasphere(2)
    mesh = TriangleMesh(sphere.vertices * 1.5, sphere.faces)
    cam = look_at_camera((6, 1, 1.5), (0, 0, 0), 200, 200, 64, 48, 128, 96)
    pose = pose_from_bev(0, 0, 0, 0)
    depth = rasterize_depth(mesh, pose, cam)
    src = rng.uniform(0.1, 0.9, size=(96, 128, 3))
    warped, m = inverse_warp(depth, cam, cam, src, mode="nearest")
    cov = np.isfinite(depth) & ~m.missing
    err = np.abs(warped[cov] - src[cov]).max() if cov.any() else 1.0
    add("warp_identity_max_err", err, 0.0, err <= 0.0)

    # planar-quad warp vs analytic homography resampling
    quad, qcam_t, qcam_s, plane_z = _planar_quad_fixture()
    qdepth = rasterize_depth(quad, pose, qcam_t)
    tex = _smooth_texture(96, 128, rng)
    warped, qm = inverse_warp(qdepth, qcam_t, qcam_s, tex)
    H = _plane_homography(qcam_t, qcam_s, plane_z)
    cov = np.isfinite(qdepth) & ~qm.missing
    ys, xs = np.nonzero(cov)
    src_uv = np.column_stack([xs, ys, np.ones(len(xs))]) @ H.T
    src_uv = src_uv[:, :2] / src_uv[:, 2:3]
    ref = _kernels.bilinear_sample(tex, src_uv)
    mae = float(np.abs(warped[ys, xs] - ref).mean()) if len(xs) else 1.0
    add("homography_mae", mae, 2.0 / 255.0, mae < 2.0 / 255.0)

    # chamfer kernel vs brute-force double loop
    worst = 0.0
    for _ in range(5):
        pts = rng.normal(size=(120, 3))
        verts = rng.normal(size=(80, 3))
        d2, _ = _kernels.chamfer_min_sq(pts, verts)
        ref = np.array([min(((p - v) ** 2).sum() for v in verts) for p in pts])
        worst = max(worst, float(np.abs(np.sum(d2) - np.sum(ref))))
    add("chamfer_vs_bruteforce", worst, 0.0, worst <= 0.0)

    # occlusion vs per-pixel comparison
    obj = rng.uniform(1, 20, size=(32, 32))
    obj[rng.uniform(size=(32, 32)) > 0.7] = np.inf
    scene = rng.uniform(1, 20, size=(32, 32))
    vis = occlusion_mask(obj, scene, 0.1).coverage > 0
    sign = -1.0 if inject_occlusion_flip else 1.0
    ref = np.zeros((32, 32), dtype=bool)
    for i in range(32):
        for j in range(32):
            ref[i, j] = np.isfinite(obj[i, j]) and sign * obj[i, j] < sign * (scene[i, j] + 0.1)
    mism = int((vis != ref).sum())
    add("occlusion_vs_bruteforce_mismatch", mism, 0.0, mism == 0)

    # IDM steady state (v0 large enough that the free-road term is negligible)
    p = TParams()
    gap, v, lead_v = 30.0, 10.0, 10.0
    for _ in range(1200):
        a = idm_accel(v, 40.0, gap, v - lead_v, p)
        v = max(v + a * p.dt, 0.0)
        gap += (lead_v - v) * p.dt
    err = abs(gap - 17.0) / 17.0
    add("idm_steady_state_gap_rel_err", err, 0.01, err < 0.01)

    # gradient checks on a perturbed sphere
    m1 = make_icosasphere(1)
    verts = m1.vertices + rng.normal(0, 0.02, m1.vertices.shape)
    topo = build_topology(m1.faces, len(verts))
    pts = rng.normal(size=(50, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    gc_cases = {
        "gradcheck_chamfer": lambda v: chamfer_loss_grad(v, pts),
        "gradcheck_edge": lambda v: edge_loss_grad(v, topo),
        "gradcheck_laplacian": lambda v: laplacian_loss_grad(v, topo),
        "gradcheck_normal": lambda v: normal_loss_grad(v, m1.faces, topo),
    }
    for name, fn in gc_cases.items():
        e = grad_check(fn, verts, eps=1e-5, rng=rng)
        add(name, e, 1e-3, e < 1e-3)
    camg = look_at_camera((4, 1, 0.5), (0, 0, 0), 60, 60, 16, 16, 32, 32)
    uvz = camg.project(verts * 1.1)
    tgt = np.isfinite(_kernels.raster_depth(uvz[0], uvz[1], m1.faces, 32, 32)).astype(float)
    sview = [SilhouetteView(tgt, camg)]
    e = grad_check(lambda v: silhouette_loss_grad(v, m1.faces, sview, 2.0, topo), verts, eps=1e-3, rng=rng)
    add("gradcheck_silhouette", e, 1e-3, e < 1e-3)

    ok = all(r["passed"] for r in rows)
    return rows, ok
