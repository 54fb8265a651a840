"""Asset bank: reconstructed meshes with posed source views, retrieved by
viewpoint similarity and sampled by inverse score.

Bank layout on disk: a directory with ``manifest.json`` plus per-asset mesh
binaries and PNG images/masks:

    {"assets": [{"id", "mesh": file, "bbox": {"l","w","h"},
                 "views": [{"image", "mask", "P": [12 floats row-major],
                            "theta_deg", "dist_m"}, ...]}, ...]}
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BankFormatError, NoCandidate
from .geometry import CameraView, Pose6DoF, wrap_angle
from .imgio import load_image, load_mask, save_image, save_mask
from .meshes import TriangleMesh, load_mesh, save_mesh

SINGLE_VIEW_MAX_DEG = 10.0
MULTI_VIEW_MIN_OVERLAP_DEG = 20.0
SCORE_FLOOR = 1e-3


@dataclass
class SourceView:
    image: np.ndarray  # (H,W,3) linear float
    silhouette: np.ndarray  # (H,W) bool
    camera: CameraView
    theta: float  # rad, object-relative azimuth of the source camera
    distance: float  # m

    def __post_init__(self):
        if self.silhouette.shape != self.image.shape[:2]:
            raise ValueError("silhouette dims must equal image dims")
        if self.distance <= 0:
            raise ValueError("view distance must be positive")


@dataclass
class AssetRecord:
    asset_id: str
    mesh: TriangleMesh
    views: list[SourceView]
    bbox_lwh: tuple[float, float, float]  # footprint length/width + height

    def __post_init__(self):
        if not self.views:
            raise ValueError("asset needs at least one source view")

    def view_angles(self) -> np.ndarray:
        return np.array([v.theta for v in self.views])

    def min_distance(self) -> float:
        return min(v.distance for v in self.views)


@dataclass
class RetrievalRequest:
    theta: float  # rad, target object-relative view azimuth
    distance: float  # m (for video requests: minimum over the clip)
    theta_range: tuple[float, float] | None = None  # rad, for video/multi-view

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("target distance must be positive")


def view_azimuth(camera: CameraView, pose: Pose6DoF) -> tuple[float, float]:
    """Object-relative azimuth and distance of a camera for a posed object."""
    rel = pose.inverse_transform(camera.center().reshape(1, 3))[0]
    return math.atan2(rel[1], rel[0]), float(np.linalg.norm(rel))


def score_single_view(req: RetrievalRequest, view: SourceView) -> float | None:
    """Angle+distance score; None when the view change exceeds 10 degrees.

    Smaller is better: |dtheta| in degrees plus 5x the unmet distance (a
    source captured farther than the target renders at lower resolution).
    """
    dtheta = abs(math.degrees(wrap_angle(req.theta - view.theta)))
    if dtheta > SINGLE_VIEW_MAX_DEG:
        return None
    return dtheta + 5.0 * max(req.distance - view.distance, 0.0)


def covering_arc(angles: np.ndarray) -> tuple[float, float]:
    """Smallest circular arc (start_rad, extent_rad) containing all angles."""
    a = np.sort(np.mod(np.asarray(angles, dtype=float), 2.0 * math.pi))
    if len(a) == 1:
        return float(a[0]), 0.0
    gaps = np.diff(np.concatenate([a, [a[0] + 2.0 * math.pi]]))
    k = int(np.argmax(gaps))
    start = a[(k + 1) % len(a)]
    return float(start), float(2.0 * math.pi - gaps[k])


def arc_overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Measure of the intersection of two circular arcs (radians)."""
    (a0, ea), (b0, eb) = a, b
    ea = min(ea, 2.0 * math.pi)
    eb = min(eb, 2.0 * math.pi)
    d = (b0 - a0) % (2.0 * math.pi)
    total = 0.0
    for off in (d, d - 2.0 * math.pi):
        lo = max(0.0, off)
        hi = min(ea, off + eb)
        total += max(0.0, hi - lo)
    return min(total, min(ea, eb))


def score_multi_view(req: RetrievalRequest, asset: AssetRecord, overlap_sign: float = 1.0) -> float | None:
    """View-range score for video retrieval; None below 20 degrees overlap.

    As printed, larger overlap *raises* the score (and inverse-score sampling
    then prefers small overlap); ``overlap_sign=-1`` negates that term.
    """
    if req.theta_range is None:
        raise ValueError("multi-view scoring needs a theta range")
    lo, hi = req.theta_range
    req_arc = (wrap_angle(lo) % (2.0 * math.pi), (hi - lo) % (2.0 * math.pi) or (2.0 * math.pi if hi != lo else 0.0))
    asset_arc = covering_arc(asset.view_angles())
    overlap_deg = math.degrees(arc_overlap(asset_arc, req_arc))
    if overlap_deg < MULTI_VIEW_MIN_OVERLAP_DEG:
        return None
    return overlap_sign * 2.0 * overlap_deg + 5.0 * max(req.distance - asset.min_distance(), 0.0)


def inverse_score_weights(scores: np.ndarray) -> np.ndarray:
    """Categorical weights proportional to 1/score, scores floored at 1e-3."""
    s = np.maximum(np.asarray(scores, dtype=float), SCORE_FLOOR)
    w = 1.0 / s
    return w / w.sum()


def sample_asset(candidates: list, scores: list, rng: np.random.Generator):
    """Draw one candidate with probability (1/score_i) / sum_j (1/score_j)."""
    if len(candidates) == 0:
        raise NoCandidate("all retrieval candidates were rejected")
    if len(candidates) != len(scores):
        raise ValueError("candidates/scores length mismatch")
    probs = inverse_score_weights(np.asarray(scores, dtype=float))
    k = int(rng.choice(len(candidates), p=probs))
    return candidates[k]


def retrieve_single_view(bank: "AssetBank", req: RetrievalRequest, rng: np.random.Generator) -> AssetRecord:
    """Best-view-per-asset scoring, then inverse-score sampling."""
    cands, scores = [], []
    for asset in bank.assets:
        views = [score_single_view(req, v) for v in asset.views]
        views = [s for s in views if s is not None]
        if views:
            cands.append(asset)
            scores.append(min(views))
    return sample_asset(cands, scores, rng)


def retrieve_multi_view(bank: "AssetBank", req: RetrievalRequest, rng: np.random.Generator,
                        overlap_sign: float = 1.0) -> AssetRecord:
    cands, scores = [], []
    for asset in bank.assets:
        s = score_multi_view(req, asset, overlap_sign)
        if s is not None:
            cands.append(asset)
            scores.append(s)
    return sample_asset(cands, scores, rng)


@dataclass
class AssetBank:
    assets: list[AssetRecord] = field(default_factory=list)

    def get(self, asset_id: str) -> AssetRecord:
        for a in self.assets:
            if a.asset_id == asset_id:
                return a
        raise KeyError(asset_id)


def save_bank(bank: AssetBank, path) -> None:
    os.makedirs(path, exist_ok=True)
    manifest = {"assets": []}
    for asset in bank.assets:
        mesh_file = f"{asset.asset_id}.mesh"
        save_mesh(asset.mesh, os.path.join(path, mesh_file))
        views = []
        for k, v in enumerate(asset.views):
            img = f"{asset.asset_id}_v{k}.png"
            msk = f"{asset.asset_id}_v{k}_mask.png"
            save_image(os.path.join(path, img), v.image)
            save_mask(os.path.join(path, msk), v.silhouette)
            views.append(
                {
                    "image": img,
                    "mask": msk,
                    "P": [float(x) for x in v.camera.P.reshape(12)],
                    "theta_deg": math.degrees(v.theta),
                    "dist_m": v.distance,
                }
            )
        l, w, h = asset.bbox_lwh
        manifest["assets"].append(
            {"id": asset.asset_id, "mesh": mesh_file, "bbox": {"l": l, "w": w, "h": h}, "views": views}
        )
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_bank(path) -> AssetBank:
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise BankFormatError(f"missing manifest: {manifest_path}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BankFormatError(f"malformed manifest {manifest_path}: {exc}") from exc

    assets = []
    for entry in manifest.get("assets", []):
        for key in ("id", "mesh", "bbox", "views"):
            if key not in entry:
                raise BankFormatError(f"asset entry missing {key!r}")
        mesh_path = os.path.join(path, entry["mesh"])
        if not os.path.isfile(mesh_path):
            raise BankFormatError(f"missing mesh file: {mesh_path}")
        mesh = load_mesh(mesh_path)
        views = []
        for vd in entry["views"]:
            img_path = os.path.join(path, vd["image"])
            msk_path = os.path.join(path, vd["mask"])
            for p in (img_path, msk_path):
                if not os.path.isfile(p):
                    raise BankFormatError(f"missing view file: {p}")
            image = load_image(img_path)
            sil = load_mask(msk_path)
            cam = CameraView(np.asarray(vd["P"], dtype=float).reshape(3, 4),
                             image.shape[1], image.shape[0])
            views.append(
                SourceView(image, sil, cam, math.radians(float(vd["theta_deg"])), float(vd["dist_m"]))
            )
        bbox = entry["bbox"]
        assets.append(
            AssetRecord(str(entry["id"]), mesh, views,
                        (float(bbox["l"]), float(bbox["w"]), float(bbox["h"])))
        )
    return AssetBank(assets)
