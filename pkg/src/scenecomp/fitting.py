"""Direct mesh fitting: minimize LiDAR-chamfer + silhouette + smoothness
energies over per-vertex deformations of a mean shape.

Every loss has an analytic gradient checked against central finite
differences (``grad_check``). The soft silhouette renders the mask as
sigmoid(signed pixel distance to the projected occluding contour / tau); hard
z-buffer coverage supplies the sign, the contour supplies the gradient path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, EmptyInput, NonFiniteLoss
from .geometry import CameraView
from .meshes import MeshTopology, TriangleMesh, build_topology, face_normals, make_icosasphere

DEPTH_EPS = 1e-9


@dataclass(frozen=True)
class LossWeights:
    edge: float = 10.0
    normal: float = 10.0
    laplacian: float = 10.0

    def __post_init__(self):
        if min(self.edge, self.normal, self.laplacian) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class SilhouetteView:
    mask: np.ndarray  # (H,W) binary target silhouette
    camera: CameraView

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=float)
        if self.mask.shape != (self.camera.height, self.camera.width):
            raise DimensionMismatch("silhouette dims do not match camera dims")


@dataclass
class Observation:
    points: np.ndarray  # (N,3) canonical-frame lidar points
    views: list[SilhouetteView] = field(default_factory=list)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.points) == 0 and not self.views:
            raise EmptyInput("observation needs lidar points or views")


@dataclass
class ShapeParams:
    mean_shape: np.ndarray  # (V,3)
    deformation: np.ndarray  # (V,3)
    max_deform: float = 1.5  # m, per axis

    def __post_init__(self):
        self.mean_shape = np.asarray(self.mean_shape, dtype=float)
        self.deformation = np.asarray(self.deformation, dtype=float)
        if self.mean_shape.shape != self.deformation.shape:
            raise ValueError("deformation must match mean shape cardinality")

    def vertices(self) -> np.ndarray:
        return self.mean_shape + self.deformation


def sedan_mean_shape(subdivisions: int = 3) -> TriangleMesh:
    """Icosasphere scaled to typical sedan half-extents (2.25, 1.0, 0.8 m)."""
    m = make_icosasphere(subdivisions)
    return TriangleMesh(m.vertices * np.array([2.25, 1.0, 0.8]), m.faces)


# ---------------------------------------------------------------------------
# loss terms (value + analytic gradient w.r.t. vertices)


def chamfer_loss(mesh: TriangleMesh, points: np.ndarray) -> float:
    return chamfer_loss_grad(mesh.vertices, points)[0]


def chamfer_loss_grad(verts: np.ndarray, points: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum over points of squared distance to the nearest vertex."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0 or len(verts) == 0:
        raise EmptyInput("chamfer needs non-empty points and vertices")
    d2, idx = _kernels.chamfer_min_sq(points, verts)
    grad = np.zeros_like(verts)
    np.add.at(grad, idx, 2.0 * (verts[idx] - points))
    return float(np.sum(d2)), grad


def edge_loss(mesh: TriangleMesh, topo: MeshTopology | None = None) -> float:
    topo = topo or build_topology(mesh.faces, len(mesh.vertices))
    return edge_loss_grad(mesh.vertices, topo)[0]


def edge_loss_grad(verts: np.ndarray, topo: MeshTopology) -> tuple[float, np.ndarray]:
    """Sum over directed neighbor pairs of squared edge length (each
    undirected edge counted twice, as the energy is written)."""
    d = verts[topo.edges[:, 0]] - verts[topo.edges[:, 1]]
    value = 2.0 * float((d * d).sum())
    grad = np.zeros_like(verts)
    np.add.at(grad, topo.edges[:, 0], 4.0 * d)
    np.add.at(grad, topo.edges[:, 1], -4.0 * d)
    return value, grad


def laplacian_loss(mesh: TriangleMesh, topo: MeshTopology | None = None) -> float:
    topo = topo or build_topology(mesh.faces, len(mesh.vertices))
    return laplacian_loss_grad(mesh.vertices, topo)[0]


def laplacian_loss_grad(verts: np.ndarray, topo: MeshTopology) -> tuple[float, np.ndarray]:
    """Squared norm of the umbrella vector sum_{j in N_i} (v_i - v_j)."""
    src = np.repeat(np.arange(len(verts)), topo.degree)
    nbr_sum = np.zeros_like(verts)
    np.add.at(nbr_sum, src, verts[topo.neighbors])
    lap = topo.degree[:, None] * verts - nbr_sum
    value = float((lap * lap).sum())
    lap_nbr_sum = np.zeros_like(verts)
    np.add.at(lap_nbr_sum, src, lap[topo.neighbors])
    grad = 2.0 * (topo.degree[:, None] * lap - lap_nbr_sum)
    return value, grad


def normal_loss(mesh: TriangleMesh, topo: MeshTopology | None = None) -> float:
    topo = topo or build_topology(mesh.faces, len(mesh.vertices))
    return normal_loss_grad(mesh.vertices, mesh.faces, topo)[0]


def normal_loss_grad(verts: np.ndarray, faces: np.ndarray, topo: MeshTopology) -> tuple[float, np.ndarray]:
    """Sum over adjacent face pairs of (1 - <n_i, n_j>) with unit normals."""
    normals, cross = face_normals(TriangleMesh(verts, faces))
    norms = np.linalg.norm(cross, axis=1)
    pa, pb = topo.face_pairs[:, 0], topo.face_pairs[:, 1]
    na, nb = normals[pa], normals[pb]
    dots = (na * nb).sum(axis=1)
    value = float((1.0 - dots).sum())

    # d(-n_a . n_b)/d c_a with n = c / |c|
    ga = -(nb - dots[:, None] * na) / norms[pa][:, None]
    gb = -(na - dots[:, None] * nb) / norms[pb][:, None]
    gface = np.zeros_like(cross)
    np.add.at(gface, pa, ga)
    np.add.at(gface, pb, gb)

    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    e1, e2 = v1 - v0, v2 - v0
    grad = np.zeros_like(verts)
    np.add.at(grad, faces[:, 0], np.cross(e1 - e2, gface))
    np.add.at(grad, faces[:, 1], np.cross(e2, gface))
    np.add.at(grad, faces[:, 2], np.cross(gface, e1))
    return value, grad


# ---------------------------------------------------------------------------
# soft silhouette


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -40.0, 40.0)))


def _contour_segments(
    xy: np.ndarray, z: np.ndarray, faces: np.ndarray, topo: MeshTopology
) -> np.ndarray:
    """Vertex-index pairs of the projected occluding contour.

    An edge is on the contour when its two adjacent projected faces flip 2D
    orientation, or when it borders a hole / a depth-culled face.
    """
    active = (z[faces] > DEPTH_EPS).all(axis=1)
    v = xy[faces]
    area = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 1, 1] - v[:, 0, 1]
    ) * (v[:, 2, 0] - v[:, 0, 0])

    f0, f1 = topo.edge_faces[:, 0], topo.edge_faces[:, 1]
    a0 = np.where((f0 >= 0) & active[np.maximum(f0, 0)], area[np.maximum(f0, 0)], np.nan)
    a1 = np.where((f1 >= 0) & active[np.maximum(f1, 0)], area[np.maximum(f1, 0)], np.nan)
    both = ~np.isnan(a0) & ~np.isnan(a1)
    one = np.isnan(a0) ^ np.isnan(a1)
    contour = one | (both & (a0 * a1 <= 0.0))
    return topo.edges[contour]


def render_soft_silhouette(
    mesh: TriangleMesh, cam: CameraView, tau: float, topo: MeshTopology | None = None
):
    """Soft coverage in [0,1] plus the intermediates the gradient needs."""
    if tau <= 0:
        raise ValueError("softness tau must be positive")
    topo = topo or build_topology(mesh.faces, len(mesh.vertices))
    uv, z = cam.project(mesh.vertices)
    cover = np.isfinite(
        _kernels.raster_depth(uv, z, mesh.faces, cam.width, cam.height)
    )
    seg_ids = _contour_segments(uv, z, mesh.faces, topo)
    if len(seg_ids) == 0:
        return np.zeros((cam.height, cam.width)), None

    segs = np.concatenate([uv[seg_ids[:, 0]], uv[seg_ids[:, 1]]], axis=1)
    ys, xs = np.meshgrid(np.arange(cam.height, dtype=float), np.arange(cam.width, dtype=float), indexing="ij")
    centers = np.column_stack([xs.ravel(), ys.ravel()])
    dist, idx, t = _kernels.segment_distance_2d(centers, segs)
    sign = np.where(cover.ravel(), 1.0, -1.0)
    phi = sign * dist
    soft = _sigmoid(phi / tau).reshape(cam.height, cam.width)
    aux = {
        "uv": uv,
        "z": z,
        "seg_ids": seg_ids,
        "centers": centers,
        "dist": dist,
        "idx": idx,
        "t": t,
        "sign": sign,
        "soft_flat": soft.ravel(),
    }
    return soft, aux


def silhouette_loss(mesh: TriangleMesh, views: list[SilhouetteView], tau: float = 2.0) -> float:
    return silhouette_loss_grad(mesh.vertices, mesh.faces, views, tau)[0]


def silhouette_loss_grad(
    verts: np.ndarray,
    faces: np.ndarray,
    views: list[SilhouetteView],
    tau: float = 2.0,
    topo: MeshTopology | None = None,
) -> tuple[float, np.ndarray]:
    """Per-view squared difference between target and soft-rendered masks."""
    topo = topo or build_topology(faces, len(verts))
    mesh = TriangleMesh(verts, faces)
    total = 0.0
    grad = np.zeros_like(verts)
    for view in views:
        soft, aux = render_soft_silhouette(mesh, view.camera, tau, topo)
        target = view.mask
        resid = target - soft
        total += float((resid * resid).sum())
        if aux is None:
            continue

        dl_dsoft = -2.0 * resid.ravel()
        s = aux["soft_flat"]
        dl_dphi = dl_dsoft * s * (1.0 - s) / tau

        # pixel -> nearest contour segment endpoints (2D)
        dist, idx, t, sign = aux["dist"], aux["idx"], aux["t"], aux["sign"]
        ok = dist > 1e-9
        seg_ids = aux["seg_ids"]
        uv = aux["uv"]
        segs_a = uv[seg_ids[idx[ok], 0]]
        segs_b = uv[seg_ids[idx[ok], 1]]
        foot = segs_a + t[ok, None] * (segs_b - segs_a)
        u_hat = (aux["centers"][ok] - foot) / dist[ok, None]
        coef = (dl_dphi[ok] * sign[ok])[:, None]
        grad_a = -coef * (1.0 - t[ok, None]) * u_hat
        grad_b = -coef * t[ok, None] * u_hat
        gpx = np.zeros_like(uv)
        np.add.at(gpx, seg_ids[idx[ok], 0], grad_a)
        np.add.at(gpx, seg_ids[idx[ok], 1], grad_b)

        # chain 2D pixel gradients through the projection to 3D vertices
        active = np.nonzero((np.abs(gpx) > 0).any(axis=1))[0]
        if len(active) == 0:
            continue
        P = view.camera.P
        h2 = aux["z"][active]
        du_dx = (P[0, :3][None, :] - uv[active, 0:1] * P[2, :3][None, :]) / h2[:, None]
        dv_dx = (P[1, :3][None, :] - uv[active, 1:2] * P[2, :3][None, :]) / h2[:, None]
        grad[active] += gpx[active, 0:1] * du_dx + gpx[active, 1:2] * dv_dx
    return total, grad


# ---------------------------------------------------------------------------
# total objective and the optimizer


@dataclass
class FitConfig:
    iterations: int = 500
    optimizer: str = "adam"  # "adam" | "monotone" (line-search descent)
    lr: float = 1e-2  # adam step size
    step: float = 1e-2  # m: largest per-vertex displacement (monotone mode)
    max_step: float = 0.25  # m (monotone mode)
    tau: float = 2.0
    min_step: float = 1e-9
    step_growth: float = 1.3
    rel_tol: float = 1e-10  # stop when the accepted decrease stalls (monotone)


@dataclass
class FitResult:
    mesh: TriangleMesh
    params: ShapeParams
    trace: list[dict]  # per accepted iteration: loss terms + total

    def trace_csv(self) -> str:
        lines = ["iteration,l_sil,l_lidar,l_edge,l_normal,l_laplacian,total"]
        for row in self.trace:
            lines.append(
                f"{row['iteration']},{row['l_sil']:.9g},{row['l_lidar']:.9g},"
                f"{row['l_edge']:.9g},{row['l_normal']:.9g},{row['l_laplacian']:.9g},"
                f"{row['total']:.9g}"
            )
        return "\n".join(lines) + "\n"


def total_loss_terms(
    verts: np.ndarray,
    faces: np.ndarray,
    obs: Observation,
    weights: LossWeights,
    tau: float,
    topo: MeshTopology,
    with_grad: bool = True,
) -> tuple[dict, np.ndarray | None]:
    grad = np.zeros_like(verts) if with_grad else None
    terms = {"l_sil": 0.0, "l_lidar": 0.0, "l_edge": 0.0, "l_normal": 0.0, "l_laplacian": 0.0}

    if len(obs.points):
        val, g = chamfer_loss_grad(verts, obs.points)
        terms["l_lidar"] = val
        if with_grad:
            grad += g
    if obs.views:
        val, g = silhouette_loss_grad(verts, faces, obs.views, tau, topo)
        terms["l_sil"] = val
        if with_grad:
            grad += g
    val, g = edge_loss_grad(verts, topo)
    terms["l_edge"] = val
    if with_grad:
        grad += weights.edge * g
    val, g = normal_loss_grad(verts, faces, topo)
    terms["l_normal"] = val
    if with_grad:
        grad += weights.normal * g
    val, g = laplacian_loss_grad(verts, topo)
    terms["l_laplacian"] = val
    if with_grad:
        grad += weights.laplacian * g

    terms["total"] = (
        terms["l_sil"]
        + terms["l_lidar"]
        + weights.edge * terms["l_edge"]
        + weights.normal * terms["l_normal"]
        + weights.laplacian * terms["l_laplacian"]
    )
    return terms, grad


def fit_shape(
    obs: Observation,
    init: ShapeParams,
    faces: np.ndarray,
    weights: LossWeights = LossWeights(),
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Minimize the total objective over the per-vertex deformation.

    Default mode is Adam on the deformation, returning the best iterate seen
    (so the final total never exceeds the initial one). ``monotone`` mode is
    plain steepest descent with step halving: the direction is scaled so the
    farthest-moving vertex travels ``step`` meters and the step is halved
    until the loss does not increase, giving a non-increasing trace.
    NonFiniteLoss surfaces the iteration at which the objective diverged.
    """
    faces = np.asarray(faces, dtype=np.int32)
    topo = build_topology(faces, len(init.mean_shape))
    delta = init.deformation.copy()
    lim = init.max_deform

    def terms_at(d, with_grad):
        verts = init.mean_shape + d
        return total_loss_terms(verts, faces, obs, weights, config.tau, topo, with_grad)

    terms, grad = terms_at(delta, with_grad=True)
    if not math.isfinite(terms["total"]):
        raise NonFiniteLoss(0)
    trace = [dict(iteration=0, **terms)]

    if config.optimizer == "adam":
        m = np.zeros_like(delta)
        v = np.zeros_like(delta)
        b1, b2, eps = 0.9, 0.999, 1e-8
        best_total, best_delta = terms["total"], delta.copy()
        for it in range(1, config.iterations + 1):
            m = b1 * m + (1.0 - b1) * grad
            v = b2 * v + (1.0 - b2) * grad * grad
            mh = m / (1.0 - b1**it)
            vh = v / (1.0 - b2**it)
            delta = np.clip(delta - config.lr * mh / (np.sqrt(vh) + eps), -lim, lim)
            terms, grad = terms_at(delta, with_grad=True)
            if not math.isfinite(terms["total"]):
                raise NonFiniteLoss(it)
            trace.append(dict(iteration=it, **terms))
            if terms["total"] < best_total:
                best_total, best_delta = terms["total"], delta.copy()
        delta = best_delta
    elif config.optimizer == "monotone":
        step = config.step
        for it in range(1, config.iterations + 1):
            gmax = np.linalg.norm(grad, axis=1).max()
            if gmax == 0.0:
                break
            direction = grad / gmax
            moved = False
            while step >= config.min_step:
                cand = np.clip(delta - step * direction, -lim, lim)
                cand_terms, _ = terms_at(cand, with_grad=False)
                if not math.isfinite(cand_terms["total"]):
                    raise NonFiniteLoss(it)
                if cand_terms["total"] <= terms["total"]:
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
            prev_total = terms["total"]
            delta = cand
            terms, grad = terms_at(delta, with_grad=True)
            trace.append(dict(iteration=it, **terms))
            step = min(step * config.step_growth, config.max_step)
            if prev_total - terms["total"] <= config.rel_tol * max(prev_total, 1.0):
                break
    else:
        raise ValueError(f"unknown optimizer {config.optimizer!r}")

    params = ShapeParams(init.mean_shape, delta, init.max_deform)
    return FitResult(TriangleMesh(params.vertices(), faces), params, trace)


def grad_check(
    fn,
    verts: np.ndarray,
    eps: float = 1e-4,
    n_coords: int = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn(verts) -> (value, grad)``; eps must lie in [1e-6, 1e-3].
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError("eps must be within [1e-6, 1e-3]")
    rng = rng or np.random.default_rng(0)
    _, grad = fn(verts)
    flat_n = verts.size
    coords = rng.choice(flat_n, size=min(n_coords, flat_n), replace=False)
    worst = 0.0
    for c in coords:
        i, k = divmod(int(c), 3)
        vp = verts.copy()
        vp[i, k] += eps
        vm = verts.copy()
        vm[i, k] -= eps
        fd = (fn(vp)[0] - fn(vm)[0]) / (2.0 * eps)
        a = grad[i, k]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst
