"""Poses, pinhole cameras, and oriented-box collision tests.

BEV means the bird's-eye-view plane: x/y in meters, heading theta in radians
measured counter-clockwise from +x. World frame is right-handed with z up.
Camera projection matrices P are 3x4 (pixels from meters); the value stored in
depth maps is camera-space z, i.e. the third homogeneous coordinate of P @ X.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularCamera


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference a - b on the circle, in [-pi, pi)."""
    return wrap_angle(a - b)


def yaw_matrix(theta: float) -> np.ndarray:
    """Rotation about the vertical (z) axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class Pose6DoF:
    """Rigid transform placing an object in the world."""

    translation: np.ndarray  # (3,) meters
    rotation: np.ndarray  # (3,3) orthonormal, det +1

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation not orthonormal (|R^T R - I| = {err:.2e})")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1")

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the pose to (N,3) object-frame points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation


def pose_from_bev(x: float, y: float, z: float, theta: float) -> Pose6DoF:
    """6DoF pose from a BEV placement: yaw about z, roll/pitch zero."""
    return Pose6DoF(np.array([x, y, z]), yaw_matrix(theta))


@dataclass
class CameraView:
    """Pinhole camera: 3x4 projection matrix plus image dimensions."""

    P: np.ndarray  # (3,4) row-major
    width: int
    height: int
    _minv: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float).reshape(3, 4)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if np.linalg.matrix_rank(self.P) < 3:
            raise ValueError("projection matrix must have rank 3")

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project (N,3) world points; returns pixel (N,2) and depth (N,)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = pts @ self.P[:, :3].T + self.P[:, 3]
        depth = h[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = h[:, :2] / depth[:, None]
        return uv, depth

    def unproject(self, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Invert the projection: pixels + depths -> (N,3) world points."""
        if self._minv is None:
            m = self.P[:, :3]
            if abs(np.linalg.det(m)) < 1e-12:
                raise SingularCamera("left 3x3 of P is not invertible")
            self._minv = np.linalg.inv(m)
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        d = np.asarray(depth, dtype=float).reshape(-1)
        h = np.column_stack([uv[:, 0] * d, uv[:, 1] * d, d]) - self.P[:, 3]
        return h @ self._minv.T

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        m = self.P[:, :3]
        if abs(np.linalg.det(m)) < 1e-12:
            raise SingularCamera("left 3x3 of P is not invertible")
        return -np.linalg.solve(m, self.P[:, 3])

    def sees(self, point: np.ndarray) -> bool:
        """True iff the world point projects in front of the camera and inside

        [0, W) x [0, H).
        """
        uv, depth = self.project(np.asarray(point, dtype=float).reshape(1, 3))
        if depth[0] <= 0.0:
            return False
        u, v = uv[0]
        return 0.0 <= u < self.width and 0.0 <= v < self.height


def make_camera(
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    rotation: np.ndarray,
    translation: np.ndarray,
    width: int,
    height: int,
) -> CameraView:
    """Assemble P = K [R | t] with world-to-camera extrinsics."""
    K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    rt = np.hstack([np.asarray(rotation, float), np.asarray(translation, float).reshape(3, 1)])
    return CameraView(K @ rt, width, height)


def look_at_camera(
    eye: np.ndarray,
    target: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
    up: np.ndarray = (0.0, 0.0, 1.0),
) -> CameraView:
    """Camera at ``eye`` looking toward ``target`` (z_cam forward, y_cam down)."""
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=float))
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise ValueError("view direction parallel to up vector")
    right /= nr
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])  # world-to-camera
    t = -R @ eye
    return make_camera(fx, fy, cx, cy, R, t, width, height)


@dataclass
class OrientedBox2D:
    """BEV rectangle: center, half extents (along heading / across), heading."""

    cx: float
    cy: float
    half_length: float
    half_width: float
    heading: float

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("half-extents must be positive")

    def corners(self) -> np.ndarray:
        """(4,2) corner coordinates, counter-clockwise."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        ax = np.array([c, s]) * self.half_length
        ay = np.array([-s, c]) * self.half_width
        ctr = np.array([self.cx, self.cy])
        return np.array([ctr + ax + ay, ctr - ax + ay, ctr - ax - ay, ctr + ax - ay])

    def inflate(self, margin: float) -> "OrientedBox2D":
        return OrientedBox2D(
            self.cx, self.cy, self.half_length + margin, self.half_width + margin, self.heading
        )


def boxes_collide(a: OrientedBox2D, b: OrientedBox2D) -> bool:
    """Separating-axis overlap test for two BEV rectangles."""
    # cheap circumradius reject first
    ra = math.hypot(a.half_length, a.half_width)
    rb = math.hypot(b.half_length, b.half_width)
    if math.hypot(b.cx - a.cx, b.cy - a.cy) > ra + rb:
        return False
    ca, cb = a.corners(), b.corners()
    for box in (a, b):
        c, s = math.cos(box.heading), math.sin(box.heading)
        for ax, ay in ((c, s), (-s, c)):
            pa = ca @ (ax, ay)
            pb = cb @ (ax, ay)
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
