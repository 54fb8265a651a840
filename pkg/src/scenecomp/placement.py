"""Lane-consistent placement sampling and the BEV -> 6DoF lift.

A placement is accepted only if it passes all three filters: it lies in a
lane strip (guaranteed by construction), its center is visible from the
camera, and its footprint box hits no obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoValidPlacement, OutOfGrid
from .geometry import CameraView, OrientedBox2D, Pose6DoF, boxes_collide, pose_from_bev, wrap_angle
from .lanemap import GroundElevation, LaneGraph

# default vehicle footprint when no asset shape is known (length x width)
DEFAULT_FOOTPRINT = (4.5, 2.0)


@dataclass
class Placement:
    """BEV object center and heading."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.theta = wrap_angle(self.theta)

    def footprint(self, length: float = DEFAULT_FOOTPRINT[0], width: float = DEFAULT_FOOTPRINT[1]) -> OrientedBox2D:
        return OrientedBox2D(self.x, self.y, length / 2.0, width / 2.0, self.theta)


def lift_to_6dof(p: Placement, elevation: GroundElevation) -> Pose6DoF:
    """Attach the local ground height; roll/pitch stay zero (flat-ground lift)."""
    z = elevation.query(p.x, p.y)  # raises OutOfGrid outside coverage
    return pose_from_bev(p.x, p.y, z, p.theta)


def in_camera_fov(pose: Pose6DoF, camera: CameraView) -> bool:
    """Center-visibility check: positive depth and pixel inside the image."""
    return camera.sees(pose.translation)


def sample_placement(
    graph: LaneGraph,
    elevation: GroundElevation,
    camera: CameraView,
    obstacles: list[OrientedBox2D],
    rng: np.random.Generator,
    footprint: tuple[float, float] = DEFAULT_FOOTPRINT,
    max_attempts: int = 1000,
) -> Placement:
    """Rejection-sample a lane placement visible from the camera.

    Candidates are drawn uniformly by arclength over all lanes with a uniform
    lateral offset inside the lane strip; heading is the local centerline
    tangent. Raises NoValidPlacement once the attempt budget is spent.
    """
    if not graph.lanes:
        raise NoValidPlacement(0, "empty lane graph")
    lengths = np.array([ln.length for ln in graph.lanes])
    cum = np.cumsum(lengths)
    total = cum[-1]

    for attempt in range(max_attempts):
        r = rng.uniform(0.0, total)
        li = int(np.searchsorted(cum, r, side="right"))
        li = min(li, len(graph.lanes) - 1)
        lane = graph.lanes[li]
        s = r - (cum[li] - lengths[li])
        lateral = rng.uniform(-lane.width / 2.0, lane.width / 2.0)

        base = lane.point_at(s)
        heading = lane.heading_at(s)
        nx, ny = -math.sin(heading), math.cos(heading)  # left normal
        cand = Placement(base[0] + lateral * nx, base[1] + lateral * ny, heading)

        try:
            pose = lift_to_6dof(cand, elevation)
        except OutOfGrid:
            continue
        if not in_camera_fov(pose, camera):
            continue
        box = cand.footprint(*footprint)
        if any(boxes_collide(box, obs) for obs in obstacles):
            continue
        return cand

    raise NoValidPlacement(max_attempts)
