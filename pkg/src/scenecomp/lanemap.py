"""HD-map data model: polyline lanes with widths over a ground elevation grid.

Map file schema (JSON, meters/radians):
    {"lanes": [{"id", "centerline": [[x, y], ...], "width",
                "successors": [id, ...]}, ...],
     "elevation": {"origin": [x, y], "cell_size", "rows", "cols",
                   "data": [row-major floats]}}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfGrid


@dataclass
class Lane:
    lane_id: str
    centerline: np.ndarray  # (K,2) ordered BEV points
    width: float
    successors: list[str] = field(default_factory=list)
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=float).reshape(-1, 2)
        if len(self.centerline) < 2:
            raise ValueError(f"lane {self.lane_id}: centerline needs >= 2 points")
        seg = np.diff(self.centerline, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        if (seglen == 0.0).any():
            raise ValueError(f"lane {self.lane_id}: repeated centerline point")
        if self.width <= 0:
            raise ValueError(f"lane {self.lane_id}: width must be positive")
        self._cum = np.concatenate([[0.0], np.cumsum(seglen)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def _locate(self, s: float) -> tuple[int, float]:
        """Segment index and within-segment fraction for arclength s (clamped)."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(max(i, 0), len(self._cum) - 2)
        seg = self._cum[i + 1] - self._cum[i]
        return i, (s - self._cum[i]) / seg

    def point_at(self, s: float) -> np.ndarray:
        """Centerline point at arclength s; extrapolates along the end tangents."""
        if 0.0 <= s <= self.length:
            i, f = self._locate(s)
            return self.centerline[i] * (1.0 - f) + self.centerline[i + 1] * f
        if s < 0.0:
            t = self.tangent_at(0.0)
            return self.centerline[0] + t * s
        t = self.tangent_at(self.length)
        return self.centerline[-1] + t * (s - self.length)

    def tangent_at(self, s: float) -> np.ndarray:
        i, _ = self._locate(s)
        d = self.centerline[i + 1] - self.centerline[i]
        return d / np.hypot(d[0], d[1])

    def heading_at(self, s: float) -> float:
        t = self.tangent_at(s)
        return math.atan2(t[1], t[0])

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Closest-point projection; returns (arclength, signed lateral offset).

        Lateral offset is positive to the left of the direction of travel.
        """
        p = np.array([x, y])
        a = self.centerline[:-1]
        b = self.centerline[1:]
        e = b - a
        ll = (e * e).sum(axis=1)
        t = np.clip(((p - a) * e).sum(axis=1) / ll, 0.0, 1.0)
        foot = a + t[:, None] * e
        d2 = ((p - foot) ** 2).sum(axis=1)
        i = int(d2.argmin())
        s = self._cum[i] + t[i] * math.sqrt(ll[i])
        tan = e[i] / math.sqrt(ll[i])
        rel = p - foot[i]
        lateral = float(tan[0] * rel[1] - tan[1] * rel[0])  # left positive
        return float(s), lateral


@dataclass
class LaneGraph:
    lanes: list[Lane]
    _by_id: dict[str, Lane] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {ln.lane_id: ln for ln in self.lanes}
        if len(self._by_id) != len(self.lanes):
            raise ValueError("duplicate lane ids")
        for ln in self.lanes:
            for s in ln.successors:
                if s not in self._by_id:
                    raise ValueError(f"lane {ln.lane_id}: unknown successor {s}")

    def lane(self, lane_id: str) -> Lane:
        return self._by_id[lane_id]

    @property
    def total_length(self) -> float:
        return sum(ln.length for ln in self.lanes)

    def neighbors_of(self, lane_id: str, s: float, heading_tol: float = math.radians(30)) -> list[str]:
        """Geometrically adjacent lanes at arclength s (no adjacency is stored).

        A lane qualifies if the query point projects within the two half-widths
        plus slack and the headings agree within ``heading_tol``.
        """
        cur = self.lane(lane_id)
        p = cur.point_at(s)
        h = cur.heading_at(s)
        out = []
        for ln in self.lanes:
            if ln.lane_id == lane_id:
                continue
            s2, lat = ln.project(p[0], p[1])
            if not (0.0 <= s2 <= ln.length):
                continue
            max_lat = cur.width / 2 + ln.width / 2 + 0.5
            if abs(lat) > max_lat or abs(lat) < 1e-6:
                continue
            dh = (ln.heading_at(s2) - h + math.pi) % (2 * math.pi) - math.pi
            if abs(dh) <= heading_tol:
                out.append(ln.lane_id)
        return out

    def distance_to_end(self, lane_id: str, s: float, horizon: float = 500.0) -> float:
        """Arclength to the end of the successor chain (inf if it loops/exceeds)."""
        seen = set()
        lane = self.lane(lane_id)
        d = lane.length - s
        while d < horizon:
            if not lane.successors:
                return max(d, 0.0)
            if lane.lane_id in seen:
                return math.inf
            seen.add(lane.lane_id)
            lane = self.lane(lane.successors[0])
            d += lane.length
        return math.inf


@dataclass
class GroundElevation:
    """Regular grid of ground heights with bilinear interpolation."""

    origin: np.ndarray  # (2,) lower corner (x, y)
    cell_size: float
    data: np.ndarray  # (rows, cols), rows along y, cols along x

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        self.data = np.asarray(self.data, dtype=float)
        if self.cell_size <= 0:
            raise ValueError("cell size must be positive")
        if self.data.ndim != 2 or self.data.shape[0] < 2 or self.data.shape[1] < 2:
            raise ValueError("elevation grid must be at least 2x2")

    def query(self, x: float, y: float) -> float:
        """Bilinear elevation; queries outside the grid raise OutOfGrid."""
        gx = (x - self.origin[0]) / self.cell_size
        gy = (y - self.origin[1]) / self.cell_size
        rows, cols = self.data.shape
        if not (0.0 <= gx <= cols - 1 and 0.0 <= gy <= rows - 1):
            raise OutOfGrid(f"({x:.2f}, {y:.2f}) outside elevation coverage")
        c0 = min(int(gx), cols - 2)
        r0 = min(int(gy), rows - 2)
        fx, fy = gx - c0, gy - r0
        d = self.data
        top = d[r0, c0] * (1 - fx) + d[r0, c0 + 1] * fx
        bot = d[r0 + 1, c0] * (1 - fx) + d[r0 + 1, c0 + 1] * fx
        return float(top * (1 - fy) + bot * fy)


def save_map(graph: LaneGraph, elevation: GroundElevation, path) -> None:
    doc = {
        "lanes": [
            {
                "id": ln.lane_id,
                "centerline": ln.centerline.tolist(),
                "width": ln.width,
                "successors": list(ln.successors),
            }
            for ln in graph.lanes
        ],
        "elevation": {
            "origin": elevation.origin.tolist(),
            "cell_size": elevation.cell_size,
            "rows": int(elevation.data.shape[0]),
            "cols": int(elevation.data.shape[1]),
            "data": [float(v) for v in elevation.data.ravel()],
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_map(path) -> tuple[LaneGraph, GroundElevation]:
    with open(path) as fh:
        doc = json.load(fh)
    lanes = [
        Lane(
            lane_id=str(entry["id"]),
            centerline=entry["centerline"],
            width=float(entry["width"]),
            successors=[str(s) for s in entry.get("successors", [])],
        )
        for entry in doc["lanes"]
    ]
    el = doc["elevation"]
    data = np.asarray(el["data"], dtype=float).reshape(int(el["rows"]), int(el["cols"]))
    return LaneGraph(lanes), GroundElevation(el["origin"], float(el["cell_size"]), data)
