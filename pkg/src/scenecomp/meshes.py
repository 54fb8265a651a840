"""Triangle meshes: icosasphere construction, adjacency, normals, binary I/O.

Meshes are plain vertex/face arrays. Object-frame convention for bank assets:
+x forward, +y left, +z up, origin at the ground contact point (min z = 0).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFace

MESH_MAGIC = b"SCMB"


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V,3) float64, meters
    faces: np.ndarray  # (F,3) int32

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
            f = self.faces
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
                raise ValueError("degenerate face (repeated vertex index)")

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy())

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "TriangleMesh":
        v = self.vertices @ np.asarray(rotation, float).T + np.asarray(translation, float)
        return TriangleMesh(v, self.faces)

    def bbox_extents(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class MeshTopology:
    """Neighbor structure precomputed once per face layout.

    ``edges`` lists each undirected edge once; ``neighbors``/``offsets`` form a
    CSR table of the first-ring vertex neighborhood; ``face_pairs`` holds the
    index pairs of faces sharing an edge; ``edge_faces`` gives the (up to two)
    faces adjacent to each edge, -1 when the edge is a border.
    """

    edges: np.ndarray  # (E,2) int64, i < j
    neighbors: np.ndarray  # flat int64
    offsets: np.ndarray  # (V+1,) int64
    face_pairs: np.ndarray  # (P,2) int64
    edge_faces: np.ndarray  # (E,2) int64, -1 for missing
    degree: np.ndarray = field(init=False)

    def __post_init__(self):
        self.degree = np.diff(self.offsets)


def build_topology(faces: np.ndarray, n_vertices: int) -> MeshTopology:
    f = np.asarray(faces, dtype=np.int64)
    raw = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = np.sort(raw, axis=1)
    edges, inverse = np.unique(und, axis=0, return_inverse=True)

    # CSR vertex neighborhoods from the undirected edge list
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.argsort(src, kind="stable")
    neighbors = dst[order]
    offsets = np.zeros(n_vertices + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)

    # faces sharing an edge: group the per-face edge ids
    face_ids = np.tile(np.arange(len(f)), 3)
    order = np.argsort(inverse, kind="stable")
    einv, fids = inverse[order], face_ids[order]
    pairs = []
    edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
    start = 0
    for k in range(1, len(einv) + 1):
        if k == len(einv) or einv[k] != einv[start]:
            group = fids[start:k]
            eid = einv[start]
            edge_faces[eid, 0] = group[0]
            if len(group) > 1:
                edge_faces[eid, 1] = group[1]
            for a in range(len(group)):
                for b in range(a + 1, len(group)):
                    pairs.append((group[a], group[b]))
            start = k
    face_pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return MeshTopology(edges, neighbors, offsets, face_pairs, edge_faces)


def face_normals(mesh: TriangleMesh, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals and raw cross products; raises DegenerateFace on zero area."""
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norms = np.linalg.norm(cross, axis=1)
    if (norms < eps).any():
        bad = int(np.argmin(norms))
        raise DegenerateFace(f"face {bad} has zero area")
    return cross / norms[:, None], cross


_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1.0, _ICO_T, 0.0], [1.0, _ICO_T, 0.0], [-1.0, -_ICO_T, 0.0], [1.0, -_ICO_T, 0.0],
        [0.0, -1.0, _ICO_T], [0.0, 1.0, _ICO_T], [0.0, -1.0, -_ICO_T], [0.0, 1.0, -_ICO_T],
        [_ICO_T, 0.0, -1.0], [_ICO_T, 0.0, 1.0], [-_ICO_T, 0.0, -1.0], [-_ICO_T, 0.0, 1.0],
    ]
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int32,
)


def make_icosasphere(subdivisions: int) -> TriangleMesh:
    """Unit-radius sphere from repeated icosahedron subdivision.

    Subdivision 4 gives the 2562-vertex / 5120-face mesh used as the shape
    template.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def midpt(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpt(a, b), midpt(b, c), midpt(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int32))


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Binary little-endian mesh: magic, u32 counts, f32 vertices, u32 faces."""
    with open(path, "wb") as fh:
        fh.write(MESH_MAGIC)
        fh.write(struct.pack("<II", len(mesh.vertices), len(mesh.faces)))
        fh.write(mesh.vertices.astype("<f4").tobytes())
        fh.write(mesh.faces.astype("<u4").tobytes())


def load_mesh(path) -> TriangleMesh:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MESH_MAGIC:
            raise ValueError(f"{path}: bad mesh magic {magic!r}")
        nv, nf = struct.unpack("<II", fh.read(8))
        verts = np.frombuffer(fh.read(nv * 12), dtype="<f4").reshape(nv, 3)
        faces = np.frombuffer(fh.read(nf * 12), dtype="<u4").reshape(nf, 3)
    return TriangleMesh(verts.astype(np.float64), faces.astype(np.int32))
