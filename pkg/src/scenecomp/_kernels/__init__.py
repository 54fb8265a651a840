"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``_core``, built from ``_core.pyx``) is preferred when
importable; otherwise the numpy implementation is used. Selection can be
forced with the ``SCENECOMP_BACKEND`` environment variable:

    SCENECOMP_BACKEND=compiled   require the extension (ImportError if absent)
    SCENECOMP_BACKEND=numpy      force the pure-Python fallback

Both backends are operation-for-operation equivalent; ``benchmarks/`` holds a
script comparing their throughput.
"""

from __future__ import annotations

import os

import numpy as np

from . import numpy_impl

_env = os.environ.get("SCENECOMP_BACKEND", "auto").lower()
if _env in ("auto", "", "c", "compiled"):
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _env in ("c", "compiled"):
            raise
        _impl = numpy_impl
        BACKEND = "numpy"
elif _env in ("py", "numpy", "python"):
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    raise ValueError(f"unknown SCENECOMP_BACKEND={_env!r}")


def available_backends() -> dict:
    """Importable kernel modules keyed by backend name (for tests/benchmarks)."""
    out = {"numpy": numpy_impl}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out


def raster_depth(xy, z, faces, width, height, module=None):
    """Z-buffer rasterize projected triangles; +inf where uncovered."""
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    return (module or _impl).raster_depth(xy, z, faces, int(width), int(height))


def chamfer_min_sq(points, verts, module=None):
    """Per-point squared distance to nearest vertex and its index."""
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    verts = np.ascontiguousarray(verts, dtype=np.float64).reshape(-1, 3)
    if len(verts) == 0:
        raise ValueError("vertex set must be non-empty")
    return (module or _impl).chamfer_min_sq(points, verts)


def bilinear_sample(img, uv, module=None):
    """Bilinear image lookup at continuous (x, y) pixel coords, border-clamped."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    uv = np.ascontiguousarray(uv, dtype=np.float64).reshape(-1, 2)
    return (module or _impl).bilinear_sample(img, uv)


def segment_distance_2d(pts, segs, module=None):
    """Distance, nearest-segment index, and foot parameter for 2D points."""
    pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 2)
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    if len(segs) == 0:
        raise ValueError("segment set must be non-empty")
    return (module or _impl).segment_distance_2d(pts, segs)
