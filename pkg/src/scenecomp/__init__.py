"""scenecomp: geometry-aware insertion of 3D vehicle assets into camera scenes.

Subsystems: lane-map placement sampling, 10 Hz traffic simulation, viewpoint-
scored asset retrieval, direct mesh fitting, and depth-raster/inverse-warp
compositing with occlusion and shadows. See the CLI (``scenecomp --help``)
for the end-to-end pipeline.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
