"""Build script: compiles the optional Cython kernel core.

The extension is an accelerator, not a requirement — if no compiler (or no
Cython) is available the install falls back to the pure-numpy kernels.
Build in place for development with:

    python setup.py build_ext --inplace
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Swallow compiler failures so the pure-Python install still succeeds."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any toolchain failure
            sys.stderr.write(f"scenecomp: skipping compiled kernels ({exc})\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            sys.stderr.write(f"scenecomp: skipping {ext.name} ({exc})\n")


def make_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError as exc:
        sys.stderr.write(f"scenecomp: compiled kernels unavailable ({exc})\n")
        return []
    ext = Extension(
        "scenecomp._kernels._core",
        ["src/scenecomp/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        # keep IEEE semantics identical to numpy (no fused multiply-add),
        # so both backends produce bit-equal rasters and distances
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
