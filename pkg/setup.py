"""Build script for the optional compiled ensemble kernel.

The extension is a performance add-on: if Cython or a C compiler is
unavailable the install proceeds and the package falls back to the pure
numpy implementation at import time (see grfdescent.backend).
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "WARNING: compiled kernel build failed, the pure numpy backend "
            f"will be used instead ({exc})",
            file=sys.stderr,
        )


def extensions():
    try:
        import os

        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"WARNING: skipping compiled kernel ({exc})", file=sys.stderr)
        return []
    # the nogil RNG fill functions live in numpy's static npyrandom library
    random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")
    ext = Extension(
        "grfdescent._kernels",
        ["src/grfdescent/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[random_lib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
