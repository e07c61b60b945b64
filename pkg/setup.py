"""Build script for the optional compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so compilation failures are non-fatal: we build with
``optional=True`` semantics by catching errors in the build step.
"""

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible; fall back to pure python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, cython missing, ...
            print(f"warning: skipping compiled kernels ({exc}); "
                  "pure-python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "pure-python fallback will be used")


try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "codedlens.kernels._conv_cy",
                ["src/codedlens/kernels/_conv_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
