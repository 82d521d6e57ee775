"""Build script for the optional compiled kernels.

The package is fully functional without the extension: pednav.kernels falls
back to the numpy reference implementation when the compiled module is
missing, so any build failure here is demoted to a warning.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the speedup extension if we can, skip it otherwise."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:  # missing compiler, broken toolchain
            self._warn(exc)

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        sys.stderr.write(
            "warning: compiled kernels unavailable (%s); "
            "falling back to the pure numpy implementation\n" % exc
        )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        optional_build_ext._warn(exc)
        return []
    ext = Extension(
        "pednav.kernels._speedups",
        ["src/pednav/kernels/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
