"""Build script.

The LSTM sequence kernel is compiled from Cython when a toolchain is
available.  If compilation fails for any reason the install still succeeds
and the package falls back to the pure numpy implementation at import time.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that degrades to a pure-python install on compile errors."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing or broken
            warnings.warn(f"compiled kernel skipped ({exc}); using pure numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"building {ext.name} failed ({exc}); using pure numpy fallback")


def extensions():
    import os

    if not os.path.exists("src/reachpred/nn/_lstm_kernel.pyx"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "reachpred.nn._lstm_kernel",
        ["src/reachpred/nn/_lstm_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
