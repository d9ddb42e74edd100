"""Build script: compiles the optional extension with the link hot kernels.

The package works without the extension (a numpy fallback is selected at
import time), so compilation failures are non-fatal.  Set THZFL_SKIP_EXT=1
to force a pure-Python install.
"""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("THZFL_SKIP_EXT") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "thzfl._kernels._core",
        ["src/thzfl/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off keeps the C loops bit-identical to the numpy
        # fallback (no FMA contraction).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions())
