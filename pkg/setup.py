"""Build script: compiles the optional Cython fitting kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so any build failure here downgrades to a pure-Python install
instead of aborting.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "tistack._kernels._irfit_c",
                ["src/tistack/_kernels/_irfit_c.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # noqa: BLE001 - any build-chain gap means pure-Python install
    print(f"tistack: building without compiled kernel ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
