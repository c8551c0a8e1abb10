"""Builds the optional compiled kernel core.

The package works without it (numpy fallback); set LBENERGY_NO_EXT=1 to skip.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LBENERGY_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "lbenergy.kernels._core",
                    ["src/lbenergy/kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: results must match the python paths bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
