"""Build the optional Cython ADMM kernel.

The package works without it; ``sparsegc.prox`` falls back to a numpy
implementation when the compiled module cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SPARSEGC_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "sparsegc._admm_core",
                    ["src/sparsegc/_admm_core.pyx"],
                    extra_compile_args=["-O3"],
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
