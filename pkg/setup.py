"""Build script: compiles the optional accelerator extension.

The package is fully functional without the compiled extension (a pure
NumPy implementation of the same kernels is selected at import time), so
the extension is marked optional and any build failure is non-fatal.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext = Extension(
        "ddlqi._kernels._core",
        sources=["src/ddlqi/_kernels/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    # No Cython available: install the pure-Python package as-is.
    ext_modules = []

setup(ext_modules=ext_modules)
