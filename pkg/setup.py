"""Builds the optional compiled scan kernel; the package works without it."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GOLDGRID_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            ["src/goldgrid/goldbach/_ckernel.pyx"],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
