"""Build the optional Cython kernels.

The package works without them: ``mapctl._kernels`` falls back to the pure
Python implementations in ``mapctl._pykernels`` when the extension is absent.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build without Cython
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "mapctl._ckernels",
                ["src/mapctl/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
