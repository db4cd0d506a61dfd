"""Build the optional Cython kernel core.

The extension is marked optional: if it fails to compile, the package
still installs and falls back to the pure-Python kernels at import time.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: ship pure Python only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "qrecover._kernels",
                ["src/qrecover/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
