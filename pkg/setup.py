"""Build script for the optional compiled kernels.

The package is pure Python plus one Cython extension holding the two hot
loops (Efron partial-likelihood scan, concordance pair counting). If Cython
or a C compiler is unavailable the build falls back to a pure-Python install;
the kernels package selects the numpy implementation at import time.
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "survkit._kernels._core",
                ["src/survkit/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
