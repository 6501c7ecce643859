"""Build script for the optional compiled trajectory stepper.

The package is pure Python except for ``lophase._stepper``, a small Cython
kernel for the Monte Carlo wave-function stepping loop.  If the extension
cannot be built or imported, the package falls back to a numpy implementation
with identical semantics (see ``lophase._backend``).
"""

import numpy
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "lophase._stepper",
                ["src/lophase/_stepper.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
