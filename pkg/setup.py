import os

import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the compiled kernels bit-compatible with the
# numpy fallback (no FMA contraction of a*b+c expressions).
_npyrandom_dir = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
extensions = [
    Extension(
        "collapselab._kernels._compiled",
        ["src/collapselab/_kernels/_compiled.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[_npyrandom_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
