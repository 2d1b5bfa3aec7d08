import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FAIRLENS_SKIP_NATIVE") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fairlens._kernels._native",
                ["src/fairlens/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
