import os

import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional; ddkalman.kernels falls back to NumPy.
ext_modules = []
if os.environ.get("DDKALMAN_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "ddkalman._bandkernels",
                    ["src/ddkalman/_bandkernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
