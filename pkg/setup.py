import os

import numpy as np
from setuptools import Extension, setup

# RFFCOMM_NO_EXT=1 installs the pure-Python package only.
ext_modules = []
if not os.environ.get("RFFCOMM_NO_EXT"):
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "rffcomm._bp_core",
            ["src/rffcomm/_bp_core.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-fopenmp"],
            extra_link_args=["-fopenmp"],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
