import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

np_root = os.path.dirname(np.__file__)
core = "_core" if os.path.isdir(os.path.join(np_root, "_core", "lib")) else "core"

ext = Extension(
    "drmdp._kernels",
    ["src/drmdp/_kernels.pyx"],
    include_dirs=[np.get_include()],
    library_dirs=[os.path.join(np_root, "random", "lib"), os.path.join(np_root, core, "lib")],
    libraries=["npyrandom", "npymath"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": 3}))
