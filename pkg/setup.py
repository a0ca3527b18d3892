import os

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

npyrandom_dir = os.path.abspath(
    os.path.join(numpy.get_include(), "..", "..", "random", "lib")
)

extensions = [
    Extension(
        "sbbm.kernels._core",
        ["src/sbbm/kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[npyrandom_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
