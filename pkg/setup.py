# Builds the compiled split-search core. The package works without it
# (pibench.kernels falls back to the numpy reference implementation), so a
# failed compile only costs speed.
import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = cythonize(
    [
        Extension(
            "pibench.kernels._core",
            ["src/pibench/kernels/_core.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)
