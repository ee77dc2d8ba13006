from setuptools import setup, Extension
from Cython.Build import cythonize
import numpy as np

ext = Extension(
    "geofno._kernels._fast",
    ["src/geofno/_kernels/_fast.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-march=native", "-ffast-math"],
    libraries=["mvec", "m"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level="3"))
