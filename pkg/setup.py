import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernel core is optional: without Cython the package installs
# with the pure-numpy backend only.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "egrpo._kernels._core",
                ["src/egrpo/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -ffast-math lets gcc call the vectorized libmvec tanhf/expf
                extra_compile_args=["-O3", "-march=native", "-ffast-math"],
                libraries=["mvec", "m"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
