"""Build script for the optional compiled kernels.

If Cython or a C compiler is unavailable the package still installs and the
pure-Python fallback in ``flis._fallback`` is used at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("FLIS_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "flis._kernels",
                    ["src/flis/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
