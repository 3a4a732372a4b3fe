"""Builds the compiled VM kernel; the package falls back to the pure-Python
interpreter when the extension is unavailable."""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "vulnfuzz.vm._speedups",
                ["src/vulnfuzz/vm/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
