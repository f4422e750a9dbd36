"""Build script: compiles the transfer kernel when Cython and numpy are available."""

import os

from setuptools import setup

ext_modules = []
compile_args = ["-O3"]
if os.environ.get("ANDLOC_PORTABLE") != "1":
    compile_args.append("-march=native")
if os.environ.get("ANDLOC_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("andloc._kernels", ["src/andloc/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       extra_compile_args=compile_args)],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
