"""Build script: compiles the optional disc-sum kernel extension.

The package works without the extension (czlab.kernels falls back to the
numpy implementation), so a failed compile is not fatal for development
checkouts; `pip install` still requires cython + a C compiler.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "czlab._kernels_c",
                ["src/czlab/_kernels_c.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
