"""Build script: compiles the optional Cython core.

The package works without the extension (a numpy fallback is selected at
import time); the build therefore degrades gracefully when Cython or a C
compiler is unavailable.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "dyadtest._kernels",
                ["src/dyadtest/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover
    print(f"dyadtest: skipping compiled core ({exc}); pure-python fallback will be used")

setup(ext_modules=ext_modules)
