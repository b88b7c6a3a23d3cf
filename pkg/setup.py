"""Build script for the optional compiled kernels.

The package works without the extension: ``morphreg.kernels`` falls back to
the numpy implementation when ``morphreg._ckernels`` cannot be imported.
Set ``MORPHREG_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import Extension, setup

# -fno-trapping-math lets gcc/clang if-convert and vectorise the loss loop;
# IEEE results and summation order are unchanged (no -ffast-math).
COMPILE_ARGS = [] if os.name == "nt" else ["-O3", "-fno-trapping-math", "-fno-math-errno"]

ext_modules = []
if not os.environ.get("MORPHREG_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "morphreg._ckernels",
                    ["src/morphreg/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=COMPILE_ARGS,
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
