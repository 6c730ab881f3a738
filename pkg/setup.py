import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "gatedfusion.kernels._cykernels",
                ["src/gatedfusion/kernels/_cykernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # Pure-python fallback still works without the compiled kernels.
    extensions = []

setup(ext_modules=extensions)
