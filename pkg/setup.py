import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# Without Cython the package still installs and runs on the pure-Python kernels.
ext_modules = []
if cythonize is not None and not os.environ.get("DUELBENCH_NO_EXTENSION"):
    ext_modules = cythonize(
        [
            Extension(
                "duelbench._kernels",
                ["src/duelbench/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
