import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# optional=True: a failed compile leaves the numpy fallback in charge
ext = Extension(
    "ptsense._ckernels",
    ["src/ptsense/_ckernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    optional=True,
)

setup(
    ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}),
)
