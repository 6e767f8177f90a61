import os

from setuptools import setup

ext_modules = []
if os.environ.get("HERMSPDE_NO_EXT", "0") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "hermspde._ckernels",
                    ["src/hermspde/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:  # no Cython: the numpy fallback is used at import
        ext_modules = []

setup(ext_modules=ext_modules)
