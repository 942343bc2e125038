import os

from setuptools import Extension, setup

# The compiled coincidence kernel is optional: the package falls back to a
# vectorized numpy implementation when the extension is absent (or when
# QDTT_NO_EXT=1 is set at build time).
ext_modules = []
if os.environ.get("QDTT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("qdtt._kernels._corr", ["src/qdtt/_kernels/_corr.pyx"])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
