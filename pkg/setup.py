from setuptools import Extension, setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        [Extension("metatune._qkernel", ["src/metatune/_qkernel.pyx"], extra_compile_args=["-O3"])],
        language_level=3,
    ),
)
