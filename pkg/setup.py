"""Build hook for the optional compiled search kernel.

If Cython or a C compiler is missing the package still installs and the
pure-Python kernel is used.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension("gridrestore._ckernels", ["src/gridrestore/_ckernels.pyx"], optional=True)
    ext_modules = cythonize([ext], language_level=3, quiet=True)
except ImportError:
    pass

setup(ext_modules=ext_modules)
