from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [Extension("skydrop._tourkernel", ["src/skydrop/_tourkernel.pyx"])],
        language_level=3,
    )
except ImportError:
    # pure-Python fallback in skydrop.routing_py takes over at import time
    ext_modules = []

setup(ext_modules=ext_modules)
