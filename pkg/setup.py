"""Build script for the optional compiled kernels.

The package works without them: ``piwcov.kernels`` falls back to a
numpy implementation when ``piwcov._kernels`` cannot be imported.
"""
import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            warnings.warn(f"compiled kernels not built, using numpy fallback: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            warnings.warn(f"failed to build {ext.name}: {exc}")


if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "piwcov._kernels",
                sources=["src/piwcov/_kernels.pyx"],
                extra_compile_args=["-O2"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
else:  # pragma: no cover
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
