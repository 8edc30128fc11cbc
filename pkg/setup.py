"""Build script for the optional compiled branch-and-bound kernel.

The package is pure Python apart from rfplan.maxsat._bb, a Cython port of
the reference solver in rfplan.maxsat._pure.  If Cython or a C compiler is
missing the extension is skipped and the package falls back to the pure
implementation at import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython not available; building without the compiled solver kernel")
        return []
    ext = Extension(
        "rfplan.maxsat._bb",
        sources=["src/rfplan/maxsat/_bb.pyx"],
    )
    return cythonize(
        [ext],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


class optional_build_ext(build_ext):
    """Skip the extension instead of failing the whole install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            warnings.warn(f"compiled solver kernel skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled solver kernel skipped: {exc}")


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
