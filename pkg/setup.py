"""Build the optional compiled stencil; the package works without it."""
import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            print(f"warning: compiled kernel not built ({exc}); using numpy fallback",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def extensions():
    try:
        import numpy  # noqa: F401
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    args = ["-O3", "-fcx-limited-range"]
    link = []
    if os.environ.get("KUBOLAB_NO_OPENMP", "") in ("", "0") and sys.platform.startswith("linux"):
        args.append("-fopenmp")
        link.append("-fopenmp")
    ext = Extension("kubolab._kernels", ["src/kubolab/_kernels.pyx"],
                    extra_compile_args=args, extra_link_args=link)
    return cythonize([ext], language_level=3, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
