"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure-Python kernels are selected
at import time), so a failed compile must not break the install.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler etc.
            print(f"warning: skipping kernel extension build ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: skipping {ext.name} ({exc})")


ext_modules = []
if os.environ.get("ZETT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("zett.kernels._speed", ["src/zett/kernels/_speed.pyx"])],
            language_level=3,
        )
    except ImportError:
        print("warning: Cython not available, building without kernel extension")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
