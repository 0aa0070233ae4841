"""Build the optional compiled engine.

The engine modules are plain Python; when Cython and a C compiler are
available they are also compiled to extension modules from the same source.
Any failure leaves a working pure-Python install.
"""

import hashlib
import json
import os
from pathlib import Path

from setuptools import setup
from setuptools.command.build_ext import build_ext

PKG = Path("src/qnetsim")
ENGINE = ("physics", "simcore", "link", "aqm", "transport", "network")


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"warning: compiled engine not built ({exc}); using pure Python")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not compiled ({exc})")


def extensions():
    if os.environ.get("QNETSIM_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    sources = [str(PKG / f"{m}.py") for m in ENGINE]
    # fingerprints let the package detect extensions built from stale source
    manifest = {m: hashlib.sha256((PKG / f"{m}.py").read_bytes()).hexdigest() for m in ENGINE}
    (PKG / "_ext_manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return cythonize(sources, language_level=3, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
