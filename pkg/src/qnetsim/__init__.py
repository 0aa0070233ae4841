"""Packet-switched quantum network simulator with QTCP congestion control.

The engine modules (physics, simcore, link, aqm, transport, network) may be
compiled with Cython from their own source.  The compiled build is used when
it matches the source on disk; set ``QNETSIM_PURE=1`` to force the
pure-Python modules.  ``BACKEND`` reports which one was loaded.
"""

import hashlib
import importlib.machinery
import importlib.util
import json
import os
import sys
import warnings
from pathlib import Path

__version__ = "0.1.0"

ENGINE_MODULES = ("physics", "simcore", "link", "aqm", "transport", "network")

_HERE = Path(__file__).resolve().parent


def _compiled_is_current() -> bool:
    manifest = _HERE / "_ext_manifest.json"
    if not manifest.exists():
        return False
    try:
        hashes = json.loads(manifest.read_text())
    except ValueError:
        return False
    for name in ENGINE_MODULES:
        if not any((_HERE / f"{name}{sfx}").exists() for sfx in importlib.machinery.EXTENSION_SUFFIXES):
            return False
        if hashes.get(name) != hashlib.sha256((_HERE / f"{name}.py").read_bytes()).hexdigest():
            warnings.warn(
                f"compiled qnetsim.{name} is out of date with its source; using pure Python "
                "(rebuild with `pip install -e . --no-build-isolation`)",
                RuntimeWarning,
                stacklevel=2,
            )
            return False
    return True


def _load_pure() -> None:
    # dependency order, so relative imports resolve through sys.modules
    for name in ENGINE_MODULES:
        full = f"{__name__}.{name}"
        spec = importlib.util.spec_from_file_location(full, _HERE / f"{name}.py")
        module = importlib.util.module_from_spec(spec)
        sys.modules[full] = module
        spec.loader.exec_module(module)
        globals()[name] = module


if os.environ.get("QNETSIM_PURE", "") not in ("", "0") or not _compiled_is_current():
    _load_pure()
    BACKEND = "python"
else:
    BACKEND = "compiled"
