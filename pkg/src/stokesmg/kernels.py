"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is. ``STOKESMG_KERNELS=python`` (or ``compiled``) forces a choice.
"""

import importlib
import os

_MODULES = {"compiled": "stokesmg._kernels", "python": "stokesmg._pykernels"}


def load(name):
    """Return the kernel module registered under ``name``."""
    if name not in _MODULES:
        raise ValueError(f"unknown kernel backend {name!r}; choose from {sorted(_MODULES)}")
    return importlib.import_module(_MODULES[name])


def available():
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    forced = os.environ.get("STOKESMG_KERNELS", "").strip().lower()
    if forced:
        return forced, load(forced)
    try:
        return "compiled", load("compiled")
    except ImportError:
        return "python", load("python")


BACKEND_NAME, backend = _select()


def get(name=None):
    """Kernel module by name, or the import-time default for ``None``."""
    return backend if name is None else load(name)
