"""Kernel backend selection.

The compiled kernels are used when the extension imports; otherwise the numpy
fallback is used. ``CPM_AUTH_BACKEND=python`` forces the fallback and
``CPM_AUTH_BACKEND=cython`` makes a missing extension an import error.
"""
import os

from . import _pykernels

_choice = os.environ.get("CPM_AUTH_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise ImportError(f"CPM_AUTH_BACKEND must be auto, python or cython, not {_choice!r}")

kernels = _pykernels
if _choice != "python":
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _pykernels

BACKEND = kernels.NAME


def available_backends():
    """Names of the kernel modules that can be imported here."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return names
    return names + ["cython"]


def load(name):
    """Return the kernel module called ``name`` regardless of the active choice."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
