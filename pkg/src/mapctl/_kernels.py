"""Backend selection for the simulation kernels.

The compiled extension is used when it imports; set ``MAPCTL_PURE_PYTHON=1``
to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_compiled = None

if os.environ.get("MAPCTL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
        BACKEND = "cython"
    except ImportError:
        _compiled = None


def get(backend: str | None = None):
    """Kernel module for ``backend`` ('cython', 'python' or None for the default)."""
    backend = backend or BACKEND
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall the package")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


def available() -> tuple[str, ...]:
    return ("cython", "python") if _compiled is not None else ("python",)
