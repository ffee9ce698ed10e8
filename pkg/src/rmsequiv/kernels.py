"""Kernel backend selection.

The compiled extension is preferred when importable; the pure NumPy fallback
is selected otherwise.  Override with the RMSEQUIV_BACKEND environment
variable ("cython" or "python") or programmatically via :func:`set_backend`
(used by the tests and the backend benchmark).
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernel_py

__all__ = ["active_backend", "available_backends", "get_kernels", "set_backend"]

_cython_module: ModuleType | None
try:
    from . import _kernel_cy as _cython_module
except ImportError:
    _cython_module = None

_BACKENDS: dict[str, ModuleType] = {"python": _kernel_py}
if _cython_module is not None:
    _BACKENDS["cython"] = _cython_module


def _initial() -> ModuleType:
    requested = os.environ.get("RMSEQUIV_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(
                f"RMSEQUIV_BACKEND={requested!r} is not available; "
                f"choices: {sorted(_BACKENDS)}"
            )
        return _BACKENDS[requested]
    return _BACKENDS.get("cython", _kernel_py)


_active = _initial()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active.BACKEND_NAME


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


def get_kernels() -> ModuleType:
    """Module providing ssr_batch / solve_qb_batch / wtilde_batch / exceed_batch."""
    return _active
