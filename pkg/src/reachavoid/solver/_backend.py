"""Kernel selection: compiled extension when importable, else pure Python."""
from __future__ import annotations

import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

AVAILABLE = {"python": _pykernel}
if _ckernel is not None:
    AVAILABLE["compiled"] = _ckernel


def default_backend() -> str:
    forced = os.environ.get("REACHAVOID_BACKEND", "").strip().lower()
    if forced:
        if forced not in AVAILABLE:
            raise ImportError(f"REACHAVOID_BACKEND={forced!r} is not available; have {sorted(AVAILABLE)}")
        return forced
    return "compiled" if "compiled" in AVAILABLE else "python"


DEFAULT = default_backend()


def get_kernel(name: str | None = None):
    name = name or DEFAULT
    try:
        return AVAILABLE[name]
    except KeyError:
        raise ValueError(f"unknown solver backend {name!r}; have {sorted(AVAILABLE)}") from None
