"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
``use_backend`` switches explicitly (tests and the benchmark compare both).
"""

from __future__ import annotations

from . import _pykernels

try:  # pragma: no cover - depends on build
    from . import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

_active = _ckernels if _ckernels is not None else _pykernels


def available() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def use_backend(name: str) -> None:
    global _active
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        _active = _ckernels
    elif name == "python":
        _active = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def active():
    return _active


def name() -> str:
    return _active.NAME
