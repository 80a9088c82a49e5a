"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled Cython backend is used when available; set
``FWSPDE_KERNEL=python`` or ``FWSPDE_KERNEL=cython`` to force a choice.
Both backends consume per-path PCG64 streams in (step, mode) order and
order their floating-point reductions identically, so they produce
bit-identical results (see benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os

from . import _py

try:  # compiled extension is optional
    from . import _diag_cy
except ImportError:  # pragma: no cover - depends on build environment
    _diag_cy = None

_FORCED = os.environ.get("FWSPDE_KERNEL", "").strip().lower()
if _FORCED == "python":
    _impl = _py
elif _FORCED == "cython":
    if _diag_cy is None:
        raise ImportError("FWSPDE_KERNEL=cython but the compiled backend "
                          "is not available")
    _impl = _diag_cy
else:
    _impl = _diag_cy if _diag_cy is not None else _py

BACKEND = _impl.BACKEND


def backend_name() -> str:
    return BACKEND


def available_backends():
    out = {"python": _py}
    if _diag_cy is not None:
        out["cython"] = _diag_cy
    return out


def get_backend(name: str):
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}") from None


def batch_paths(*args, **kwargs):
    return _impl.batch_paths(*args, **kwargs)


def exit_paths(*args, **kwargs):
    return _impl.exit_paths(*args, **kwargs)
