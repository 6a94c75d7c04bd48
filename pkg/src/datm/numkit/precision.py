"""Global precision mode and strict-determinism flag.

Storage defaults to float32 (typical training); reductions always accumulate
in float64. The f64 mode exists so finite-difference gradient checks are not
drowned in rounding noise.
"""

import contextlib
import os

import numpy as np

_STORAGE_DTYPE = np.float32
_STRICT = os.environ.get("DATM_STRICT", "") == "1"


def storage_dtype():
    return _STORAGE_DTYPE


def set_precision(mode: str) -> None:
    """Set the storage precision: "f32" (default) or "f64"."""
    global _STORAGE_DTYPE
    if mode == "f32":
        _STORAGE_DTYPE = np.float32
    elif mode == "f64":
        _STORAGE_DTYPE = np.float64
    else:
        raise ValueError(f"unknown precision mode: {mode!r}")


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch the storage precision."""
    old = "f64" if _STORAGE_DTYPE == np.float64 else "f32"
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(old)


def strict_mode() -> bool:
    return _STRICT


def set_strict(flag: bool) -> None:
    global _STRICT
    _STRICT = bool(flag)
