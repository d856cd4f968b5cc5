"""Selects the descent-ensemble kernel at import time.

The compiled Cython kernel is preferred when present; the pure numpy
implementation is the fallback. GRF_BACKEND=python|cython|auto overrides
the choice (cython raises if the extension is missing). Both kernels
consume identical RNG streams and agree to floating-point reordering.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None


def available_backends():
    """Mapping of backend name to kernel module for everything importable
    in this installation."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


_choice = os.environ.get("GRF_BACKEND", "auto").lower()
if _choice == "python":
    _active, BACKEND_NAME = _kernels_py, "python"
elif _choice == "cython":
    if _compiled is None:
        raise ImportError("GRF_BACKEND=cython but the compiled kernel is not installed")
    _active, BACKEND_NAME = _compiled, "cython"
elif _choice == "auto":
    if _compiled is not None:
        _active, BACKEND_NAME = _compiled, "cython"
    else:
        _active, BACKEND_NAME = _kernels_py, "python"
else:
    raise ValueError(f"GRF_BACKEND must be python, cython or auto, got {_choice!r}")

run_fresh_ensemble = _active.run_fresh_ensemble
