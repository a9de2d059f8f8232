"""Kernel backend selection.

Tries the compiled Cython core first and falls back to the numpy
implementation. Override with EGRPO_BACKEND=compiled|numpy (``compiled``
raises if the extension is missing instead of silently falling back).
"""

import os

_choice = os.environ.get("EGRPO_BACKEND", "auto")

if _choice not in ("auto", "compiled", "numpy"):
    raise ValueError(f"EGRPO_BACKEND must be auto|compiled|numpy, got {_choice!r}")

if _choice == "numpy":
    from . import numpy_backend as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        from . import numpy_backend as _impl

        BACKEND = "numpy"

gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
adam_update = _impl.adam_update
polyak = _impl.polyak
