"""Bellman sweep kernels, compiled when available.

The Cython extension is used when it has been built; otherwise the numpy
module with the same API is loaded. Set ``DPPVOI_BACKEND=python`` to force the
fallback (the benchmark and the backend-parity tests rely on this).
"""

import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

compiled_kernels = _ckernels

if _ckernels is not None and os.environ.get("DPPVOI_BACKEND", "").lower() != "python":
    _impl = _ckernels
else:
    _impl = _pykernels

BACKEND = _impl.BACKEND
softmax_vi = _impl.softmax_vi
minimax_vi = _impl.minimax_vi
reach_vi = _impl.reach_vi


def available_backends():
    out = {"python": _pykernels}
    if _ckernels is not None:
        out["cython"] = _ckernels
    return out
