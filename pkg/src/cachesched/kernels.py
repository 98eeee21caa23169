"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Set ``CACHESCHED_KERNELS=python`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("CACHESCHED_KERNELS", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

lambert_w0_log = _impl.lambert_w0_log
segment_cost = _impl.segment_cost
choose_target = _impl.choose_target
bellman_values = _impl.bellman_values
best_joint_action = _impl.best_joint_action

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
