"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it was built; otherwise the
numpy fallback in ``_purepy`` is loaded. Setting ``SSIMPC_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _purepy

if os.environ.get("SSIMPC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _purepy
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _purepy

BACKEND = _impl.BACKEND

rff_eval = _impl.rff_eval
rff_eval_grad = _impl.rff_eval_grad
cartpole_rk4 = _impl.cartpole_rk4
quadrotor_rk4 = _impl.quadrotor_rk4
ilqr_backward = _impl.ilqr_backward


def backends():
    """All importable backends, keyed by name."""
    out = {"python": _purepy}
    try:
        from . import _core
    except ImportError:
        return out
    out["cython"] = _core
    return out
