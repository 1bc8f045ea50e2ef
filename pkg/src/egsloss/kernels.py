"""Backend selection for the hot kernels.

The compiled extension is used when it has been built; otherwise the
pure-Python module is loaded.  Set ``EGSLOSS_BACKEND=python`` to force the
fallback.
"""
import os

from egsloss import _pykernels

ENGINE_DISCRETE = _pykernels.ENGINE_DISCRETE
ENGINE_EXPONENTIAL = _pykernels.ENGINE_EXPONENTIAL
ENGINE_COX = _pykernels.ENGINE_COX

_impl = _pykernels
BACKEND = "python"
if os.environ.get("EGSLOSS_BACKEND", "").lower() != "python":
    try:
        from egsloss import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

accumulate_blocking = _impl.accumulate_blocking
walk_session = _impl.walk_session


def available_backends() -> dict:
    """Name -> kernel module for every backend importable in this environment."""
    out = {"python": _pykernels}
    try:
        from egsloss import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
