"""Backend selection for the hot DP kernels.

The compiled ``sdtwreg._ext`` module is used when it imports; otherwise the
pure-Python ``sdtwreg._fallback`` module is.  Set ``SDTWREG_BACKEND=python``
to force the fallback (``BACKEND`` reports the choice).
"""

import os

from . import _fallback

_requested = os.environ.get("SDTWREG_BACKEND", "auto").lower()

_impl = _fallback
BACKEND = "python"
if _requested not in ("python", "py", "pure"):
    try:
        from . import _ext as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested in ("cython", "ext"):
            raise

METRICS = _fallback.METRICS

softmin3 = _impl.softmin3
sdtw_forward = _impl.sdtw_forward
sdtw_backward = _impl.sdtw_backward
dtw_table = _impl.dtw_table
sdtw_value_grad = _impl.sdtw_value_grad
cidm = _impl.cidm


def backends():
    """Map of available backend name -> kernel module."""
    out = {"python": _fallback}
    try:
        from . import _ext

        out["cython"] = _ext
    except ImportError:
        pass
    return out
