"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it was built; otherwise the
pure-Python ``_pycore`` module is loaded. Set ``ULTRARANGING_PURE_PYTHON=1``
to force the fallback.
"""
import os

from . import _pycore

if os.environ.get("ULTRARANGING_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pycore
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _pycore

BACKEND = "compiled" if _impl is not _pycore else "python"

gaussian_fill = _impl.gaussian_fill
correlate_direct = _impl.correlate_direct
scan_first_arrival = _impl.scan_first_arrival
splitmix64 = _pycore.splitmix64
