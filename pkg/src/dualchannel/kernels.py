"""LSTM sequence kernels, compiled when available.

The Cython extension is used if it was built; otherwise the numpy version
is loaded.  Set ``DUALCHANNEL_BACKEND=python`` to force the fallback.
"""

import os

from . import _lstm_py

_forced = os.environ.get("DUALCHANNEL_BACKEND", "").lower()

if _forced == "python":
    _impl = _lstm_py
    BACKEND = "python"
else:
    try:
        from . import _lstm_ext as _impl
        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _lstm_py
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward

BACKENDS = {"python": _lstm_py}
try:
    from . import _lstm_ext
    BACKENDS["cython"] = _lstm_ext
except ImportError:
    pass
