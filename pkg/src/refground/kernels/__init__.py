"""Backend selection for the recurrence kernels.

The compiled Cython extension is used when it imported cleanly; otherwise
the numpy reference implementation takes over. Setting the environment
variable ``REFGROUND_PURE_PY=1`` forces the pure backend, and ``use()``
switches at runtime (the benchmark and the cross-backend tests rely on
this).
"""

import os

from . import lstm_py

try:
    from . import _lstm as _compiled_mod
except ImportError:
    _compiled_mod = None

_BACKENDS = {"pure": lstm_py}
if _compiled_mod is not None:
    _BACKENDS["compiled"] = _compiled_mod

if os.environ.get("REFGROUND_PURE_PY", "") not in ("", "0"):
    _active = lstm_py
else:
    _active = _compiled_mod if _compiled_mod is not None else lstm_py


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return _active.NAME


def use(name):
    """Select the kernel backend ('pure' or 'compiled') for this process."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = _BACKENDS[name]


def lstm_forward(xg, wh):
    return _active.lstm_forward(xg, wh)


def lstm_backward(dh_out, wh, h_seq, c_seq, gates):
    return _active.lstm_backward(dh_out, wh, h_seq, c_seq, gates)
