"""LSTM layers on the tape, backed by a compiled recurrence when available.

The kernel is chosen at import: ``xlingemb.numkit._lstm_ext`` (Cython) if it
was built, otherwise the numpy fallback. Set ``XLINGEMB_PURE_PYTHON=1`` to
force the fallback.
"""

import os

import numpy as np

from . import _lstm_py
from .tape import TapeError, _lift, _sigmoid, _tape_of

if os.environ.get("XLINGEMB_PURE_PYTHON", "") not in ("", "0"):
    _kernel = _lstm_py
    BACKEND = "python"
else:
    try:
        from . import _lstm_ext as _kernel
        BACKEND = "cython"
    except ImportError:
        _kernel = _lstm_py
        BACKEND = "python"


def lstm_cell(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step on plain arrays; gate order ``[i, f, g, o]``.

    Returns ``(h, c)``.
    """
    x, h_prev, c_prev = np.asarray(x), np.asarray(h_prev), np.asarray(c_prev)
    H = wh.shape[0]
    if wx.shape[1] != 4 * H or wh.shape[1] != 4 * H or b.shape[-1] != 4 * H:
        raise ValueError("LSTM parameter shapes disagree on hidden size")
    if x.shape[-1] != wx.shape[0] or h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}")
    z = x @ wx + h_prev @ wh + b
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = _sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def lstm(x, wx, wh, b, kernel=None):
    """Unidirectional LSTM over a batch-first sequence from a zero state.

    x: (B, T, I). Returns hidden states (B, T, H). Padding must sit at the end
    of each row; outputs there are meaningless and must be masked downstream.
    """
    kernel = kernel or _kernel
    t = _tape_of(x, wx, wh, b)
    x, wx, wh, b = (_lift(t, v) for v in (x, wx, wh, b))
    B, T, I = x.value.shape
    H = wh.value.shape[0]
    if wx.value.shape != (I, 4 * H) or wh.value.shape != (H, 4 * H) or b.value.shape != (4 * H,):
        raise TapeError(f"LSTM shapes: x {x.value.shape}, Wx {wx.value.shape}, "
                        f"Wh {wh.value.shape}, b {b.value.shape}")
    xt = np.ascontiguousarray(x.value.transpose(1, 0, 2))
    if T == 0 or B == 0:
        return t.record(np.zeros((B, T, H)), (x, wx, wh, b),
                        lambda g: (np.zeros_like(x.value), np.zeros_like(wx.value),
                                   np.zeros_like(wh.value), np.zeros_like(b.value)))
    xw = xt @ wx.value + b.value
    hs, cs, gates = kernel.lstm_forward(xw, wh.value)
    whv, wxv = wh.value, wx.value

    def backward(g):
        dhs = np.ascontiguousarray(g.transpose(1, 0, 2))
        dxw, dwh = kernel.lstm_backward(dhs, hs, cs, gates, whv)
        flat = dxw.reshape(-1, 4 * H)
        dx = (flat @ wxv.T).reshape(T, B, I).transpose(1, 0, 2)
        dwx = xt.reshape(-1, I).T @ flat
        return dx, dwx, dwh, flat.sum(axis=0)

    return t.record(np.ascontiguousarray(hs.transpose(1, 0, 2)), (x, wx, wh, b), backward)
