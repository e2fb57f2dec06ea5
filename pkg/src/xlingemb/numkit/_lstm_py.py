"""Pure-numpy LSTM recurrence, the fallback for the compiled kernel.

Gate layout along the last axis is ``[i, f, g, o]``, each ``H`` wide. The
input projection ``x @ Wx + b`` is computed by the caller for all steps at
once, so only the recurrent part lives here.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(xw, wh):
    """Run the recurrence from a zero state.

    xw: (T, B, 4H) projected inputs. wh: (H, 4H).
    Returns hs, cs (T, B, H) and activated gates (T, B, 4H).
    """
    T, B, H4 = xw.shape
    H = H4 // 4
    hs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    gates = np.empty((T, B, H4))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xw[t] + h @ wh
        a = gates[t]
        a[:, :2 * H] = _sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        h = a[:, 3 * H:] * np.tanh(c)
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


def lstm_backward(dhs, hs, cs, gates, wh):
    """Adjoints of :func:`lstm_forward`.

    Returns (dxw, dwh): gradient w.r.t. the pre-activation gate inputs
    (T, B, 4H) and w.r.t. the recurrent matrix.
    """
    T, B, H = hs.shape
    dxw = np.empty((T, B, 4 * H))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    wht = wh.T
    for t in range(T - 1, -1, -1):
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        c_prev = cs[t - 1] if t > 0 else 0.0
        tc = np.tanh(cs[t])
        dh = dh + dhs[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dxw[t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc = dc * f
        dh = dz @ wht
    h_prev = np.concatenate([np.zeros((1, B, H)), hs[:-1]], axis=0)
    dwh = h_prev.reshape(-1, H).T @ dxw.reshape(-1, 4 * H)
    return dxw, dwh
