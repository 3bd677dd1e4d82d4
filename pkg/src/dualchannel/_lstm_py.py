"""Pure numpy LSTM sequence kernels (fallback for the compiled extension).

Layout shared with ``_lstm_ext``:

* ``xproj``  (T, B, 4H): input projection ``x_t Wx^T + b`` for every step
* ``mask``   (T, B): 1.0 where step t is inside sequence b, else 0.0
* ``Wh``     (4H, H): recurrent weights, gate blocks ordered i, f, g, o
* ``hs, cs`` (T+1, B, H): states, index 0 is the zero initial state
* ``gates``  (T, B, 4H): activated gate values

Masked steps carry the previous state through unchanged.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1)


def lstm_forward(xproj, mask, Wh):
    T, B, G = xproj.shape
    H = G // 4
    dtype = xproj.dtype
    hs = np.zeros((T + 1, B, H), dtype=dtype)
    cs = np.zeros((T + 1, B, H), dtype=dtype)
    gates = np.empty((T, B, G), dtype=dtype)
    WhT = np.ascontiguousarray(Wh.T)
    for t in range(T):
        z = xproj[t] + hs[t] @ WhT
        gt = gates[t]
        gt[:, :H] = _sigmoid(z[:, :H])
        gt[:, H:2 * H] = _sigmoid(z[:, H:2 * H])
        gt[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        gt[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c_new = gt[:, H:2 * H] * cs[t] + gt[:, :H] * gt[:, 2 * H:3 * H]
        h_new = gt[:, 3 * H:] * np.tanh(c_new)
        m = mask[t][:, None] != 0
        cs[t + 1] = np.where(m, c_new, cs[t])
        hs[t + 1] = np.where(m, h_new, hs[t])
    return hs, cs, gates


def lstm_backward(dhs, mask, Wh, hs, cs, gates):
    """Gradient w.r.t. the pre-activations (T, B, 4H) given dL/dh_t for t=1..T."""
    T, B, G = gates.shape
    H = G // 4
    dtype = gates.dtype
    dz = np.zeros((T, B, G), dtype=dtype)
    dh = np.zeros((B, H), dtype=dtype)
    dc = np.zeros((B, H), dtype=dtype)
    for t in range(T - 1, -1, -1):
        m = mask[t][:, None] != 0
        dh_tot = dhs[t] + dh
        gt = gates[t]
        i, f, g, o = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dc_new = dc + dh_tot * o * (1 - tc * tc)
        dzt = dz[t]
        dzt[:, :H] = dc_new * g * i * (1 - i)
        dzt[:, H:2 * H] = dc_new * cs[t] * f * (1 - f)
        dzt[:, 2 * H:3 * H] = dc_new * i * (1 - g * g)
        dzt[:, 3 * H:] = dh_tot * tc * o * (1 - o)
        dzt *= m
        dh = np.where(m, dzt @ Wh, dh_tot)
        dc = np.where(m, dc_new * f, dc)
    return dz
