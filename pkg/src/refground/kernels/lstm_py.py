"""Reference numpy implementation of the LSTM recurrence kernels.

The recurrence is the only sequential inner loop in the network; everything
else is a handful of dense matmuls. ``lstm_forward``/``lstm_backward``
mirror the compiled extension in ``_lstm.pyx`` exactly, gate for gate, so
either backend can serve the autograd op.

Gate layout along the last axis is four blocks of size H in the order
input, forget, cell, output. The input projection (x @ Wx + b) is done by
the caller in one batched matmul; the kernel only owns the time loop.
"""

import numpy as np

NAME = "pure"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(xg, wh):
    """Run the recurrence over precomputed input projections.

    xg: (T, 4H) input projections including bias; wh: (H, 4H) recurrent
    weights. Initial hidden and cell states are zero. Returns
    (h_seq (T,H), c_seq (T,H), gates (T,4H)) with gates stored
    post-activation for the backward pass.
    """
    T, H4 = xg.shape
    H = H4 // 4
    h_seq = np.empty((T, H), dtype=xg.dtype)
    c_seq = np.empty((T, H), dtype=xg.dtype)
    gates = np.empty((T, H4), dtype=xg.dtype)
    h_prev = np.zeros(H, dtype=xg.dtype)
    c_prev = np.zeros(H, dtype=xg.dtype)
    for t in range(T):
        pre = xg[t] + h_prev @ wh
        gi = _sigmoid(pre[:H])
        gf = _sigmoid(pre[H : 2 * H])
        gg = np.tanh(pre[2 * H : 3 * H])
        go = _sigmoid(pre[3 * H :])
        c_t = gf * c_prev + gi * gg
        h_t = go * np.tanh(c_t)
        gates[t, :H] = gi
        gates[t, H : 2 * H] = gf
        gates[t, 2 * H : 3 * H] = gg
        gates[t, 3 * H :] = go
        h_seq[t] = h_t
        c_seq[t] = c_t
        h_prev = h_t
        c_prev = c_t
    return h_seq, c_seq, gates


def lstm_backward(dh_out, wh, h_seq, c_seq, gates):
    """Backpropagate through the recurrence.

    dh_out: (T, H) gradient wrt the hidden sequence. Returns
    (dxg (T,4H), dwh (H,4H)); gradients wrt the input projection and the
    recurrent weights. Gradients wrt Wx, b and x follow from dxg outside.
    """
    T, H = h_seq.shape
    dxg = np.empty((T, 4 * H), dtype=h_seq.dtype)
    dwh = np.zeros_like(wh)
    dh_carry = np.zeros(H, dtype=h_seq.dtype)
    dc_carry = np.zeros(H, dtype=h_seq.dtype)
    zeros = np.zeros(H, dtype=h_seq.dtype)
    for t in range(T - 1, -1, -1):
        gi = gates[t, :H]
        gf = gates[t, H : 2 * H]
        gg = gates[t, 2 * H : 3 * H]
        go = gates[t, 3 * H :]
        c_prev = c_seq[t - 1] if t > 0 else zeros
        h_prev = h_seq[t - 1] if t > 0 else zeros
        dh_t = dh_out[t] + dh_carry
        tc = np.tanh(c_seq[t])
        dc = dc_carry + dh_t * go * (1.0 - tc * tc)
        dxg[t, :H] = dc * gg * gi * (1.0 - gi)
        dxg[t, H : 2 * H] = dc * c_prev * gf * (1.0 - gf)
        dxg[t, 2 * H : 3 * H] = dc * gi * (1.0 - gg * gg)
        dxg[t, 3 * H :] = dh_t * tc * go * (1.0 - go)
        dc_carry = dc * gf
        dwh += np.outer(h_prev, dxg[t])
        dh_carry = wh @ dxg[t]
    return dxg, dwh
