# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrence kernels.

Same contract and gate layout as ``lstm_py``; see that module for the
reference math. The time loop and the small recurrent matvecs are plain C
loops, which removes the per-step Python and BLAS-dispatch overhead that
dominates at the hidden sizes used here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

NAME = "compiled"

ctypedef fused real:
    float
    double


cdef inline real _sigmoid(real x) noexcept nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef real e = exp(x)
    return e / (1.0 + e)


def lstm_forward(real[:, ::1] xg, real[:, ::1] wh):
    cdef Py_ssize_t T = xg.shape[0]
    cdef Py_ssize_t H4 = xg.shape[1]
    cdef Py_ssize_t H = H4 // 4
    dtype = np.float32 if real is float else np.float64
    h_np = np.empty((T, H), dtype=dtype)
    c_np = np.empty((T, H), dtype=dtype)
    g_np = np.empty((T, H4), dtype=dtype)
    pre_np = np.empty(H4, dtype=dtype)
    cdef real[:, ::1] h_seq = h_np
    cdef real[:, ::1] c_seq = c_np
    cdef real[:, ::1] gates = g_np
    cdef real[::1] pre = pre_np
    cdef Py_ssize_t t, j, k
    cdef real acc, gi, gf, gg, go, c_t, c_prev_k

    with nogil:
        for t in range(T):
            for k in range(H4):
                acc = xg[t, k]
                if t > 0:
                    for j in range(H):
                        acc += h_seq[t - 1, j] * wh[j, k]
                pre[k] = acc
            for k in range(H):
                gi = _sigmoid(pre[k])
                gf = _sigmoid(pre[H + k])
                gg = tanh(pre[2 * H + k])
                go = _sigmoid(pre[3 * H + k])
                c_prev_k = c_seq[t - 1, k] if t > 0 else 0.0
                c_t = gf * c_prev_k + gi * gg
                gates[t, k] = gi
                gates[t, H + k] = gf
                gates[t, 2 * H + k] = gg
                gates[t, 3 * H + k] = go
                c_seq[t, k] = c_t
                h_seq[t, k] = go * tanh(c_t)
    return h_np, c_np, g_np


def lstm_backward(real[:, ::1] dh_out, real[:, ::1] wh,
                  real[:, ::1] h_seq, real[:, ::1] c_seq, real[:, ::1] gates):
    cdef Py_ssize_t T = h_seq.shape[0]
    cdef Py_ssize_t H = h_seq.shape[1]
    dtype = np.float32 if real is float else np.float64
    dxg_np = np.empty((T, 4 * H), dtype=dtype)
    dwh_np = np.zeros((H, 4 * H), dtype=dtype)
    dh_np = np.zeros(H, dtype=dtype)
    dc_np = np.zeros(H, dtype=dtype)
    cdef real[:, ::1] dxg = dxg_np
    cdef real[:, ::1] dwh = dwh_np
    cdef real[::1] dh_carry = dh_np
    cdef real[::1] dc_carry = dc_np
    cdef Py_ssize_t t, j, k
    cdef real gi, gf, gg, go, c_prev_k, h_prev_j, dh_t, tc, dc, acc

    with nogil:
        for t in range(T - 1, -1, -1):
            for k in range(H):
                gi = gates[t, k]
                gf = gates[t, H + k]
                gg = gates[t, 2 * H + k]
                go = gates[t, 3 * H + k]
                c_prev_k = c_seq[t - 1, k] if t > 0 else 0.0
                dh_t = dh_out[t, k] + dh_carry[k]
                tc = tanh(c_seq[t, k])
                dc = dc_carry[k] + dh_t * go * (1.0 - tc * tc)
                dxg[t, k] = dc * gg * gi * (1.0 - gi)
                dxg[t, H + k] = dc * c_prev_k * gf * (1.0 - gf)
                dxg[t, 2 * H + k] = dc * gi * (1.0 - gg * gg)
                dxg[t, 3 * H + k] = dh_t * tc * go * (1.0 - go)
                dc_carry[k] = dc * gf
            if t > 0:
                for j in range(H):
                    h_prev_j = h_seq[t - 1, j]
                    for k in range(4 * H):
                        dwh[j, k] += h_prev_j * dxg[t, k]
            for j in range(H):
                acc = 0.0
                for k in range(4 * H):
                    acc += wh[j, k] * dxg[t, k]
                dh_carry[j] = acc
    return dxg_np, dwh_np
