"""LSTM sequence kernels: compiled extension with a pure numpy fallback.

Both backends implement the same two operations over time-major arrays
(sequence, batch, feature) with the fused gate layout [input | forget |
output | cell-candidate], each m columns wide:

    seq_forward(xs, w, b, h0, c0) -> (h_seq, c_seq, gates)
    seq_backward(dh_seq, xs, w, gates, c_seq, h_seq, h0, c0)
        -> (dxs, dw, db, dh0, dc0)

w stacks the recurrent rows first: w[:m] multiplies h_prev, w[m:] the input.
gates caches post-activation values.  The compiled kernel is selected at
import when available; setting REACHPRED_PURE=1 forces the fallback.  The
two backends agree to float tolerance, not bit-exactly; within one backend
results are deterministic.
"""

from __future__ import annotations

import os

import numpy as np

from .layers import sigmoid


def py_seq_forward(xs, w, b, h0, c0):
    H, B, d = xs.shape
    m = w.shape[1] // 4
    w_h, w_x = w[:m], w[m:]
    z_x = xs @ w_x
    h_seq = np.empty((H, B, m))
    c_seq = np.empty((H, B, m))
    gates = np.empty((H, B, 4 * m))
    h, c = h0, c0
    for t in range(H):
        z = z_x[t] + h @ w_h + b
        i = sigmoid(z[:, :m])
        f = sigmoid(z[:, m : 2 * m])
        o = sigmoid(z[:, 2 * m : 3 * m])
        g = np.tanh(z[:, 3 * m :])
        c = f * c + i * g
        h = np.tanh(c) * o
        gates[t, :, :m] = i
        gates[t, :, m : 2 * m] = f
        gates[t, :, 2 * m : 3 * m] = o
        gates[t, :, 3 * m :] = g
        h_seq[t] = h
        c_seq[t] = c
    return h_seq, c_seq, gates


def py_seq_backward(dh_seq, xs, w, gates, c_seq, h_seq, h0, c0):
    H, B, d = xs.shape
    m = w.shape[1] // 4
    w_h, w_x = w[:m], w[m:]
    dz_all = np.empty((H, B, 4 * m))
    dh_next = np.zeros((B, m))
    dc_next = np.zeros((B, m))
    for t in range(H - 1, -1, -1):
        i = gates[t, :, :m]
        f = gates[t, :, m : 2 * m]
        o = gates[t, :, 2 * m : 3 * m]
        g = gates[t, :, 3 * m :]
        c = c_seq[t]
        c_prev = c_seq[t - 1] if t > 0 else c0
        tc = np.tanh(c)
        dh = dh_seq[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:, :m] = dc * g * i * (1.0 - i)
        dz[:, m : 2 * m] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * m : 3 * m] = dh * tc * o * (1.0 - o)
        dz[:, 3 * m :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ w_h.T
    HB = H * B
    dxs = (dz_all.reshape(HB, 4 * m) @ w_x.T).reshape(H, B, d)
    dw = np.empty_like(w)
    dw[m:] = xs.reshape(HB, d).T @ dz_all.reshape(HB, 4 * m)
    dw[:m] = h0.T @ dz_all[0]
    if H > 1:
        flat = (H - 1) * B
        dw[:m] += h_seq[: H - 1].reshape(flat, m).T @ dz_all[1:].reshape(flat, 4 * m)
    db = dz_all.sum(axis=(0, 1))
    return dxs, dw, db, dh_next, dc_next


_FORCE_PURE = os.environ.get("REACHPRED_PURE", "").strip() not in ("", "0")

if not _FORCE_PURE:
    try:
        from . import _lstm_kernel as _ext
    except ImportError:
        _ext = None
else:
    _ext = None

if _ext is not None:
    BACKEND = "compiled"
    seq_forward = _ext.seq_forward
    seq_backward = _ext.seq_backward
else:
    BACKEND = "pure"
    seq_forward = py_seq_forward
    seq_backward = py_seq_backward


def backend_name() -> str:
    return BACKEND
