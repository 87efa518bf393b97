"""LSTM cell and sequence API (batch-first) over the selected backend.

Gate layout in the fused weight matrix is [input | forget | output |
cell-candidate], each m columns; rows stack the recurrent part first
(w[:m] multiplies h_prev, w[m:] multiplies x), matching
z = [h_prev, x] @ w + b.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .layers import glorot_uniform, sigmoid


class LstmParams:
    """Fused LSTM parameters for input width d and hidden size m."""

    def __init__(self, w: np.ndarray, b: np.ndarray):
        w = np.asarray(w, dtype=float)
        b = np.asarray(b, dtype=float)
        if w.ndim != 2 or w.shape[1] % 4 != 0:
            raise ValueError(f"weight must be (m+d, 4m), got {w.shape}")
        self.m = w.shape[1] // 4
        self.d = w.shape[0] - self.m
        if self.d < 1:
            raise ValueError(f"weight rows {w.shape[0]} too few for hidden size {self.m}")
        if b.shape != (4 * self.m,):
            raise ValueError(f"bias must be ({4 * self.m},), got {b.shape}")
        self.w = w
        self.b = b

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, m: int) -> "LstmParams":
        """Glorot-uniform weights (per-gate fans: in m+d, out m); forget bias +1."""
        w = glorot_uniform(rng, m + d, m, (m + d, 4 * m))
        b = np.zeros(4 * m)
        b[m : 2 * m] = 1.0
        return cls(w, b)

    def params(self) -> dict:
        return {"w": self.w, "b": self.b}


def lstm_cell(x, h_prev, c_prev, params: LstmParams):
    """One LSTM step; accepts vectors or (B, ·) batches."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=float))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=float))
    m = params.m
    z = np.concatenate([h_prev, x], axis=1) @ params.w + params.b
    i = sigmoid(z[:, :m])
    f = sigmoid(z[:, m : 2 * m])
    o = sigmoid(z[:, 2 * m : 3 * m])
    g = np.tanh(z[:, 3 * m :])
    c = f * c_prev + i * g
    h = np.tanh(c) * o
    if single:
        return h[0], c[0]
    return h, c


def lstm_forward(xs: np.ndarray, params: LstmParams, h0=None, c0=None):
    """Run a full sequence; xs is (B, H, d).  Returns (h_seq (B, H, m), cache)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 3 or xs.shape[2] != params.d:
        raise ValueError(f"xs must be (B, H, {params.d}), got {xs.shape}")
    B = xs.shape[0]
    m = params.m
    h0 = np.zeros((B, m)) if h0 is None else np.asarray(h0, dtype=float)
    c0 = np.zeros((B, m)) if c0 is None else np.asarray(c0, dtype=float)
    xs_tm = np.ascontiguousarray(xs.transpose(1, 0, 2))
    h_seq, c_seq, gates = backend.seq_forward(xs_tm, params.w, params.b, h0, c0)
    cache = (xs_tm, params, gates, c_seq, h_seq, h0, c0)
    return h_seq.transpose(1, 0, 2), cache


def lstm_backward(dh_seq: np.ndarray, cache):
    """BPTT through a forward pass.

    dh_seq is (B, H, m): upstream gradient on every hidden output.  Returns
    (dxs (B, H, d), grads {w, b}, dh0, dc0).
    """
    xs_tm, params, gates, c_seq, h_seq, h0, c0 = cache
    dh_tm = np.ascontiguousarray(np.asarray(dh_seq, dtype=float).transpose(1, 0, 2))
    dxs, dw, db, dh0, dc0 = backend.seq_backward(
        dh_tm, xs_tm, params.w, gates, c_seq, h_seq, h0, c0
    )
    return dxs.transpose(1, 0, 2), {"w": dw, "b": db}, dh0, dc0
