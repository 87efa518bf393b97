"""Dense, conv1d, dropout and loss primitives with explicit backward passes.

Everything is float64 numpy.  Forward functions return (output, cache);
backward functions consume the upstream gradient plus the cache and return
gradients in the same order as the forward inputs.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# dense

def dense_forward(x, w, b):
    y = x @ w + b
    return y, (x, w)


def dense_backward(gy, cache):
    x, w = cache
    return gy @ w.T, x.T @ gy, gy.sum(axis=0)


# ---------------------------------------------------------------------------
# relu

def relu_forward(x):
    y = np.maximum(x, 0.0)
    return y, (x > 0.0)


def relu_backward(gy, cache):
    return gy * cache


# ---------------------------------------------------------------------------
# 1-d convolution over (batch, channels, length), stride 1, same length out

def conv1d_forward(x, k, b, padding: str = "zero"):
    """Correlate x (B, C, L) with kernels k (O, C, K); K must be odd.

    padding "zero" pads the ends with zeros, "circular" wraps the signal,
    both keeping the output length at L.
    """
    B, C, L = x.shape
    O, Ck, K = k.shape
    if Ck != C:
        raise ValueError(f"kernel expects {Ck} channels, input has {C}")
    if K % 2 != 1:
        raise ValueError("kernel width must be odd")
    h = K // 2
    if padding == "zero":
        xp = np.pad(x, ((0, 0), (0, 0), (h, h)))
    elif padding == "circular":
        xp = np.concatenate([x[:, :, L - h :], x, x[:, :, :h]], axis=2) if h else x
    else:
        raise ValueError(f"unknown padding {padding!r}")
    windows = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)
    y = np.einsum("bclk,ock->bol", windows, k) + b[None, :, None]
    return y, (x.shape, windows, k, padding)


def conv1d_backward(gy, cache):
    (B, C, L), windows, k, padding = cache
    K = k.shape[2]
    h = K // 2
    gk = np.einsum("bol,bclk->ock", gy, windows)
    gb = gy.sum(axis=(0, 2))
    gxp = np.zeros((B, C, L + 2 * h))
    for i in range(K):
        gxp[:, :, i : i + L] += np.einsum("bol,oc->bcl", gy, k[:, :, i])
    if h == 0:
        gx = gxp
    elif padding == "zero":
        gx = gxp[:, :, h : h + L]
    else:
        gx = gxp[:, :, h : h + L].copy()
        gx[:, :, : h] += gxp[:, :, h + L :]
        gx[:, :, L - h :] += gxp[:, :, : h]
    return gx, gk, gb


# ---------------------------------------------------------------------------
# dropout (inverted scaling, so inference is a no-op)

def dropout_forward(x, rate: float, rng: np.random.Generator, training: bool):
    if not training or rate <= 0.0:
        return x, None
    if rate >= 1.0:
        raise ValueError("dropout rate must be below 1")
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def dropout_backward(gy, cache):
    if cache is None:
        return gy
    keep, scale = cache
    return gy * keep * scale


# ---------------------------------------------------------------------------
# RMSE loss over all elements

def rmse_loss(pred, label):
    """Root-mean-square error over every element, with its gradient.

    A zero-loss batch returns a zero gradient (the subgradient at the kink).
    """
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {label.shape}")
    diff = pred - label
    loss = float(np.sqrt(np.mean(diff * diff)))
    if loss == 0.0:
        return 0.0, np.zeros_like(pred)
    grad = diff / (diff.size * loss)
    return loss, grad
