"""Wrist-position net, target predictor and their input plumbing.

Two models: a feed-forward net mapping one masked IMU state to the
instantaneous wrist position, and a windowed LSTM ensemble predicting the
reach target from the last H states.  The ensemble rows share weights and
differ only in their dropout masks; the final hidden states form a
channels-by-rows map consumed by a small conv head.

Inference follows a strict one-sample discipline: batch entry points loop
over single windows, and every per-sample transform is shared with the
streaming path, so offline and streaming predictions agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import LabelCube, NormStats, resolve_mask
from .errors import ArchitectureMismatch
from .nn.layers import (
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    glorot_uniform,
    relu_backward,
    relu_forward,
)
from .nn.lstm import LstmParams, lstm_backward, lstm_forward
from .nn.weights_io import load_weights, save_weights

MODES = ("pos_only", "concat", "raw_only")


# ---------------------------------------------------------------------------
# wrist position net

class GammaNet:
    """Feed-forward map from one masked state to the wrist position."""

    kind = "gamma"

    def __init__(self, mask, widths, params, feat_stats, cube):
        self.mask_name, self.mask = resolve_mask(mask)
        self.widths = tuple(int(w) for w in widths)
        self.params = params
        self.feat_stats = feat_stats
        self.cube = cube

    @classmethod
    def init(cls, rng, mask="all", widths=(512, 512, 512),
             feat_stats=None, cube=None) -> "GammaNet":
        _, idx = resolve_mask(mask)
        dims = [len(idx)] + list(widths) + [3]
        params = {}
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            params[f"fc{i}.w"] = glorot_uniform(rng, d_in, d_out, (d_in, d_out))
            params[f"fc{i}.b"] = np.zeros(d_out)
        return cls(mask, widths, params, feat_stats, cube)

    @property
    def n_in(self) -> int:
        return len(self.mask)

    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def forward_norm(self, z: np.ndarray, want_cache: bool = False):
        """Normalized features in, normalized position out (training path)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} features, got {z.shape[-1]}")
        caches = []
        h = z
        n_layers = len(self.widths) + 1
        for i in range(n_layers):
            h, dc = dense_forward(h, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"])
            if i < n_layers - 1:
                h, rc = relu_forward(h)
            else:
                rc = None
            caches.append((dc, rc))
        return (h, caches) if want_cache else h

    def backward_norm(self, dout: np.ndarray, caches) -> tuple:
        grads = {}
        g = dout
        for i in reversed(range(len(caches))):
            dc, rc = caches[i]
            if rc is not None:
                g = relu_backward(g, rc)
            g, gw, gb = dense_backward(g, dc)
            grads[f"fc{i}.w"] = gw
            grads[f"fc{i}.b"] = gb
        return g, grads

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Raw masked state(s) in, wrist position(s) in meters out."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        z = self.feat_stats.apply(np.atleast_2d(x))
        p = self.cube.denormalize(self.forward_norm(z))
        return p[0] if squeeze else p

    def save(self, path: str):
        header = {
            "kind": self.kind,
            "mask": self.mask_name if self.mask_name != "custom" else self.mask.tolist(),
            "widths": list(self.widths),
            "feat_stats": self.feat_stats.to_dict(),
            "cube": self.cube.to_dict(),
        }
        save_weights(path, self.params, header)

    @classmethod
    def load(cls, path: str) -> "GammaNet":
        blocks, header = load_weights(path)
        if header.get("kind") != cls.kind:
            raise ArchitectureMismatch(
                f"{path}: holds a {header.get('kind')!r} model, expected {cls.kind!r}"
            )
        return cls(
            mask=header["mask"], widths=header["widths"], params=blocks,
            feat_stats=NormStats.from_dict(header["feat_stats"]),
            cube=LabelCube.from_dict(header["cube"]),
        )


# ---------------------------------------------------------------------------
# input modes

def feature_width(mode: str, n: int) -> int:
    if mode == "pos_only":
        return 3
    if mode == "concat":
        return n + 3
    if mode == "raw_only":
        return n
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def sample_features(x, mode: str, gamma: GammaNet | None,
                    feat_stats: NormStats | None, cube: LabelCube) -> np.ndarray:
    """Per-sample model input for any leading shape of raw masked states.

    The transform is strictly per sample, so windowing and feature building
    commute; training precomputes features episode-wide while streaming
    applies the same function one state at a time.
    """
    x = np.asarray(x, dtype=float)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "pos_only" and feat_stats is None:
        raise ValueError(f"mode {mode!r} needs feature statistics")
    if mode != "raw_only":
        if gamma is None:
            raise ValueError(f"mode {mode!r} needs a position net")
        if x.shape[-1] != gamma.n_in:
            raise ValueError(
                f"mask mismatch: state width {x.shape[-1]}, position net expects {gamma.n_in}"
            )
        flat = x.reshape(-1, x.shape[-1])
        pos = cube.normalize(gamma.predict(flat)).reshape(x.shape[:-1] + (3,))
    if mode == "pos_only":
        return pos
    if mode == "raw_only":
        return feat_stats.apply(x)
    return np.concatenate([feat_stats.apply(x), pos], axis=-1)


def build_lstm_pos_input(windows, mode: str, gamma: GammaNet | None,
                         feat_stats: NormStats | None, cube: LabelCube) -> np.ndarray:
    """Model input sequences for a (B, H, n) batch of raw state windows."""
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3:
        raise ValueError(f"expected (batch, window, channels), got {windows.shape}")
    return sample_features(windows, mode, gamma, feat_stats, cube)


# ---------------------------------------------------------------------------
# target predictor

@dataclass
class LstmPosConfig:
    """Architecture knobs of the target predictor."""

    mode: str = "pos_only"
    mask: str = "all"
    H: int = 60
    a: int = 8                 # ensemble rows (weight-shared, dropout-distinct)
    b: int = 2                 # stacked LSTM layers per row
    m: int = 64                # hidden size
    dropout: float = 0.1
    conv_channels: tuple = (8, 8, 4)
    kernel: int = 3
    fc_hidden: int = 14

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.a < 1 or self.b < 1 or self.m < 1 or self.H < 1:
            raise ValueError("a, b, m and H must all be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.conv_channels = tuple(int(c) for c in self.conv_channels)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "mask": self.mask, "H": self.H,
            "a": self.a, "b": self.b, "m": self.m, "dropout": self.dropout,
            "conv_channels": list(self.conv_channels), "kernel": self.kernel,
            "fc_hidden": self.fc_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LstmPosConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class LstmPosNet:
    """Windowed target predictor: LSTM rows, conv head, dense output."""

    kind = "lstm_pos"

    def __init__(self, config: LstmPosConfig, params: dict,
                 feat_stats: NormStats | None, cube: LabelCube):
        self.config = config
        _, self.mask = resolve_mask(config.mask)
        self.params = params
        self.feat_stats = feat_stats
        self.cube = cube

    @classmethod
    def init(cls, config: LstmPosConfig, rng, feat_stats=None, cube=None) -> "LstmPosNet":
        n = len(resolve_mask(config.mask)[1])
        d = feature_width(config.mode, n)
        m = config.m
        params = {}
        for layer in range(config.b):
            lp = LstmParams.init(rng, d if layer == 0 else m, m)
            params[f"lstm{layer}.w"] = lp.w
            params[f"lstm{layer}.b"] = lp.b
        c_in = m
        for i, c_out in enumerate(config.conv_channels):
            shape = (c_out, c_in, config.kernel)
            params[f"conv{i}.k"] = glorot_uniform(
                rng, c_in * config.kernel, c_out, shape
            )
            params[f"conv{i}.b"] = np.zeros(c_out)
            c_in = c_out
        dims = [c_in, config.fc_hidden, 3]
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            params[f"fc{i}.w"] = glorot_uniform(rng, d_in, d_out, (d_in, d_out))
            params[f"fc{i}.b"] = np.zeros(d_out)
        return cls(config, params, feat_stats, cube)

    @property
    def input_width(self) -> int:
        return feature_width(self.config.mode, len(self.mask))

    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def _lstm_params(self, layer: int) -> LstmParams:
        return LstmParams(self.params[f"lstm{layer}.w"], self.params[f"lstm{layer}.b"])

    # -- training path ------------------------------------------------------

    def forward_train(self, xs: np.ndarray, rng, training: bool = True) -> tuple:
        """Batched forward on prepared inputs; returns normalized predictions.

        xs is (B, H, d) of already-built features.  The batch is replicated
        a times so each ensemble row draws its own dropout masks; all rows
        run through the same weights.
        """
        cfg = self.config
        xs = np.asarray(xs, dtype=float)
        B, H, d = xs.shape
        if H != cfg.H or d != self.input_width:
            raise ValueError(
                f"expected ({cfg.H}, {self.input_width}) windows, got ({H}, {d})"
            )
        a = cfg.a
        h = np.tile(xs, (a, 1, 1))
        layer_caches = []
        for layer in range(cfg.b):
            h, drop_cache = dropout_forward(h, cfg.dropout, rng, training)
            h, lstm_cache = lstm_forward(h, self._lstm_params(layer))
            layer_caches.append((drop_cache, lstm_cache))
        h_final = h[:, -1, :]                                   # (aB, m)
        fmap = h_final.reshape(a, B, cfg.m).transpose(1, 2, 0)  # (B, m, a)
        conv_caches = []
        c = fmap
        for i in range(len(cfg.conv_channels)):
            c, cc = conv1d_forward(
                c, self.params[f"conv{i}.k"], self.params[f"conv{i}.b"], "circular"
            )
            c, rc = relu_forward(c)
            conv_caches.append((cc, rc))
        pooled = c.mean(axis=2)                                 # (B, C_last)
        g0, d0 = dense_forward(pooled, self.params["fc0.w"], self.params["fc0.b"])
        g0r, r0 = relu_forward(g0)
        out, d1 = dense_forward(g0r, self.params["fc1.w"], self.params["fc1.b"])
        cache = (layer_caches, conv_caches, (d0, r0, d1), c.shape, (B, H, d))
        return out, cache

    def backward(self, dout: np.ndarray, cache) -> dict:
        cfg = self.config
        layer_caches, conv_caches, (d0, r0, d1), conv_shape, (B, H, d) = cache
        a, m = cfg.a, cfg.m
        grads = {}
        g, gw, gb = dense_backward(dout, d1)
        grads["fc1.w"], grads["fc1.b"] = gw, gb
        g = relu_backward(g, r0)
        g, gw, gb = dense_backward(g, d0)
        grads["fc0.w"], grads["fc0.b"] = gw, gb
        # undo the global average over ensemble positions
        gc = np.repeat(g[:, :, None], conv_shape[2], axis=2) / conv_shape[2]
        for i in reversed(range(len(cfg.conv_channels))):
            cc, rc = conv_caches[i]
            gc = relu_backward(gc, rc)
            gc, gk, gcb = conv1d_backward(gc, cc)
            grads[f"conv{i}.k"], grads[f"conv{i}.b"] = gk, gcb
        dh_final = gc.transpose(2, 0, 1).reshape(a * B, m)
        dh_seq = np.zeros((a * B, cfg.H, m))
        dh_seq[:, -1, :] = dh_final
        for layer in reversed(range(cfg.b)):
            drop_cache, lstm_cache = layer_caches[layer]
            dxs, lgrads, _, _ = lstm_backward(dh_seq, lstm_cache)
            grads[f"lstm{layer}.w"] = lgrads["w"]
            grads[f"lstm{layer}.b"] = lgrads["b"]
            dh_seq = dropout_backward(dxs, drop_cache)
        return grads

    # -- inference path -----------------------------------------------------

    def sample_feature(self, x_raw, gamma: GammaNet | None) -> np.ndarray:
        """One raw masked state to one model input row (streaming unit)."""
        return sample_features(
            np.asarray(x_raw, dtype=float).reshape(len(self.mask)),
            self.config.mode, gamma, self.feat_stats, self.cube,
        )

    def infer_features(self, feats: np.ndarray) -> np.ndarray:
        """One prepared (H, d) feature window to a target point in meters."""
        cfg = self.config
        feats = np.asarray(feats, dtype=float)
        if feats.shape != (cfg.H, self.input_width):
            raise ValueError(
                f"expected ({cfg.H}, {self.input_width}) window, got {feats.shape}"
            )
        h = feats[None]
        for layer in range(cfg.b):
            h, _ = lstm_forward(h, self._lstm_params(layer))
        # dropout is off: all ensemble rows coincide, so one row is tiled
        fmap = np.repeat(h[:, -1, :][:, :, None], cfg.a, axis=2)
        c = fmap
        for i in range(len(cfg.conv_channels)):
            c, _ = conv1d_forward(
                c, self.params[f"conv{i}.k"], self.params[f"conv{i}.b"], "circular"
            )
            c, _ = relu_forward(c)
        pooled = c.mean(axis=2)
        g0, _ = dense_forward(pooled, self.params["fc0.w"], self.params["fc0.b"])
        g0r, _ = relu_forward(g0)
        out, _ = dense_forward(g0r, self.params["fc1.w"], self.params["fc1.b"])
        return self.cube.denormalize(out[0])

    def predict_window(self, window_raw: np.ndarray, gamma: GammaNet | None = None) -> np.ndarray:
        """One (H, n) window of raw masked states to a target in meters."""
        window_raw = np.asarray(window_raw, dtype=float)
        cfg = self.config
        if window_raw.shape != (cfg.H, len(self.mask)):
            raise ValueError(
                f"expected ({cfg.H}, {len(self.mask)}) window, got {window_raw.shape}"
            )
        feats = np.stack([self.sample_feature(row, gamma) for row in window_raw])
        return self.infer_features(feats)

    def predict_windows(self, windows: np.ndarray, gamma: GammaNet | None = None) -> np.ndarray:
        """Batch entry point; loops the single-window path for bit parity."""
        windows = np.asarray(windows, dtype=float)
        return np.stack([self.predict_window(w, gamma) for w in windows])

    # -- persistence --------------------------------------------------------

    def save(self, path: str):
        header = {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "feat_stats": None if self.feat_stats is None else self.feat_stats.to_dict(),
            "cube": self.cube.to_dict(),
        }
        save_weights(path, self.params, header)

    @classmethod
    def load(cls, path: str) -> "LstmPosNet":
        blocks, header = load_weights(path)
        if header.get("kind") != cls.kind:
            raise ArchitectureMismatch(
                f"{path}: holds a {header.get('kind')!r} model, expected {cls.kind!r}"
            )
        stats = header["feat_stats"]
        return cls(
            config=LstmPosConfig.from_dict(header["config"]), params=blocks,
            feat_stats=None if stats is None else NormStats.from_dict(stats),
            cube=LabelCube.from_dict(header["cube"]),
        )


def load_model(path: str):
    """Open a weight file as whichever model kind it declares."""
    _, header = load_weights(path)
    kind = header.get("kind")
    for cls in (GammaNet, LstmPosNet):
        if kind == cls.kind:
            return cls.load(path)
    raise ArchitectureMismatch(f"{path}: unknown model kind {kind!r}")
