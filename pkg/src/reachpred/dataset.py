"""Episode containers, sensor masks, windowing, normalization and disk IO.

State vector layout (18 channels): wrist accel xyz, wrist gyro xyz, wrist
mag xyz, upper-arm accel xyz, upper-arm gyro xyz, upper-arm mag xyz.
Episode CSVs carry one row per sample with the time stamp, the 18 channels
and the wrist position, in the fixed column order of CSV_COLUMNS.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyEpisode,
    EpisodeTooShort,
    InsufficientEpisodes,
    SchemaError,
    UnknownMask,
)

N_CHANNELS = 18

CHANNEL_NAMES = [
    "wax", "way", "waz", "wgx", "wgy", "wgz", "wmx", "wmy", "wmz",
    "uax", "uay", "uaz", "ugx", "ugy", "ugz", "umx", "umy", "umz",
]

CSV_COLUMNS = ["t"] + CHANNEL_NAMES + ["px", "py", "pz"]

SENSOR_MASKS = {
    "all": np.arange(18),
    "accelerometers": np.array([0, 1, 2, 9, 10, 11]),
    "gyroscopes": np.array([3, 4, 5, 12, 13, 14]),
    "magnetometers": np.array([6, 7, 8, 15, 16, 17]),
    "accel_mag": np.array([0, 1, 2, 6, 7, 8, 9, 10, 11, 15, 16, 17]),
    "wrist_only": np.arange(0, 9),
    "upper_arm_only": np.arange(9, 18),
}


def resolve_mask(mask) -> tuple:
    """Return (name, index array) for a mask name or explicit index list."""
    if isinstance(mask, str):
        if mask not in SENSOR_MASKS:
            raise UnknownMask(f"unknown sensor mask {mask!r}; options: {sorted(SENSOR_MASKS)}")
        return mask, SENSOR_MASKS[mask].copy()
    idx = np.asarray(mask, dtype=int)
    if idx.ndim != 1 or len(idx) == 0 or idx.min() < 0 or idx.max() >= N_CHANNELS:
        raise ValueError("mask indices must be a nonempty subset of 0..17")
    if len(np.unique(idx)) != len(idx):
        raise ValueError("mask indices must be unique")
    return "custom", idx


@dataclass
class Episode:
    """One recorded reach: states, wrist path and the touched target."""

    id: str
    t: np.ndarray        # (S,)
    x: np.ndarray        # (S, 18)
    p: np.ndarray        # (S, 3) wrist path
    target: np.ndarray   # (3,)
    rate: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.target = np.asarray(self.target, dtype=float).reshape(3)
        S = len(self.t)
        if self.x.shape != (S, N_CHANNELS) or self.p.shape != (S, 3):
            raise ValueError(
                f"inconsistent episode arrays: t {self.t.shape}, x {self.x.shape}, p {self.p.shape}"
            )

    def __len__(self):
        return len(self.t)


def window_count(n_samples: int, H: int) -> int:
    """Number of length-H windows in an episode of n_samples states."""
    if H < 1:
        raise ValueError("window length must be at least 1")
    if H > n_samples:
        raise ValueError(f"window length {H} exceeds episode length {n_samples}")
    return n_samples - H + 1


# ---------------------------------------------------------------------------
# episode CSV IO

def save_episode(ep: Episode, path: str):
    rows = np.hstack([ep.t[:, None], ep.x, ep.p])
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_episode(path: str, meta: dict | None = None, rate: float | None = None) -> Episode:
    with open(path) as fh:
        header = fh.readline().strip()
        cols = [c.strip() for c in header.split(",")]
        if cols != CSV_COLUMNS:
            raise SchemaError(
                f"{path}: bad header; expected {','.join(CSV_COLUMNS)!r}, got {header!r}"
            )
        data = []
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise SchemaError(f"{path}:{ln}: expected {len(CSV_COLUMNS)} fields, got {len(parts)}")
            try:
                data.append([float(v) for v in parts])
            except ValueError as exc:
                raise SchemaError(f"{path}:{ln}: {exc}") from None
    if not data:
        raise EmptyEpisode(f"{path}: episode file contains no samples")
    if len(data) < 2:
        raise SchemaError(f"{path}: episode must contain at least two samples")
    arr = np.asarray(data)
    t = arr[:, 0]
    if rate is None:
        dt = np.diff(t)
        if dt.min() <= 0:
            raise SchemaError(f"{path}: time stamps must strictly increase")
        rate = 1.0 / float(np.median(dt))
    meta = dict(meta or {})
    target = np.asarray(meta["target"], dtype=float) if "target" in meta else arr[-1, 19:22]
    ep_id = meta.get("id", os.path.splitext(os.path.basename(path))[0])
    return Episode(id=ep_id, t=t, x=arr[:, 1:19], p=arr[:, 19:22], target=target,
                   rate=float(rate), meta=meta)


# ---------------------------------------------------------------------------
# dataset directory IO

MANIFEST_NAME = "manifest.json"


def save_dataset(episodes: list, data_dir: str, config: dict):
    """Write episode CSVs under per-split directories plus a manifest."""
    os.makedirs(data_dir, exist_ok=True)
    entries = []
    for ep in episodes:
        split = ep.meta.get("split", "train")
        split_dir = os.path.join(data_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        save_episode(ep, os.path.join(split_dir, ep.id + ".csv"))
        entry = dict(ep.meta)
        entry["id"] = ep.id
        entry["split"] = split
        entry["target"] = [float(v) for v in ep.target]
        entry["n_samples"] = len(ep)
        entries.append(entry)
    manifest = dict(config)
    manifest["version"] = 1
    manifest["episodes"] = entries
    with open(os.path.join(data_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_manifest(data_dir: str) -> dict:
    path = os.path.join(data_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise SchemaError(f"{path}: manifest not found")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    for key in ("version", "rate", "episodes"):
        if key not in manifest:
            raise SchemaError(f"{path}: missing required key {key!r}")
    if not isinstance(manifest["episodes"], list) or not manifest["episodes"]:
        raise SchemaError(f"{path}: episode list is empty")
    for i, entry in enumerate(manifest["episodes"]):
        for key in ("id", "split", "target"):
            if key not in entry:
                raise SchemaError(f"{path}: episode entry {i} missing {key!r}")
    return manifest


def load_dataset(data_dir: str, split: str | None = None) -> list:
    """Load all episodes of one split (or all splits) per the manifest."""
    manifest = load_manifest(data_dir)
    episodes = []
    for entry in manifest["episodes"]:
        if split is not None and entry["split"] != split:
            continue
        path = os.path.join(data_dir, entry["split"], entry["id"] + ".csv")
        if not os.path.exists(path):
            raise SchemaError(f"{path}: listed in manifest but missing on disk")
        ep = load_episode(path, meta=entry, rate=manifest["rate"])
        if "n_samples" in entry and len(ep) != entry["n_samples"]:
            raise SchemaError(
                f"{path}: has {len(ep)} samples, manifest says {entry['n_samples']}"
            )
        episodes.append(ep)
    if not episodes:
        raise SchemaError(f"{data_dir}: no episodes for split {split!r}")
    return episodes


def split_episodes(episodes: list, test_per_square: int, seed: int = 0) -> tuple:
    """Assign episodes to train/test, holding out whole reaches per square.

    Episodes are grouped by their target square; test_per_square of each
    group go to the test split, chosen by a seeded shuffle, the rest to
    train.  Returns (train, test) lists and stamps each episode's
    meta["split"].
    """
    if test_per_square < 0:
        raise ValueError("test_per_square must be nonnegative")
    rng = np.random.default_rng(seed)
    out = {"train": [], "test": []}
    groups = {}
    for ep in episodes:
        key = (ep.meta.get("row"), ep.meta.get("col"))
        groups.setdefault(key, []).append(ep)
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda e: e.id)
        if test_per_square > len(group):
            raise InsufficientEpisodes(
                f"square {key}: cannot hold out {test_per_square} of {len(group)}"
            )
        order = rng.permutation(len(group))
        for j, gi in enumerate(order):
            split = "test" if j < test_per_square else "train"
            group[gi].meta["split"] = split
            out[split].append(group[gi])
    for split in out:
        out[split].sort(key=lambda e: e.id)
    return out["train"], out["test"]


# ---------------------------------------------------------------------------
# normalization

@dataclass
class NormStats:
    """Per-feature z-score statistics; zero-variance features clamp to std 1."""

    mean: np.ndarray
    std: np.ndarray
    clamped: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "clamped": self.clamped.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            clamped=np.asarray(d["clamped"], dtype=bool),
        )


def fit_feature_stats(x: np.ndarray) -> NormStats:
    x = np.asarray(x, dtype=float).reshape(-1, np.asarray(x).shape[-1])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    clamped = std < 1e-12
    std = np.where(clamped, 1.0, std)
    return NormStats(mean=mean, std=std, clamped=clamped)


@dataclass
class LabelCube:
    """Scales positions into the workspace cube of half-width `half` meters."""

    half: float

    def normalize(self, p):
        return np.asarray(p, dtype=float) / self.half

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.half

    def rmse_to_mm(self, rmse_norm: float) -> float:
        return float(rmse_norm) * self.half * 1000.0

    def to_dict(self):
        return {"half": self.half}

    @classmethod
    def from_dict(cls, d):
        return cls(half=float(d["half"]))


# ---------------------------------------------------------------------------
# training-ready views

@dataclass
class PositionDataset:
    """Per-sample (state, wrist position) pairs across episodes."""

    x: np.ndarray         # (N, k) raw masked channels
    y: np.ndarray         # (N, 3) wrist positions, meters
    t_index: np.ndarray   # (N,) sample index within the source episode
    episode: np.ndarray   # (N,) source episode ordinal
    lengths: np.ndarray   # (E,) samples per source episode
    mask_name: str
    mask: np.ndarray

    @property
    def n(self):
        return self.x.shape[0]


def build_position_dataset(episodes: list, mask="all") -> PositionDataset:
    if not episodes:
        raise ValueError("no episodes given")
    mask_name, idx = resolve_mask(mask)
    xs, ys, ts, es = [], [], [], []
    for e_i, ep in enumerate(episodes):
        if ep.x.shape[1] != N_CHANNELS:
            raise ValueError(f"episode {ep.id}: expected {N_CHANNELS} channels, got {ep.x.shape[1]}")
        xs.append(ep.x[:, idx])
        ys.append(ep.p)
        ts.append(np.arange(len(ep)))
        es.append(np.full(len(ep), e_i))
    return PositionDataset(
        x=np.concatenate(xs), y=np.concatenate(ys),
        t_index=np.concatenate(ts), episode=np.concatenate(es),
        lengths=np.array([len(ep) for ep in episodes]),
        mask_name=mask_name, mask=idx,
    )


@dataclass
class SequenceDataset:
    """All length-H windows over a set of episodes, stored as views.

    Windows are indexed episode-major then by end sample; window i covers
    states [end-H+1 .. end] of its episode and is labeled with the episode
    target.  states is the dense per-episode channel array, windows are
    materialized per batch to keep memory flat.
    """

    states: np.ndarray    # (E, S_max, k), zero-padded past each episode's length
    targets: np.ndarray   # (E, 3)
    H: int
    episode: np.ndarray   # (M,) episode ordinal per window
    end: np.ndarray       # (M,) window end sample per window
    lengths: np.ndarray   # (E,) true samples per episode
    mask_name: str
    mask: np.ndarray

    @property
    def n_windows(self):
        return len(self.end)

    def window(self, i: int) -> np.ndarray:
        e, t = self.episode[i], self.end[i]
        return self.states[e, t - self.H + 1 : t + 1]

    def label(self, i: int) -> np.ndarray:
        return self.targets[self.episode[i]]

    def gather(self, idx) -> tuple:
        """Materialize windows idx as a (B, H, k) batch plus (B, 3) labels."""
        idx = np.asarray(idx, dtype=int)
        offs = np.arange(-self.H + 1, 1)
        rows = self.end[idx][:, None] + offs[None, :]
        return self.states[self.episode[idx][:, None], rows], self.targets[self.episode[idx]]


def build_sequence_dataset(episodes: list, H: int, mask="all") -> SequenceDataset:
    if not episodes:
        raise ValueError("no episodes given")
    if H < 1:
        raise ValueError("window length must be at least 1")
    mask_name, idx = resolve_mask(mask)
    short = [(ep.id, len(ep)) for ep in episodes if len(ep) < H]
    if short:
        raise EpisodeTooShort(H, short)
    lengths = np.array([len(ep) for ep in episodes])
    S_max = int(lengths.max())
    E = len(episodes)
    states = np.zeros((E, S_max, len(idx)))
    for e_i, ep in enumerate(episodes):
        states[e_i, : len(ep)] = ep.x[:, idx]
    targets = np.stack([ep.target for ep in episodes])
    episode = np.repeat(np.arange(E), lengths - H + 1)
    end = np.concatenate([np.arange(H - 1, n) for n in lengths])
    return SequenceDataset(
        states=states, targets=targets, H=H, episode=episode, end=end,
        lengths=lengths, mask_name=mask_name, mask=idx,
    )
