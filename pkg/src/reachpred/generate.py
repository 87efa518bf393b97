"""Synthetic reaching corpus: board squares rendered into IMU episodes.

Each episode reaches from a jittered rest pose to a random touch point
inside one board square, under a per-episode torso yaw.  Mount placement
and sensor turn-on biases are redrawn only at block boundaries, mimicking
a wearable that is re-positioned every so many recordings and then used
without recalibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .board import BoardLayout
from .dataset import split_episodes
from .errors import NotConverged, Unreachable
from .imu_synth import (
    UPPER_MOUNT,
    WRIST_MOUNT,
    EnvConfig,
    NoiseConfig,
    perturb_mount,
)
from .imu_synth import simulate_episode as _simulate
from .kinematics import ArmModel, clip_joints, plan_reach

# seed-stream tags so the per-episode, per-block and split draws never collide
_DRAW_TAG, _BLOCK_TAG, _BIAS_TAG, _SIM_TAG, _SPLIT_TAG = 11, 22, 33, 44, 55


@dataclass
class GenerationConfig:
    """Everything that determines a dataset, seeds included."""

    seed: int = 0
    squares: int | None = None          # first n squares row-major; None = all
    train_per_square: int = 20
    test_per_square: int = 8
    rate: float = 60.0
    internal_rate: float = 240.0
    T: float = 2.0
    t_f_range: tuple = (1.2, 1.8)
    torso_yaw_range: float = float(np.deg2rad(20.0))
    q0_base: tuple = (0.25, 0.0, 0.55, 0.0)
    q0_jitter: tuple = (0.15, 0.30, 0.15, 0.30)
    mount_block: int = 12
    mount_roll_range: float = float(np.deg2rad(15.0))
    mount_shift_range: float = 0.02
    noisy: bool = True
    arm: ArmModel = field(default_factory=ArmModel)
    board: BoardLayout = field(default_factory=BoardLayout)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "squares": self.squares,
            "train_per_square": self.train_per_square,
            "test_per_square": self.test_per_square,
            "rate": self.rate,
            "internal_rate": self.internal_rate,
            "T": self.T,
            "t_f_range": list(self.t_f_range),
            "torso_yaw_range": self.torso_yaw_range,
            "q0_base": list(self.q0_base),
            "q0_jitter": list(self.q0_jitter),
            "mount_block": self.mount_block,
            "mount_roll_range": self.mount_roll_range,
            "mount_shift_range": self.mount_shift_range,
            "noisy": self.noisy,
            "arm": {"l_u": self.arm.l_u, "l_f": self.arm.l_f},
            "board": {
                "cols": self.board.cols, "rows": self.board.rows,
                "square": self.board.square, "center": list(self.board.center),
            },
            "noise": self.noise.to_dict(),
            "env": {
                "g_world": list(self.env.g_world),
                "b_world": list(self.env.b_world),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generation config keys: {sorted(unknown)}")
        if "arm" in d:
            d["arm"] = ArmModel(**d["arm"])
        if "board" in d:
            b = dict(d["board"])
            if "center" in b:
                b["center"] = tuple(b["center"])
            d["board"] = BoardLayout(**b)
        if "noise" in d:
            d["noise"] = NoiseConfig.from_dict(d["noise"])
        if "env" in d:
            e = d["env"]
            d["env"] = EnvConfig(
                g_world=tuple(e["g_world"]), b_world=tuple(e["b_world"])
            )
        for key in ("t_f_range", "q0_base", "q0_jitter"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _seed_int(*entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _block_mounts(cfg: GenerationConfig, block: int) -> tuple:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _BLOCK_TAG, block]))
    wrist = perturb_mount(WRIST_MOUNT, rng, cfg.mount_roll_range, cfg.mount_shift_range)
    upper = perturb_mount(UPPER_MOUNT, rng, cfg.mount_roll_range, cfg.mount_shift_range)
    return wrist, upper


def generate_episode(cfg: GenerationConfig, row: int, col: int, j: int, g: int):
    """Render episode number g (the j-th of square (row, col))."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _DRAW_TAG, g]))
    block = g // cfg.mount_block
    wrist_mount, upper_mount = _block_mounts(cfg, block)
    jit = np.asarray(cfg.q0_jitter, dtype=float)
    last_err = None
    for attempt in range(5):
        point = cfg.board.sample_point(row, col, rng)
        t_f = rng.uniform(*cfg.t_f_range)
        yaw = rng.uniform(-cfg.torso_yaw_range, cfg.torso_yaw_range)
        q0 = clip_joints(np.asarray(cfg.q0_base) + rng.uniform(-jit, jit))
        try:
            # plan in the arm frame; the torso yaw is applied at render time.
            # keep the dense rate: the simulator differentiates then decimates
            traj = plan_reach(
                q0, _rot_z(-yaw) @ point, t_f, cfg.T, cfg.arm,
                rate=cfg.internal_rate, internal_rate=cfg.internal_rate,
            )
        except (NotConverged, Unreachable) as exc:
            last_err = exc
            continue
        ep = _simulate(
            traj, cfg.arm, wrist_mount, upper_mount,
            noise=cfg.noise if cfg.noisy else None, env=cfg.env,
            seed=_seed_int(cfg.seed, _SIM_TAG, g), out_rate=cfg.rate,
            torso_yaw=yaw, bias_seed=_seed_int(cfg.seed, _BIAS_TAG, block),
            episode_id=f"r{row}c{col}_{j:02d}",
        )
        ep.meta.update(
            row=row, col=col, t_f=t_f, torso_yaw=yaw, block=block, retries=attempt
        )
        return ep
    raise NotConverged(
        f"square ({row}, {col}) episode {j}: no plannable reach in 5 draws"
    ) from last_err


def generate_dataset(cfg: GenerationConfig, progress=None) -> list:
    """All episodes for the configured board, split already stamped in meta."""
    squares = cfg.board.squares()
    if cfg.squares is not None:
        if not (1 <= cfg.squares <= len(squares)):
            raise ValueError(f"squares must be in 1..{len(squares)}")
        squares = squares[: cfg.squares]
    per = cfg.train_per_square + cfg.test_per_square
    episodes = []
    g = 0
    for row, col in squares:
        for j in range(per):
            episodes.append(generate_episode(cfg, row, col, j, g))
            g += 1
        if progress is not None:
            progress(row, col, len(episodes))
    train, test = split_episodes(
        episodes, cfg.test_per_square, seed=_seed_int(cfg.seed, _SPLIT_TAG)
    )
    return train + test
