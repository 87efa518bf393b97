"""Synthetic IMU channels for the two arm bands.

Each band carries a body frame: x along the segment (proximal to distal),
y and z spanning the cross-section, right-handed.  A mount roll about the
segment axis and an anchor shift along it model band placement error; a
per-episode torso yaw rotates the whole arm (and with it the magnetic
heading) about the vertical.

Accelerometers report specific force R^T (a - g) so a static band reads
+9.81 on the up axis; gyros report the body-frame angular velocity, derived
analytically from the joint rates; magnetometers report the unit world
field in the body frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Episode
from .kinematics import ArmModel, JointTrajectory

GRAVITY = 9.81


@dataclass(frozen=True)
class EnvConfig:
    """World-frame gravity and magnetic field direction."""

    g_world: tuple = (0.0, 0.0, -GRAVITY)
    b_world: tuple = (0.4, 0.9, -0.2)

    def g(self) -> np.ndarray:
        return np.asarray(self.g_world, dtype=float)

    def b_unit(self) -> np.ndarray:
        b = np.asarray(self.b_world, dtype=float)
        n = np.linalg.norm(b)
        if n == 0.0:
            raise ValueError("magnetic field direction must be nonzero")
        return b / n


@dataclass(frozen=True)
class MountConfig:
    """Band placement on a segment.

    fraction is the nominal anchor position along the segment (0 proximal,
    1 distal); shift is an additional placement error in meters along the
    axis; roll rotates the band about the segment axis.
    """

    roll: float = 0.0
    shift: float = 0.0
    fraction: float = 0.5

    def effective_fraction(self, segment_length: float) -> float:
        f = self.fraction + self.shift / segment_length
        return float(np.clip(f, 0.0, 1.0))

    def to_dict(self):
        return {"roll": self.roll, "shift": self.shift, "fraction": self.fraction}

    @classmethod
    def from_dict(cls, d):
        return cls(roll=float(d["roll"]), shift=float(d["shift"]), fraction=float(d["fraction"]))


WRIST_MOUNT = MountConfig(fraction=1.0)
UPPER_MOUNT = MountConfig(fraction=0.5)


def perturb_mount(
    base: MountConfig,
    rng: np.random.Generator,
    roll_range: float = np.deg2rad(15.0),
    shift_range: float = 0.02,
) -> MountConfig:
    """Draw a placement-error variant of base; zero ranges return base as is."""
    roll = base.roll + (rng.uniform(-roll_range, roll_range) if roll_range > 0.0 else 0.0)
    shift = base.shift + (rng.uniform(-shift_range, shift_range) if shift_range > 0.0 else 0.0)
    return MountConfig(roll=roll, shift=shift, fraction=base.fraction)


@dataclass(frozen=True)
class NoiseConfig:
    """White-noise sigmas and per-episode-block turn-on bias sigmas."""

    accel_sigma: float = 0.05
    gyro_sigma: float = 0.005
    mag_sigma: float = 0.01
    accel_bias: float = 0.02
    gyro_bias: float = 0.002
    mag_bias: float = 0.005

    def to_dict(self):
        return {
            "accel_sigma": self.accel_sigma, "gyro_sigma": self.gyro_sigma,
            "mag_sigma": self.mag_sigma, "accel_bias": self.accel_bias,
            "gyro_bias": self.gyro_bias, "mag_bias": self.mag_bias,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class SegmentFrame:
    """Body frame of one band: rotation world<-body plus a pole flag."""

    rotation: np.ndarray
    degenerate: bool


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _upper_rotations(q: np.ndarray) -> np.ndarray:
    """Base rotations of the upper-arm frame for q of shape (n, 4)."""
    se, ce = np.sin(q[:, 0]), np.cos(q[:, 0])
    sy, cy = np.sin(q[:, 1]), np.cos(q[:, 1])
    zero = np.zeros_like(se)
    cols = [
        np.stack([se * sy, se * cy, -ce], axis=-1),
        np.stack([-cy, sy, zero], axis=-1),
        np.stack([ce * sy, ce * cy, se], axis=-1),
    ]
    return np.stack(cols, axis=-1)


def _upper_rotations_dot(q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    se, ce = np.sin(q[:, 0]), np.cos(q[:, 0])
    sy, cy = np.sin(q[:, 1]), np.cos(q[:, 1])
    zero = np.zeros_like(se)
    de = np.stack(
        [
            np.stack([ce * sy, ce * cy, se], axis=-1),
            np.stack([zero, zero, zero], axis=-1),
            np.stack([-se * sy, -se * cy, ce], axis=-1),
        ],
        axis=-1,
    )
    dy = np.stack(
        [
            np.stack([se * cy, -se * sy, zero], axis=-1),
            np.stack([sy, cy, zero], axis=-1),
            np.stack([ce * cy, -ce * sy, zero], axis=-1),
        ],
        axis=-1,
    )
    return de * qdot[:, 0, None, None] + dy * qdot[:, 1, None, None]


def _forearm_rotations(q: np.ndarray) -> np.ndarray:
    sp, cp = np.sin(q[:, 2]), np.cos(q[:, 2])
    sq, cq = np.sin(q[:, 3]), np.cos(q[:, 3])
    zero = np.zeros_like(sp)
    cols = [
        np.stack([sp * sq, sp * cq, cp], axis=-1),
        np.stack([-cq, sq, zero], axis=-1),
        np.stack([-cp * sq, -cp * cq, sp], axis=-1),
    ]
    return np.stack(cols, axis=-1)


def _forearm_rotations_dot(q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    sp, cp = np.sin(q[:, 2]), np.cos(q[:, 2])
    sq, cq = np.sin(q[:, 3]), np.cos(q[:, 3])
    zero = np.zeros_like(sp)
    de = np.stack(
        [
            np.stack([cp * sq, cp * cq, -sp], axis=-1),
            np.stack([zero, zero, zero], axis=-1),
            np.stack([sp * sq, sp * cq, cp], axis=-1),
        ],
        axis=-1,
    )
    dy = np.stack(
        [
            np.stack([sp * cq, -sp * sq, zero], axis=-1),
            np.stack([sq, cq, zero], axis=-1),
            np.stack([-cp * cq, cp * sq, zero], axis=-1),
        ],
        axis=-1,
    )
    return de * qdot[:, 2, None, None] + dy * qdot[:, 3, None, None]


_SEGMENTS = ("upper", "forearm")


def segment_frame(q, segment: str, mount: MountConfig | None = None,
                  torso_yaw: float = 0.0) -> SegmentFrame:
    """World<-body rotation of a band at joint vector q.

    The frame is degenerate when the segment points within 1e-6 of
    vertical: the cross-section axes are normally found by orthogonalizing
    world z against the segment axis, which vanishes at the pole, so there
    the reference swaps to world y.  Flagged, not fatal; the rotation stays
    orthonormal either way.
    """
    q = np.asarray(q, dtype=float).reshape(1, 4)
    if segment not in _SEGMENTS:
        raise ValueError(f"segment must be one of {_SEGMENTS}")
    base = (_upper_rotations(q) if segment == "upper" else _forearm_rotations(q))[0]
    sin_elv = np.sin(q[0, 0] if segment == "upper" else q[0, 2])
    degenerate = bool(abs(sin_elv) < 1e-6)
    if degenerate:
        x_ax = base[:, 0] / np.linalg.norm(base[:, 0])
        ref = np.array([0.0, 1.0, 0.0])
        v = ref - (ref @ x_ax) * x_ax
        z_ax = v / np.linalg.norm(v)
        base = np.column_stack([x_ax, np.cross(z_ax, x_ax), z_ax])
    R = base
    if mount is not None and mount.roll != 0.0:
        R = R @ _rot_x(mount.roll)
    if torso_yaw != 0.0:
        R = _rot_z(torso_yaw) @ R
    return SegmentFrame(rotation=R, degenerate=degenerate)


def angular_velocity(q, qdot, segment: str, mount: MountConfig | None = None) -> np.ndarray:
    """Body-frame angular velocity of a band; torso yaw is rate-free and drops out."""
    q = np.asarray(q, dtype=float).reshape(1, 4)
    qdot = np.asarray(qdot, dtype=float).reshape(1, 4)
    if segment == "upper":
        R, Rd = _upper_rotations(q), _upper_rotations_dot(q, qdot)
    elif segment == "forearm":
        R, Rd = _forearm_rotations(q), _forearm_rotations_dot(q, qdot)
    else:
        raise ValueError(f"segment must be one of {_SEGMENTS}")
    w = _vee(np.einsum("nij,nik->njk", R, Rd))[0]
    if mount is not None and mount.roll != 0.0:
        w = _rot_x(mount.roll).T @ w
    return w


def _vee(m: np.ndarray) -> np.ndarray:
    return np.stack([m[:, 2, 1], m[:, 0, 2], m[:, 1, 0]], axis=-1)


def _second_difference(r: np.ndarray, rate: float) -> np.ndarray:
    """Central second difference along axis 0, edges copied from neighbors."""
    a = np.empty_like(r)
    a[1:-1] = (r[2:] - 2.0 * r[1:-1] + r[:-2]) * rate * rate
    a[0] = a[1]
    a[-1] = a[-2]
    return a


def simulate_episode(
    traj: JointTrajectory,
    arm: ArmModel,
    wrist_mount: MountConfig = WRIST_MOUNT,
    upper_mount: MountConfig = UPPER_MOUNT,
    noise: NoiseConfig | None = None,
    env: EnvConfig = EnvConfig(),
    seed: int = 0,
    out_rate: float = 60.0,
    torso_yaw: float = 0.0,
    bias_seed: int | None = None,
    episode_id: str = "ep",
) -> Episode:
    """Render a joint trajectory into a two-band IMU episode.

    The trajectory must be sampled at 120 Hz or faster and at an integer
    multiple of out_rate; accelerations come from second differences of the
    band anchor paths at the trajectory rate before decimation.  White noise
    is drawn per output sample from `seed`; turn-on biases are drawn from
    `bias_seed` (default: seed) so a block of episodes can share biases.
    """
    n = len(traj)
    if n < 2:
        raise ValueError("trajectory must contain at least two samples")
    if traj.rate < 120.0:
        raise ValueError(f"trajectory rate {traj.rate} Hz is below the 120 Hz floor")
    stride = int(round(traj.rate / out_rate))
    if stride < 1 or abs(traj.rate - stride * out_rate) > 1e-9:
        raise ValueError("trajectory rate must be an integer multiple of out_rate")

    q, qdot = traj.q, traj.qdot
    R_u = _upper_rotations(q)
    R_f = _forearm_rotations(q)
    axis_u = R_u[:, :, 0]
    axis_f = R_f[:, :, 0]

    fr_u = upper_mount.effective_fraction(arm.l_u)
    fr_w = wrist_mount.effective_fraction(arm.l_f)
    r_upper = fr_u * arm.l_u * axis_u
    r_wrist = arm.l_u * axis_u + fr_w * arm.l_f * axis_f

    Rz = _rot_z(torso_yaw)
    g = env.g()
    b = env.b_unit()

    out = {}
    for band, (r_anchor, R_base, Rd, mount) in {
        "wrist": (r_wrist, R_f, _forearm_rotations_dot(q, qdot), wrist_mount),
        "upper": (r_upper, R_u, _upper_rotations_dot(q, qdot), upper_mount),
    }.items():
        R_full = np.einsum("ij,njk,kl->nil", Rz, R_base, _rot_x(mount.roll))
        a_world = _second_difference(r_anchor @ Rz.T, traj.rate)
        f_body = np.einsum("nji,nj->ni", R_full, a_world - g)
        w_body = _rot_x(mount.roll).T @ _vee(np.einsum("nij,nik->njk", R_base, Rd)).T
        m_body = np.einsum("nji,j->ni", R_full, b)
        out[band] = (f_body, w_body.T, m_body)

    idx = np.arange(0, n, stride)
    S = len(idx)
    x = np.empty((S, 18))
    x[:, 0:3], x[:, 3:6], x[:, 6:9] = (c[idx] for c in out["wrist"])
    x[:, 9:12], x[:, 12:15], x[:, 15:18] = (c[idx] for c in out["upper"])

    if noise is not None:
        bias_rng = np.random.default_rng(seed if bias_seed is None else bias_seed)
        noise_rng = np.random.default_rng([seed, 7919])
        sig = [noise.accel_sigma, noise.gyro_sigma, noise.mag_sigma]
        bia = [noise.accel_bias, noise.gyro_bias, noise.mag_bias]
        for block in range(6):  # wrist a/g/m then upper a/g/m
            kind = block % 3
            cols = slice(3 * block, 3 * block + 3)
            x[:, cols] += bias_rng.normal(0.0, bia[kind], 3)
            x[:, cols] += noise_rng.normal(0.0, sig[kind], (S, 3))

    p_world = traj.p @ Rz.T
    return Episode(
        id=episode_id,
        t=traj.t[idx],
        x=x,
        p=p_world[idx],
        target=p_world[idx][-1].copy(),
        rate=float(out_rate),
        meta={
            "t_f": traj.t_f, "T": traj.T, "torso_yaw": float(torso_yaw),
            "seed": int(seed),
            "mount_wrist": wrist_mount.to_dict(), "mount_upper": upper_mount.to_dict(),
            "arm": {"l_u": arm.l_u, "l_f": arm.l_f},
        },
    )
