"""4-DOF arm kinematics and minimum-jerk reach planning.

Joint vector q = (theta_elv, theta_yaw, phi_elv, phi_yaw): elevation and yaw
of the upper arm followed by elevation and yaw of the forearm, radians.
Elevation is measured from the downward vertical (0 = hanging down for the
upper arm), yaw about the vertical axis.  The shoulder sits at the origin,
x to the subject's right, y forward, z up.  Wrist position:

    p_x = l_u sin(theta_elv) sin(theta_yaw) + l_f sin(phi_elv) sin(phi_yaw)
    p_y = l_u sin(theta_elv) cos(theta_yaw) + l_f sin(phi_elv) cos(phi_yaw)
    p_z = -l_u cos(theta_elv) + l_f cos(phi_elv)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, Unreachable

ELV_LIMITS = (0.0, np.pi)
YAW_LIMITS = (-np.pi, np.pi)


@dataclass(frozen=True)
class ArmModel:
    """Segment lengths in meters."""

    l_u: float = 0.29
    l_f: float = 0.285

    def __post_init__(self):
        if self.l_u <= 0.0 or self.l_f <= 0.0:
            raise ValueError("segment lengths must be positive")

    @property
    def span(self) -> float:
        return self.l_u + self.l_f


@dataclass
class JointPose:
    theta_elv: float
    theta_yaw: float
    phi_elv: float
    phi_yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_elv, self.theta_yaw, self.phi_elv, self.phi_yaw])

    @classmethod
    def from_array(cls, q) -> "JointPose":
        q = np.asarray(q, dtype=float).reshape(4)
        return cls(*q.tolist())


def _as_q(q) -> np.ndarray:
    if isinstance(q, JointPose):
        return q.as_array()
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError(f"joint array must have last dimension 4, got {q.shape}")
    return q


def clip_joints(q) -> np.ndarray:
    """Normalize joint values into the mechanical limits.

    Elevations clamp to [0, pi]; yaws are periodic and wrap into [-pi, pi).
    """
    q = _as_q(q).copy()
    q[..., 0] = np.clip(q[..., 0], *ELV_LIMITS)
    q[..., 2] = np.clip(q[..., 2], *ELV_LIMITS)
    q[..., 1] = np.mod(q[..., 1] + np.pi, 2.0 * np.pi) - np.pi
    q[..., 3] = np.mod(q[..., 3] + np.pi, 2.0 * np.pi) - np.pi
    return q


def segment_axes(q):
    """Unit vectors along the upper arm and forearm, shape (..., 3) each."""
    q = _as_q(q)
    se, ce = np.sin(q[..., 0]), np.cos(q[..., 0])
    sy, cy = np.sin(q[..., 1]), np.cos(q[..., 1])
    sp, cp = np.sin(q[..., 2]), np.cos(q[..., 2])
    sq, cq = np.sin(q[..., 3]), np.cos(q[..., 3])
    a_u = np.stack([se * sy, se * cy, -ce], axis=-1)
    a_f = np.stack([sp * sq, sp * cq, cp], axis=-1)
    return a_u, a_f


def forward_kinematics(q, arm: ArmModel) -> np.ndarray:
    """Wrist position for joint vector(s) q, shape (..., 3)."""
    a_u, a_f = segment_axes(q)
    return arm.l_u * a_u + arm.l_f * a_f


def elbow_position(q, arm: ArmModel) -> np.ndarray:
    a_u, _ = segment_axes(q)
    return arm.l_u * a_u


def jacobian(q, arm: ArmModel) -> np.ndarray:
    """3x4 Jacobian of the wrist position with respect to q."""
    q = _as_q(q).reshape(4)
    se, ce = np.sin(q[0]), np.cos(q[0])
    sy, cy = np.sin(q[1]), np.cos(q[1])
    sp, cp = np.sin(q[2]), np.cos(q[2])
    sq, cq = np.sin(q[3]), np.cos(q[3])
    lu, lf = arm.l_u, arm.l_f
    return np.array(
        [
            [lu * ce * sy, lu * se * cy, lf * cp * sq, lf * sp * cq],
            [lu * ce * cy, -lu * se * sy, lf * cp * cq, -lf * sp * sq],
            [lu * se, 0.0, -lf * sp, 0.0],
        ]
    )


def min_jerk_profile(tau):
    """Minimum-jerk scalar profile and its first two derivatives in tau.

    s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5 on tau in [0, 1].
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0) or np.any(tau > 1.0):
        raise ValueError("tau must lie in [0, 1]")
    t2 = tau * tau
    t3 = t2 * tau
    t4 = t3 * tau
    s = 10.0 * t3 - 15.0 * t4 + 6.0 * t4 * tau
    ds = 30.0 * t2 - 60.0 * t3 + 30.0 * t4
    dds = 60.0 * tau - 180.0 * t2 + 120.0 * t3
    return s, ds, dds


def _check_reachable(target, arm: ArmModel):
    r = float(np.linalg.norm(target))
    if r > arm.span:
        raise Unreachable(f"|target| = {r:.4f} m exceeds arm span {arm.span:.4f} m")
    if r < abs(arm.l_u - arm.l_f) - 1e-12:
        raise Unreachable(f"|target| = {r:.4f} m inside inner workspace boundary")


# deterministic fallback seeds for targets the caller's seed cannot reach;
# both segments share elevation/yaw so each covers one workspace octant
_FALLBACK_SEEDS = [
    np.array([e, y, e, y])
    for e in (0.6, 1.6, 2.6)
    for y in (0.0, 1.5, -1.5, 3.0)
]


def _reflect_poles(q) -> np.ndarray:
    """Map out-of-range elevations back via the exact pole identity.

    The segment axis satisfies axis(-e, y) == axis(e, y + pi) and
    axis(pi + d, y) == axis(pi - d, y + pi), so reflecting at the poles
    keeps the iteration on the sphere instead of pinning it where the yaw
    column of the Jacobian vanishes.
    """
    q = q.copy()
    for elv, yaw in ((0, 1), (2, 3)):
        e = q[elv]
        if e < 0.0 or e > np.pi:
            e = np.mod(e, 2.0 * np.pi)
            if e > np.pi:
                e = 2.0 * np.pi - e
                q[yaw] += np.pi
            q[elv] = e
    q[1] = np.mod(q[1] + np.pi, 2.0 * np.pi) - np.pi
    q[3] = np.mod(q[3] + np.pi, 2.0 * np.pi) - np.pi
    return q


def _ik_attempt(target, arm, start, pull_to, tol, max_iter, damping, ns_gain, max_step):
    q = clip_joints(start)
    eye3 = np.eye(3)
    gain = ns_gain
    for _ in range(max_iter):
        e = target - forward_kinematics(q, arm)
        ne = float(np.linalg.norm(e))
        if ne < tol:
            return q
        J = jacobian(q, arm)
        # Levenberg-style damping shrinks with the residual so the slow
        # near-singular directions still converge near the workspace boundary
        lam2 = max(1e-14, min(damping * damping, (0.1 * ne) ** 2))
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * eye3, e)
        if gain > 1e-12:
            # nullspace pull resolves the redundancy toward pull_to; the
            # projector must be exact (undamped) and the gain must decay or
            # curvature coupling stalls the task-space convergence
            pull = pull_to - q
            dq += gain * (pull - np.linalg.pinv(J) @ (J @ pull))
            gain *= 0.85
        step = float(np.linalg.norm(dq))
        if step > max_step:
            dq *= max_step / step
        q = _reflect_poles(q + dq)
    return None


def solve_ik(
    target,
    arm: ArmModel,
    seed,
    tol: float = 1e-9,
    max_iter: int = 200,
    damping: float = 0.01,
    ns_gain: float = 0.5,
    max_step: float = 1.0,
) -> np.ndarray:
    """Damped least-squares IK with the redundancy pulled toward the seed.

    Each iteration takes a damped Gauss-Newton step on the position error
    plus a nullspace-projected pull toward the seed pose, so when the solve
    from the caller's seed succeeds it lands on the solution branch closest
    to the seed.  If that attempt stalls, a fixed list of fallback seeds is
    tried in order (deterministic), each with its own max_iter budget.
    Raises Unreachable for targets outside the workspace and NotConverged
    when every attempt fails.
    """
    target = np.asarray(target, dtype=float).reshape(3)
    _check_reachable(target, arm)
    seed = _as_q(seed).reshape(4).astype(float)
    q = _ik_attempt(target, arm, seed, seed, tol, max_iter, damping, ns_gain, max_step)
    if q is not None:
        return q
    for start in _FALLBACK_SEEDS:
        q = _ik_attempt(target, arm, start, start, tol, max_iter, damping, ns_gain, max_step)
        if q is not None:
            return q
    raise NotConverged(f"IK failed for target {target} after all seed attempts")


@dataclass
class JointTrajectory:
    """Sampled joint-space trajectory of one reach.

    t has shape (n,), q and qdot (n, 4), p (n, 3); p is the wrist path and
    always equals the forward kinematics of q at the same sample.  Motion
    occupies t < t_f, after which the pose holds until T.
    """

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    p: np.ndarray
    rate: float
    t_f: float
    T: float

    def __len__(self):
        return self.t.shape[0]


def plan_reach(
    q0,
    target,
    t_f: float,
    T: float,
    arm: ArmModel,
    rate: float = 60.0,
    internal_rate: float = 240.0,
    ik_tol: float = 1e-11,
) -> JointTrajectory:
    """Plan a minimum-jerk reach from pose q0 to a workspace target.

    The wrist follows a straight line with a minimum-jerk speed profile,
    arriving at t_f and holding until T.  The path is planned at
    internal_rate and decimated to rate; internal_rate must be an integer
    multiple of rate.  Joint rates come from the damped least-squares map of
    the task-space velocity.
    """
    if not (0.0 < t_f <= T):
        raise ValueError(f"need 0 < t_f <= T, got t_f={t_f}, T={T}")
    stride = int(round(internal_rate / rate))
    if stride < 1 or abs(internal_rate - stride * rate) > 1e-9:
        raise ValueError("internal_rate must be an integer multiple of rate")
    n_out = int(round(rate * T))
    if n_out < 2:
        raise ValueError("trajectory must contain at least two samples")

    q0 = _as_q(q0).reshape(4).astype(float)
    target = np.asarray(target, dtype=float).reshape(3)
    _check_reachable(target, arm)

    n_dense = n_out * stride
    p0 = forward_kinematics(q0, arm)
    dp = target - p0

    qs = np.empty((n_dense, 4))
    qds = np.zeros((n_dense, 4))
    # tiny damping: only guards the velocity map against exact singularities,
    # anything larger visibly attenuates qdot versus the followed path
    lam2 = 1e-8
    eye3 = np.eye(3)
    q_prev = q0
    q_hold = None
    for k in range(n_dense):
        t = k / internal_rate
        if t < t_f:
            tau = t / t_f
            s, ds, _ = min_jerk_profile(tau)
            q_k = solve_ik(p0 + s * dp, arm, seed=q_prev, tol=ik_tol)
            J = jacobian(q_k, arm)
            v = (ds / t_f) * dp
            qds[k] = J.T @ np.linalg.solve(J @ J.T + lam2 * eye3, v)
        else:
            if q_hold is None:
                q_hold = solve_ik(target, arm, seed=q_prev, tol=ik_tol)
            q_k = q_hold
        qs[k] = q_k
        q_prev = q_k

    idx = np.arange(n_out) * stride
    q_out = qs[idx]
    return JointTrajectory(
        t=idx / internal_rate,
        q=q_out,
        qdot=qds[idx],
        p=forward_kinematics(q_out, arm),
        rate=float(rate),
        t_f=float(t_f),
        T=float(T),
    )
