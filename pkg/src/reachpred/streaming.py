"""Online prediction at frame rate and the robot rendezvous harness.

The stream predictor keeps a ring of the last H masked states and their
per-sample feature rows; each push reruns windowed inference on the
current ring, so streamed outputs are bit-identical to offline windowed
evaluation of the same episode.  The robot is a velocity-bounded point
that replans by goal replacement.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields

import numpy as np


@dataclass
class RendezvousConfig:
    """Robot and success-criterion knobs for a rendezvous trial."""

    start: tuple = (0.0, 0.70, 0.10)
    v_max: float = 1.0
    threshold_mm: float = 60.0
    grace_s: float = 0.0

    def __post_init__(self):
        self.start = tuple(float(v) for v in self.start)
        if len(self.start) != 3:
            raise ValueError("robot start must be a 3-vector")
        if self.v_max < 0.0 or self.threshold_mm < 0.0 or self.grace_s < 0.0:
            raise ValueError("v_max, threshold and grace period must be nonnegative")

    def to_dict(self):
        return {"start": list(self.start), "v_max": self.v_max,
                "threshold_mm": self.threshold_mm, "grace_s": self.grace_s}

    @classmethod
    def from_dict(cls, d: dict) -> "RendezvousConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown rendezvous config keys: {sorted(unknown)}")
        return cls(**d)


class StreamPredictor:
    """Feeds one masked state at a time into the target predictor.

    No prediction is emitted until H samples have arrived; afterwards every
    push returns the model output on the most recent window.  Feature rows
    are computed once per sample, which changes nothing numerically since
    offline inference builds the same rows sample by sample.
    """

    def __init__(self, phi, gamma=None):
        self.phi = phi
        self.gamma = gamma
        self.mask = np.asarray(phi.mask)
        self.H = int(phi.config.H)
        self._states = np.zeros((self.H, len(self.mask)))
        self._feats = np.zeros((self.H, phi.input_width))
        self.count = 0

    def reset(self):
        self._states[:] = 0.0
        self._feats[:] = 0.0
        self.count = 0

    def _ordered(self, ring: np.ndarray) -> np.ndarray:
        ptr = self.count % self.H
        return np.concatenate([ring[ptr:], ring[:ptr]]) if ptr else ring.copy()

    @property
    def window(self) -> np.ndarray:
        """The buffered states, oldest first (valid once H samples arrived)."""
        return self._ordered(self._states)

    def push_sample(self, x: np.ndarray):
        """One masked state in; a target estimate (meters) out once warmed up."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != len(self.mask):
            raise ValueError(f"expected {len(self.mask)} channels, got {x.shape[0]}")
        slot = self.count % self.H
        self._states[slot] = x
        self._feats[slot] = self.phi.sample_feature(x, self.gamma)
        self.count += 1
        if self.count < self.H:
            return None
        return self.phi.infer_features(self._ordered(self._feats))


def _as_goal(robot: "RobotState"):
    return None if robot.goal is None else np.asarray(robot.goal, dtype=float)


@dataclass
class RobotState:
    """Velocity-bounded point end effector chasing the latest goal."""

    pos: np.ndarray
    v_max: float = 1.0
    goal: np.ndarray | None = None

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)


def rendezvous_step(robot: RobotState, goal, dt: float) -> RobotState:
    """Move straight toward the (possibly replaced) goal for one frame."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    goal = robot.goal if goal is None else np.asarray(goal, dtype=float).reshape(3)
    pos = robot.pos
    if goal is not None:
        delta = goal - pos
        dist = float(np.linalg.norm(delta))
        step = min(robot.v_max * dt, dist)
        if dist > 0.0:
            pos = pos + delta * (step / dist)
    return RobotState(pos=pos, v_max=robot.v_max, goal=goal)


@dataclass
class TrialResult:
    success: bool
    final_distance_mm: float
    first_prediction_t_s: float      # NaN when no prediction was emitted
    predictions: np.ndarray          # (S, 3), NaN rows before the first output
    robot_path: np.ndarray           # (S + grace steps, 3)
    latency_ms: np.ndarray           # per-push inference time
    trial_id: str = ""
    meta: dict = field(default_factory=dict)


def run_rendezvous_trial(episode, predictor, cfg: RendezvousConfig | None = None,
                         paced: bool = False) -> TrialResult:
    """Replay one episode at its native rate against a simulated robot.

    The predictor is reset, samples stream in frame by frame, each emitted
    prediction replaces the robot goal, and success is judged at the end
    against the true wrist position (after an optional grace period during
    which the hand holds still and the robot keeps moving).
    """
    cfg = cfg or RendezvousConfig()
    predictor.reset()
    mask = np.asarray(predictor.mask)
    if len(episode) < predictor.H:
        raise ValueError(
            f"episode {episode.id} shorter than the window "
            f"({len(episode)} < {predictor.H})"
        )
    dt = 1.0 / episode.rate
    robot = RobotState(pos=np.array(cfg.start), v_max=cfg.v_max)
    S = len(episode)
    predictions = np.full((S, 3), np.nan)
    path = []
    latencies = np.zeros(S)
    first_t = math.nan
    for k in range(S):
        frame_start = time.perf_counter()
        pred = predictor.push_sample(episode.x[k, mask])
        latencies[k] = (time.perf_counter() - frame_start) * 1e3
        goal = None
        if pred is not None:
            predictions[k] = pred
            goal = pred
            if math.isnan(first_t):
                first_t = float(episode.t[k])
        if paced:
            leftover = dt - (time.perf_counter() - frame_start)
            if leftover > 0.0:
                time.sleep(leftover)
        robot = rendezvous_step(robot, goal, dt)
        path.append(robot.pos)
    for _ in range(int(round(cfg.grace_s * episode.rate))):
        robot = rendezvous_step(robot, None, dt)
        path.append(robot.pos)
    final_mm = float(np.linalg.norm(robot.pos - episode.p[-1])) * 1000.0
    return TrialResult(
        success=final_mm <= cfg.threshold_mm,
        final_distance_mm=final_mm,
        first_prediction_t_s=first_t,
        predictions=predictions,
        robot_path=np.asarray(path),
        latency_ms=latencies,
        trial_id=episode.id,
        meta={**cfg.to_dict(), "rate": episode.rate,
              "success_convention": "end of episode plus grace period"},
    )


def run_campaign(episodes: list, predictor, cfg: RendezvousConfig | None = None,
                 paced: bool = False, log=None) -> tuple:
    """All episodes through the rendezvous harness; returns (rate, results).

    The success rate is a plain fraction, so it cannot depend on episode
    order; results are returned sorted by trial id for stable output.
    """
    if not episodes:
        raise ValueError("no episodes given")
    results = []
    for ep in episodes:
        res = run_rendezvous_trial(ep, predictor, cfg, paced=paced)
        results.append(res)
        if log:
            log(
                f"trial {res.trial_id}: "
                f"{'success' if res.success else 'miss'} "
                f"at {res.final_distance_mm:.1f} mm"
            )
    results.sort(key=lambda r: r.trial_id)
    rate = float(np.mean([r.success for r in results]))
    return rate, results


def write_campaign_csv(path: str, results: list):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "success", "final_distance_mm", "first_prediction_t_s"])
        for r in results:
            writer.writerow([
                r.trial_id, int(r.success),
                f"{r.final_distance_mm:.6f}", f"{r.first_prediction_t_s:.6f}",
            ])
