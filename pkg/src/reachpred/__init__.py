"""Reach prediction from arm-worn inertial sensors.

Simulates two-IMU recordings of point-to-point arm reaches, trains a
feed-forward wrist-position estimator and an LSTM reach-target predictor on
them, and streams predictions to a simple robot rendezvous loop.
"""

from .errors import Disqualified, NotConverged, ReachPredError, SchemaError, Unreachable
from .kinematics import ArmModel, JointPose, JointTrajectory

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "JointPose",
    "JointTrajectory",
    "ReachPredError",
    "Unreachable",
    "NotConverged",
    "SchemaError",
    "Disqualified",
    "__version__",
]
