"""Recover bird's-eye trajectories of an observer and the crowd around it
from ego-centric pedestrian detections."""

from .crowd import ScenarioConfig, SocialForceParams, simulate
from .geometry import CameraIntrinsics, CameraPose, CameraRig, DetectionState, EgoMotion, HeightPrior
from .solver import BirdifyConfig, Bootstrap, birdify_sequence

__all__ = [
    "BirdifyConfig",
    "Bootstrap",
    "CameraIntrinsics",
    "CameraPose",
    "CameraRig",
    "DetectionState",
    "EgoMotion",
    "HeightPrior",
    "ScenarioConfig",
    "SocialForceParams",
    "birdify_sequence",
    "simulate",
]

__version__ = "0.1.0"
