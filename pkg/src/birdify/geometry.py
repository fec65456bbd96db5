"""Ground-plane camera geometry.

Conventions: image u grows rightward, v downward, origin at the top-left
pixel. The camera frame is a ground-plane frame centred on the observer
with x~ to the right and y~ along the viewing direction. A world heading
``theta`` rotates that frame so the viewing direction in world coordinates
is ``(sin theta, cos theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import BehindCamera, DegenerateAtOrigin, NonPositiveApparentHeight

ProjectionKind = Literal["perspective", "cylindrical"]
PROJECTION_KINDS = ("perspective", "cylindrical")


def normalize_angle(a):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)  # in-range values pass through exactly
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length: float
    cu: float
    cv: float
    width: int
    height: int

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValueError("focal length must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    @classmethod
    def default(cls, kind: ProjectionKind = "perspective") -> "CameraIntrinsics":
        if kind == "cylindrical":
            # one pixel per column-angle step, like a stitched panorama
            width = 3600
            return cls(width / (2 * math.pi), width / 2, 400.0, width, 800)
        return cls(1000.0, 960.0, 540.0, 1920, 1080)


@dataclass(frozen=True)
class CameraRig:
    mount_height: float = 1.5
    projection: ProjectionKind = "perspective"

    def __post_init__(self):
        if not self.mount_height > 0:
            raise ValueError("mount height must be positive")
        if self.projection not in PROJECTION_KINDS:
            raise ValueError(f"unknown projection kind {self.projection!r}")


@dataclass(frozen=True)
class CameraPose:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class EgoMotion:
    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dtheta)):
            raise ValueError("ego-motion must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])


@dataclass(frozen=True)
class DetectionState:
    u: float
    v: float
    l: float
    pedestrian_id: int = -1
    frame_index: int = -1
    in_view: bool = True


@dataclass(frozen=True)
class RelativePosition:
    x: float
    y: float

    @property
    def range(self) -> float:
        return math.hypot(self.x, self.y)

    @property
    def bearing(self) -> float:
        """Angle from the viewing direction, positive to the right."""
        return math.atan2(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class HeightPrior:
    mean: float = 1.70
    std: float = 0.07

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("mean height must be positive")
        if not self.std >= 0:
            raise ValueError("height std must be non-negative")


# -- array kernels ---------------------------------------------------------

def inverse_project(u, l, h, intr: CameraIntrinsics, kind: ProjectionKind = "perspective"):
    """Camera-frame ground positions for detections ``(u, l)`` at heights ``h``.

    All arguments broadcast. Returns an array of shape ``broadcast + (2,)``.
    """
    u, l, h = np.broadcast_arrays(np.asarray(u, float), np.asarray(l, float), np.asarray(h, float))
    if np.any(l <= 0):
        raise NonPositiveApparentHeight("apparent height must be positive")
    depth = intr.focal_length * h / l
    if kind == "perspective":
        return np.stack([h * (u - intr.cu) / l, depth], axis=-1)
    if kind == "cylindrical":
        phi = 2.0 * np.pi * u / intr.width - np.pi
        return np.stack([depth * np.sin(phi), depth * np.cos(phi)], axis=-1)
    raise ValueError(f"unknown projection kind {kind!r}")


def ray_directions(u, l, intr: CameraIntrinsics, kind: ProjectionKind = "perspective"):
    """Camera-frame position per metre of pedestrian height (positions are linear in h)."""
    return inverse_project(u, l, 1.0, intr, kind)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def camera_to_world(z, pose_xy, theta):
    """Vectorised ``R(theta)^T z + x0`` for ``z`` of shape (..., 2)."""
    z = np.asarray(z, float)
    c, s = math.cos(theta), math.sin(theta)
    x = c * z[..., 0] + s * z[..., 1] + pose_xy[0]
    y = -s * z[..., 0] + c * z[..., 1] + pose_xy[1]
    return np.stack([x, y], axis=-1)


def world_to_camera(x, pose_xy, theta):
    x = np.asarray(x, float)
    dx = x[..., 0] - pose_xy[0]
    dy = x[..., 1] - pose_xy[1]
    c, s = math.cos(theta), math.sin(theta)
    return np.stack([c * dx - s * dy, s * dx + c * dy], axis=-1)


# -- scalar operations -----------------------------------------------------

def inverse_project_perspective(s: DetectionState, intr: CameraIntrinsics, h: float) -> RelativePosition:
    if s.l <= 0:
        raise NonPositiveApparentHeight(f"apparent height {s.l} <= 0")
    return RelativePosition(h * (s.u - intr.cu) / s.l, intr.focal_length * h / s.l)


def project_perspective(z: RelativePosition, intr: CameraIntrinsics, h: float) -> DetectionState:
    """Image observation of a pedestrian of height ``h`` at ``z``.

    Points outside the image come back with ``in_view=False`` rather than
    raising, so callers can model a limited field of view.
    """
    if z.y <= 0:
        raise BehindCamera(f"depth {z.y} <= 0")
    l = intr.focal_length * h / z.y
    u = intr.cu + intr.focal_length * z.x / z.y
    # centre of the body sits h/2 below the optical axis
    v = intr.cv + 0.5 * l
    in_view = 0 <= u < intr.width and 0 <= v < intr.height
    return DetectionState(u, v, l, in_view=in_view)


def inverse_project_cylindrical(s: DetectionState, intr: CameraIntrinsics, h: float) -> RelativePosition:
    if s.l <= 0:
        raise NonPositiveApparentHeight(f"apparent height {s.l} <= 0")
    phi = 2.0 * math.pi * s.u / intr.width - math.pi
    r = intr.focal_length * h / s.l
    return RelativePosition(r * math.sin(phi), r * math.cos(phi))


def project_cylindrical(z: RelativePosition, intr: CameraIntrinsics, h: float) -> DetectionState:
    r = z.range
    if r < 1e-12:
        raise DegenerateAtOrigin("pedestrian coincides with the camera centre")
    phi = math.atan2(z.x, z.y)
    u = intr.width * (phi + math.pi) / (2.0 * math.pi)
    if u >= intr.width:
        u -= intr.width
    l = intr.focal_length * h / r
    v = intr.cv + 0.5 * l
    return DetectionState(u, v, l, in_view=0 <= v < intr.height)


def inverse_project_detection(s: DetectionState, intr: CameraIntrinsics, h: float,
                              kind: ProjectionKind = "perspective") -> RelativePosition:
    if kind == "cylindrical":
        return inverse_project_cylindrical(s, intr, h)
    return inverse_project_perspective(s, intr, h)


def project(z: RelativePosition, intr: CameraIntrinsics, h: float,
            kind: ProjectionKind = "perspective") -> DetectionState:
    if kind == "cylindrical":
        return project_cylindrical(z, intr, h)
    return project_perspective(z, intr, h)


def to_world(z: RelativePosition, pose: CameraPose) -> np.ndarray:
    return camera_to_world(z.as_array(), (pose.x, pose.y), pose.theta)


def to_camera(x, pose: CameraPose) -> RelativePosition:
    zx, zy = world_to_camera(np.asarray(x, float), (pose.x, pose.y), pose.theta)
    return RelativePosition(float(zx), float(zy))


def apply_ego_motion(pose: CameraPose, d: EgoMotion) -> CameraPose:
    return replace(pose, x=pose.x + d.dx, y=pose.y + d.dy, theta=pose.theta + d.dtheta)
