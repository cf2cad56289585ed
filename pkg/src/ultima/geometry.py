"""Camera-object relation math.

A relation is the triple (phi, theta, dist_rel): the object's facing azimuth
measured counterclockwise from the camera-facing direction, the camera's
elevation over the object's horizontal plane, and the frame-to-object size
ratio at the object's distance (1.0 means the object spans the frame along
the tighter field-of-view axis).

Conventions pinned here and relied on everywhere else:

* world frame is right-handed with +z up; objects sit centered at the origin,
  upright along +z,
* all classification bins are half-open, closed at the lower edge; the
  azimuth bin centered on 0 wraps across 0,
* elevation is measured from the horizontal plane, not from the pole: a
  camera 81 degrees above the horizon looks nearly straight down and
  classifies as a top view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

TAU = 2.0 * math.pi

ORIENTATION_BIN_WIDTH = math.pi / 4
VIEWPOINT_BIN_WIDTH = math.pi / 3
SHOT_CUTOFF_CLOSE = 1.25
SHOT_CUTOFF_LONG = 3.0

WORLD_UP = np.array([0.0, 0.0, 1.0])


class OrientationClass(Enum):
    """Eight azimuth bins of width pi/4.

    ``octant`` is the bin center in units of pi/4; the bin spans
    [center - pi/8, center + pi/8). An object with phi = pi faces the camera,
    so the FRONT bin is centered on pi and BACK (centered on 0) wraps.
    """

    RIGHT = ("Right", 2)
    FRONT_RIGHT = ("Front Right", 3)
    FRONT = ("Front", 4)
    FRONT_LEFT = ("Front Left", 5)
    LEFT = ("Left", 6)
    BACK_LEFT = ("Back Left", 7)
    BACK = ("Back", 0)
    BACK_RIGHT = ("Back Right", 1)

    def __init__(self, display: str, octant: int):
        self.display = display
        self.octant = octant

    @property
    def center(self) -> float:
        return self.octant * ORIENTATION_BIN_WIDTH

    @property
    def bounds(self) -> tuple[float, float]:
        """Half-open bin [lo, hi); lo may exceed hi for the wrapping BACK bin."""
        lo = (self.center - ORIENTATION_BIN_WIDTH / 2) % TAU
        hi = (self.center + ORIENTATION_BIN_WIDTH / 2) % TAU
        return lo, hi


class ViewpointClass(Enum):
    """Three elevation bins of width pi/3 over [-pi/2, pi/2]."""

    HORIZONTAL = "Horizontal"
    TOP = "Top"
    BOTTOM = "Bottom"

    def __init__(self, display: str):
        self.display = display

    @property
    def bounds(self) -> tuple[float, float]:
        if self is ViewpointClass.BOTTOM:
            return -math.pi / 2, -math.pi / 6
        if self is ViewpointClass.HORIZONTAL:
            return -math.pi / 6, math.pi / 6
        return math.pi / 6, math.pi / 2


class ShotClass(Enum):
    """Distance bins split at 1.25 and 3.0; boundaries belong to the upper class."""

    CLOSE_UP = "Close-up"
    MEDIUM_SHOT = "Medium-shot"
    LONG_SHOT = "Long-shot"

    def __init__(self, display: str):
        self.display = display

    @property
    def bounds(self) -> tuple[float, float]:
        if self is ShotClass.CLOSE_UP:
            return 0.0, SHOT_CUTOFF_CLOSE
        if self is ShotClass.MEDIUM_SHOT:
            return SHOT_CUTOFF_CLOSE, SHOT_CUTOFF_LONG
        return SHOT_CUTOFF_LONG, math.inf


_ORIENTATION_BY_OCTANT = {cls.octant: cls for cls in OrientationClass}


def classify_orientation(phi: float) -> OrientationClass:
    """Map an azimuth (radians, any finite value) to its orientation bin."""
    if not math.isfinite(phi):
        raise ValueError(f"azimuth must be finite, got {phi!r}")
    octant = int(((phi % TAU) + ORIENTATION_BIN_WIDTH / 2) // ORIENTATION_BIN_WIDTH) % 8
    return _ORIENTATION_BY_OCTANT[octant]


def classify_viewpoint(theta: float) -> ViewpointClass:
    """Map an elevation in [-pi/2, pi/2] to its viewpoint bin.

    Horizontal covers [-pi/6, pi/6]; above is Top, below is Bottom.
    """
    if not math.isfinite(theta) or not -math.pi / 2 <= theta <= math.pi / 2:
        raise ValueError(f"elevation must lie in [-pi/2, pi/2], got {theta!r}")
    if theta > math.pi / 6:
        return ViewpointClass.TOP
    if theta >= -math.pi / 6:
        return ViewpointClass.HORIZONTAL
    return ViewpointClass.BOTTOM


def classify_shot(dist_rel: float) -> ShotClass:
    """Map a relative distance (> 0) to its camera-shot bin."""
    if not math.isfinite(dist_rel) or dist_rel <= 0:
        raise ValueError(f"relative distance must be positive, got {dist_rel!r}")
    if dist_rel < SHOT_CUTOFF_CLOSE:
        return ShotClass.CLOSE_UP
    if dist_rel < SHOT_CUTOFF_LONG:
        return ShotClass.MEDIUM_SHOT
    return ShotClass.LONG_SHOT


@dataclass(frozen=True)
class CameraObjectRelation:
    """Ground-truth triple: azimuth phi, elevation theta, relative distance."""

    phi: float
    theta: float
    dist_rel: float

    def __post_init__(self):
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi!r}")
        object.__setattr__(self, "phi", self.phi % TAU)
        if not math.isfinite(self.theta) or not -math.pi / 2 <= self.theta <= math.pi / 2:
            raise ValueError(f"theta must lie in [-pi/2, pi/2], got {self.theta!r}")
        if not math.isfinite(self.dist_rel) or self.dist_rel <= 0:
            raise ValueError(f"dist_rel must be positive, got {self.dist_rel!r}")

    @property
    def orientation(self) -> OrientationClass:
        return classify_orientation(self.phi)

    @property
    def viewpoint(self) -> ViewpointClass:
        return classify_viewpoint(self.theta)

    @property
    def shot(self) -> ShotClass:
        return classify_shot(self.dist_rel)

    def classes(self) -> tuple[OrientationClass, ViewpointClass, ShotClass]:
        return self.orientation, self.viewpoint, self.shot


@dataclass(frozen=True)
class CameraIntrinsics:
    """Perspective pinhole camera. Millimeters for optics, pixels for output."""

    focal_length: float = 35.0
    sensor_width: float = 36.0
    sensor_height: float = 24.0
    image_width: int = 1024
    image_height: int = 1024

    def __post_init__(self):
        for name in ("focal_length", "sensor_width", "sensor_height", "image_width", "image_height"):
            value = getattr(self, name)
            if not math.isfinite(float(value)) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value!r}")

    @property
    def hfov(self) -> float:
        return 2.0 * math.atan(self.sensor_width / (2.0 * self.focal_length))

    @property
    def vfov(self) -> float:
        return 2.0 * math.atan(self.sensor_height / (2.0 * self.focal_length))

    @property
    def fov_min(self) -> float:
        return min(self.hfov, self.vfov)

    @property
    def frame_slope(self) -> float:
        """2 * tan(fov_min / 2): frame extent per unit distance on the tighter axis."""
        return min(self.sensor_width, self.sensor_height) / self.focal_length


DEFAULT_INTRINSICS = CameraIntrinsics()


def relative_to_world_distance(dist_rel: float, asset_extent: float,
                               intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> float:
    """World distance at which the frame-to-object extent ratio equals dist_rel.

    Uses the tighter field-of-view axis, so dist_rel = 1 means the object's
    maximum extent exactly spans the frame along that axis.
    """
    if not math.isfinite(dist_rel) or dist_rel <= 0:
        raise ValueError(f"dist_rel must be positive, got {dist_rel!r}")
    if not math.isfinite(asset_extent) or asset_extent <= 0:
        raise ValueError(f"asset_extent must be positive, got {asset_extent!r}")
    return dist_rel * asset_extent / intrinsics.frame_slope


def world_to_relative_distance(world_distance: float, asset_extent: float,
                               intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> float:
    if world_distance <= 0 or asset_extent <= 0:
        raise ValueError("distances must be positive")
    return world_distance * intrinsics.frame_slope / asset_extent


def rotate_z(angle: float, vec) -> np.ndarray:
    """Rotate a 3-vector counterclockwise around +z."""
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = np.asarray(vec, dtype=float)
    return np.array([c * x - s * y, s * x + c * y, z])


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Position/target pair with a roll-free frame.

    ``ground_dir`` is the unit ground-plane direction from target to camera;
    it disambiguates the frame when the camera sits exactly at a pole.
    """

    position: np.ndarray
    target: np.ndarray
    up_hint: np.ndarray = field(default_factory=lambda: WORLD_UP.copy())
    ground_dir: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        object.__setattr__(self, "up_hint", np.asarray(self.up_hint, dtype=float))
        if self.ground_dir is not None:
            object.__setattr__(self, "ground_dir", np.asarray(self.ground_dir, dtype=float))
        if np.allclose(self.position, self.target):
            raise ValueError("camera position must differ from target")

    @property
    def look_dir(self) -> np.ndarray:
        v = self.target - self.position
        return v / np.linalg.norm(v)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward); right is always horizontal."""
        forward = self.look_dir
        up_hint = self.up_hint / np.linalg.norm(self.up_hint)
        right = np.cross(forward, up_hint)
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            if self.ground_dir is None:
                raise ValueError("camera looks along up_hint and no ground_dir was provided")
            right = np.cross(up_hint, self.ground_dir)
            right = right / np.linalg.norm(right)
        else:
            right = right / norm
        up = np.cross(right, forward)
        return right, up, forward


def compute_camera_pose(beta: CameraObjectRelation, asset_extent: float, facing,
                        intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> CameraPose:
    """Place the camera so it looks at the origin and realizes ``beta``.

    ``facing`` is the object's horizontal unit facing direction. The camera
    lands on the ground-plane direction d solving facing = R_z(phi) . (-d),
    lifted by the elevation angle; phi = pi therefore means the object faces
    the camera.
    """
    facing = np.asarray(facing, dtype=float)
    norm = np.linalg.norm(facing)
    if norm < 1e-12:
        raise ValueError("facing must be a nonzero vector")
    if abs(facing[2]) > 1e-9 * norm:
        raise ValueError(f"facing must be horizontal, got {facing.tolist()}")
    facing = facing / norm

    ground_dir = -rotate_z(-beta.phi, facing)
    world_distance = relative_to_world_distance(beta.dist_rel, asset_extent, intrinsics)
    position = world_distance * (math.cos(beta.theta) * ground_dir
                                 + math.sin(beta.theta) * WORLD_UP)
    return CameraPose(position=position, target=np.zeros(3), up_hint=WORLD_UP.copy(),
                      ground_dir=ground_dir)


def recover_relation(pose: CameraPose, facing, asset_extent: float,
                     intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> CameraObjectRelation:
    """Invert compute_camera_pose: read (phi, theta, dist_rel) back off a pose."""
    facing = np.asarray(facing, dtype=float)
    facing = facing / np.linalg.norm(facing)
    v = pose.position - pose.target
    world_distance = float(np.linalg.norm(v))
    theta = math.asin(max(-1.0, min(1.0, v[2] / world_distance)))
    horizontal = np.array([v[0], v[1], 0.0])
    h_norm = np.linalg.norm(horizontal)
    if h_norm < 1e-12:
        if pose.ground_dir is None:
            raise ValueError("pose is at a pole and carries no ground_dir")
        d = pose.ground_dir
    else:
        d = horizontal / h_norm
    to_object = -d
    phi = math.atan2(to_object[0] * facing[1] - to_object[1] * facing[0],
                     to_object[0] * facing[0] + to_object[1] * facing[1])
    dist_rel = world_to_relative_distance(world_distance, asset_extent, intrinsics)
    return CameraObjectRelation(phi=phi % TAU, theta=theta, dist_rel=dist_rel)


_DEFAULT_VIEWPOINT_REPS = {
    ViewpointClass.HORIZONTAL: 0.0,
    ViewpointClass.TOP: math.pi / 3,
    ViewpointClass.BOTTOM: -math.pi / 3,
}
_DEFAULT_SHOT_REPS = {
    ShotClass.CLOSE_UP: 1.0,
    ShotClass.MEDIUM_SHOT: 2.0,
    ShotClass.LONG_SHOT: 4.0,
}


@dataclass(frozen=True)
class GridSpec:
    """One representative value per class bin; defaults are bin midpoints."""

    orientation_reps: Mapping[OrientationClass, float] = field(
        default_factory=lambda: {cls: cls.center for cls in OrientationClass})
    viewpoint_reps: Mapping[ViewpointClass, float] = field(
        default_factory=lambda: dict(_DEFAULT_VIEWPOINT_REPS))
    shot_reps: Mapping[ShotClass, float] = field(
        default_factory=lambda: dict(_DEFAULT_SHOT_REPS))

    def __post_init__(self):
        for cls in OrientationClass:
            rep = self.orientation_reps[cls]
            if classify_orientation(rep) is not cls:
                raise ValueError(f"orientation representative {rep!r} falls outside the {cls.display} bin")
        for cls in ViewpointClass:
            rep = self.viewpoint_reps[cls]
            if classify_viewpoint(rep) is not cls:
                raise ValueError(f"viewpoint representative {rep!r} falls outside the {cls.display} bin")
        for cls in ShotClass:
            rep = self.shot_reps[cls]
            if classify_shot(rep) is not cls:
                raise ValueError(f"shot representative {rep!r} falls outside the {cls.display} bin")


def enumerate_relation_grid(spec: Optional[GridSpec] = None) -> list[CameraObjectRelation]:
    """All 8 x 3 x 3 = 72 class triples, one relation each, orientation-major."""
    spec = spec or GridSpec()
    grid = []
    for ocls in OrientationClass:
        for vcls in ViewpointClass:
            for scls in ShotClass:
                grid.append(CameraObjectRelation(
                    phi=spec.orientation_reps[ocls],
                    theta=spec.viewpoint_reps[vcls],
                    dist_rel=spec.shot_reps[scls]))
    return grid


# Bounded ranges used when drawing within the open-ended shot bins.
_SHOT_SAMPLE_RANGES = {
    ShotClass.CLOSE_UP: (0.5, SHOT_CUTOFF_CLOSE),
    ShotClass.MEDIUM_SHOT: (SHOT_CUTOFF_CLOSE, SHOT_CUTOFF_LONG),
    ShotClass.LONG_SHOT: (SHOT_CUTOFF_LONG, 6.0),
}


def sample_relation(rng: np.random.Generator,
                    bin: Optional[tuple[OrientationClass, ViewpointClass, ShotClass]] = None
                    ) -> CameraObjectRelation:
    """Draw a relation, optionally constrained to one class triple.

    Unconstrained draws pick a class triple uniformly first, so every bin is
    equally likely regardless of its width.
    """
    if bin is None:
        ocls = list(OrientationClass)[rng.integers(0, 8)]
        vcls = list(ViewpointClass)[rng.integers(0, 3)]
        scls = list(ShotClass)[rng.integers(0, 3)]
    else:
        ocls, vcls, scls = bin
        if not (isinstance(ocls, OrientationClass) and isinstance(vcls, ViewpointClass)
                and isinstance(scls, ShotClass)):
            raise ValueError(f"invalid class triple {bin!r}")

    phi = float(rng.uniform(ocls.center - ORIENTATION_BIN_WIDTH / 2,
                            ocls.center + ORIENTATION_BIN_WIDTH / 2)) % TAU
    if classify_orientation(phi) is not ocls:  # boundary draw, nudge inward
        phi = ocls.center

    vlo, vhi = vcls.bounds
    for _ in range(100):
        theta = float(rng.uniform(vlo, vhi))
        if classify_viewpoint(theta) is vcls:
            break
    else:
        theta = (vlo + vhi) / 2

    slo, shi = _SHOT_SAMPLE_RANGES[scls]
    for _ in range(100):
        dist_rel = float(rng.uniform(slo, shi))
        if classify_shot(dist_rel) is scls:
            break
    else:
        dist_rel = (slo + shi) / 2

    return CameraObjectRelation(phi=phi, theta=theta, dist_rel=dist_rel)
