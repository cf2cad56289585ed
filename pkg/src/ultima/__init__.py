"""ultima: camera-object relation priors, controlled image generation
requests, and benchmark tooling for spatially grounded VQA datasets."""

__version__ = "0.1.0"

from .geometry import (
    CameraIntrinsics,
    CameraObjectRelation,
    CameraPose,
    OrientationClass,
    ShotClass,
    ViewpointClass,
    classify_orientation,
    classify_shot,
    classify_viewpoint,
    compute_camera_pose,
    enumerate_relation_grid,
    recover_relation,
)

__all__ = [
    "CameraIntrinsics",
    "CameraObjectRelation",
    "CameraPose",
    "OrientationClass",
    "ShotClass",
    "ViewpointClass",
    "classify_orientation",
    "classify_shot",
    "classify_viewpoint",
    "compute_camera_pose",
    "enumerate_relation_grid",
    "recover_relation",
    "__version__",
]
